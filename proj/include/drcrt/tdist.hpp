#pragma once

namespace drcrt {

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student t distribution with `df` > 0 degrees of freedom.
double student_t_cdf(double x, double df);
double student_t_pdf(double x, double df);
/// Inverse CDF, accurate to about 1e-12 relative for p in (1e-12, 1 - 1e-12).
double student_t_quantile(double p, double df);

}  // namespace drcrt
