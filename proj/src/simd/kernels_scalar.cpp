#include <algorithm>
#include <cmath>

#include "drcrt/simd.hpp"

namespace drcrt::simd {

namespace {

inline double phi(double x, Link link) {
  return link.kind == Link::Gamma ? link.theta * std::log1p(x / link.theta) : x;
}

inline double dphi(double x, Link link) {
  return link.kind == Link::Gamma ? 1.0 / (1.0 + x / link.theta) : 1.0;
}

void exp_array(const double* x, std::size_t n, double* out) {
  for (std::size_t k = 0; k < n; ++k) out[k] = std::exp(x[k]);
}

void survival(const double* h, std::size_t n, double scale, Link link, double* out) {
  for (std::size_t k = 0; k < n; ++k) out[k] = std::exp(-phi(h[k] * scale, link));
}

void accumulate_exp(const double* t, std::size_t n, double rate, double* acc) {
  for (std::size_t k = 0; k < n; ++k) acc[k] += std::exp(-rate * t[k]);
}

std::size_t augmentation(const double* hcl, const double* hc, const double* ho, const double* dh,
                         std::size_t n, double c, Link link_c, double b, Link link_o, double max_phi_c,
                         double* out) {
  std::size_t clamped = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double xc = hc[k] * c;
    double pc = phi(xc, link_c);
    if (pc > max_phi_c) {
      pc = max_phi_c;
      ++clamped;
    }
    out[k] = dphi(hcl[k] * c, link_c) * dh[k] * c * std::exp(pc + phi(ho[k] * b, link_o));
  }
  return clamped;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", exp_array, survival, accumulate_exp, augmentation};
  return table;
}

}  // namespace drcrt::simd
