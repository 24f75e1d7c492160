#pragma once

#include <cstddef>
#include <string_view>

namespace drcrt::simd {

/// Maps a conditional cumulative hazard x = H0(t)·r to the marginal
/// cumulative hazard phi(x). Exponential: phi(x) = x. Gamma frailty with
/// shape=rate=theta: phi(x) = theta·log1p(x/theta), phi'(x) = theta/(theta+x).
struct Link {
  enum Kind : int { Exponential = 0, Gamma = 1 };
  Kind kind = Exponential;
  double theta = 0.0;

  static Link exponential() { return {}; }
  static Link gamma(double theta) { return {Gamma, theta}; }
};

/// Hot inner loops. Every variant must agree with the scalar reference to
/// a few ulps on the documented domain (finite arguments, H >= 0).
struct KernelTable {
  std::string_view name;

  // out[k] = exp(x[k])
  void (*exp_array)(const double* x, std::size_t n, double* out);

  // out[k] = exp(-phi(h[k] * scale))
  void (*survival)(const double* h, std::size_t n, double scale, Link link, double* out);

  // acc[k] += exp(-rate * t[k])
  void (*accumulate_exp)(const double* t, std::size_t n, double rate, double* acc);

  // Censoring-martingale compensator weights:
  //   out[k] = phi_c'(hcl[k]·c)·dh[k]·c · exp(min(phi_c(hc[k]·c), max_phi_c) + phi_o(ho[k]·b))
  // i.e. dH(u_k) / (K(u_k) S(u_k)) where hc, ho are the cumulative baseline
  // hazards at the jump u_k and hcl the censoring one just before it. Returns
  // the number of entries whose censoring survival was floored.
  std::size_t (*augmentation)(const double* hcl, const double* hc, const double* ho, const double* dh,
                              std::size_t n, double c, Link link_c, double b, Link link_o,
                              double max_phi_c, double* out);
};

const KernelTable& scalar_kernels();
/// nullptr when the AVX2 variant is not compiled in.
const KernelTable* avx2_kernels();

/// Kernel table picked once at startup: AVX2+FMA when the CPU supports it,
/// otherwise scalar. DRCRT_SIMD=scalar|avx2 overrides the choice.
const KernelTable& kernels();

}  // namespace drcrt::simd
