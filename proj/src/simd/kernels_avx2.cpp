// AVX2/FMA variants of the kernel table. exp/log follow the Cephes rational
// approximations (about 1 ulp on the kernels' domain). Partial tail vectors
// are padded through a stack buffer so every element takes the vector path.

#include <immintrin.h>

#include <algorithm>
#include <cstring>

#include "drcrt/simd.hpp"

namespace drcrt::simd {

namespace {

inline __m256d set1(double v) { return _mm256_set1_pd(v); }

// 2^k for integral k in [-1022, 1023] held as double.
inline __m256d pow2(__m256d k) {
  const __m256d biased = _mm256_add_pd(k, set1(1023.0 + 0x1.8p52));
  return _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_castpd_si256(biased), 52));
}

inline __m256d exp4(__m256d x) {
  const __m256d underflow = _mm256_cmp_pd(x, set1(-745.13), _CMP_LT_OQ);
  const __m256d overflow = _mm256_cmp_pd(x, set1(709.78), _CMP_GT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, set1(709.78)), set1(-745.13));

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, set1(1.4426950408889634073599)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(fx, set1(6.93145751953125E-1), x);
  r = _mm256_fnmadd_pd(fx, set1(1.42860682030941723212E-6), r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d px = _mm256_fmadd_pd(set1(1.26177193074810590878E-4), rr, set1(3.02994407707441961300E-2));
  px = _mm256_fmadd_pd(px, rr, set1(9.99999999999999999910E-1));
  px = _mm256_mul_pd(px, r);
  __m256d qx = _mm256_fmadd_pd(set1(3.00198505138664455042E-6), rr, set1(2.52448340349684104192E-3));
  qx = _mm256_fmadd_pd(qx, rr, set1(2.27265548208155028766E-1));
  qx = _mm256_fmadd_pd(qx, rr, set1(2.00000000000000000009E0));

  __m256d e = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  e = _mm256_fmadd_pd(e, set1(2.0), set1(1.0));

  // Split the scaling so that results in the subnormal range stay exact-ish.
  const __m256d n1 = _mm256_floor_pd(_mm256_mul_pd(fx, set1(0.5)));
  const __m256d n2 = _mm256_sub_pd(fx, n1);
  e = _mm256_mul_pd(_mm256_mul_pd(e, pow2(n1)), pow2(n2));

  e = _mm256_andnot_pd(underflow, e);
  return _mm256_blendv_pd(e, set1(__builtin_inf()), overflow);
}

// Natural log for positive normal arguments.
inline __m256d log4(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i two52 = _mm256_castpd_si256(set1(0x1p52));
  const __m256d biased = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(bits, 52), two52)), set1(0x1p52));
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i half = _mm256_castpd_si256(set1(0.5));
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), half));
  __m256d e = _mm256_sub_pd(biased, set1(1022.0));

  const __m256d small = _mm256_cmp_pd(m, set1(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, set1(1.0)));
  m = _mm256_add_pd(m, _mm256_and_pd(small, m));

  const __m256d t = _mm256_sub_pd(m, set1(1.0));
  const __m256d z = _mm256_mul_pd(t, t);

  __m256d p = _mm256_fmadd_pd(set1(1.01875663804580931796E-4), t, set1(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, t, set1(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, t, set1(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, t, set1(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, t, set1(7.70838733755885391666E0));
  __m256d q = _mm256_add_pd(t, set1(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, t, set1(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, t, set1(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, t, set1(7.11544750618563894466E1));
  q = _mm256_fmadd_pd(q, t, set1(2.31251620126765340583E1));

  __m256d y = _mm256_mul_pd(t, _mm256_div_pd(_mm256_mul_pd(z, p), q));
  y = _mm256_fnmadd_pd(e, set1(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(z, set1(0.5), y);
  __m256d res = _mm256_add_pd(t, y);
  return _mm256_fmadd_pd(e, set1(0.693359375), res);
}

// log1p(y) for y >= 0 via log(1+y) plus a first-order correction for the
// rounding of 1+y.
inline __m256d log1p4(__m256d y) {
  const __m256d u = _mm256_add_pd(set1(1.0), y);
  const __m256d corr = _mm256_div_pd(_mm256_sub_pd(y, _mm256_sub_pd(u, set1(1.0))), u);
  return _mm256_add_pd(log4(u), corr);
}

inline __m256d phi4(__m256d x, Link link) {
  if (link.kind != Link::Gamma) return x;
  const __m256d th = set1(link.theta);
  return _mm256_mul_pd(th, log1p4(_mm256_div_pd(x, th)));
}

inline __m256d dphi4(__m256d x, Link link) {
  if (link.kind != Link::Gamma) return set1(1.0);
  return _mm256_div_pd(set1(1.0), _mm256_add_pd(set1(1.0), _mm256_div_pd(x, set1(link.theta))));
}

// Loads n < 4 trailing elements, padding with `fill`.
inline __m256d load_tail(const double* p, std::size_t n, double fill) {
  alignas(32) double buf[4] = {fill, fill, fill, fill};
  std::memcpy(buf, p, n * sizeof(double));
  return _mm256_load_pd(buf);
}

inline void store_tail(double* p, std::size_t n, __m256d v) {
  alignas(32) double buf[4];
  _mm256_store_pd(buf, v);
  std::memcpy(p, buf, n * sizeof(double));
}

void exp_array(const double* x, std::size_t n, double* out) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) _mm256_storeu_pd(out + k, exp4(_mm256_loadu_pd(x + k)));
  if (k < n) store_tail(out + k, n - k, exp4(load_tail(x + k, n - k, 0.0)));
}

void survival(const double* h, std::size_t n, double scale, Link link, double* out) {
  const __m256d s = set1(scale);
  auto body = [&](__m256d hv) {
    return exp4(_mm256_sub_pd(_mm256_setzero_pd(), phi4(_mm256_mul_pd(hv, s), link)));
  };
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) _mm256_storeu_pd(out + k, body(_mm256_loadu_pd(h + k)));
  if (k < n) store_tail(out + k, n - k, body(load_tail(h + k, n - k, 0.0)));
}

void accumulate_exp(const double* t, std::size_t n, double rate, double* acc) {
  const __m256d nr = set1(-rate);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d v = exp4(_mm256_mul_pd(nr, _mm256_loadu_pd(t + k)));
    _mm256_storeu_pd(acc + k, _mm256_add_pd(_mm256_loadu_pd(acc + k), v));
  }
  if (k < n) {
    const __m256d v = exp4(_mm256_mul_pd(nr, load_tail(t + k, n - k, 0.0)));
    store_tail(acc + k, n - k, _mm256_add_pd(load_tail(acc + k, n - k, 0.0), v));
  }
}

std::size_t augmentation(const double* hcl, const double* hc, const double* ho, const double* dh,
                         std::size_t n, double c, Link link_c, double b, Link link_o, double max_phi_c,
                         double* out) {
  const __m256d cv = set1(c), bv = set1(b), cap = set1(max_phi_c);
  std::size_t clamped = 0;
  auto body = [&](__m256d hclv, __m256d hcv, __m256d hov, __m256d dhv, int lanes) {
    const __m256d xc = _mm256_mul_pd(hcv, cv);
    __m256d pc = phi4(xc, link_c);
    const __m256d over = _mm256_cmp_pd(pc, cap, _CMP_GT_OQ);
    clamped += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(over) & ((1 << lanes) - 1)));
    pc = _mm256_min_pd(pc, cap);
    const __m256d w = exp4(_mm256_add_pd(pc, phi4(_mm256_mul_pd(hov, bv), link_o)));
    const __m256d slope = dphi4(_mm256_mul_pd(hclv, cv), link_c);
    return _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(slope, dhv), cv), w);
  };
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4)
    _mm256_storeu_pd(out + k, body(_mm256_loadu_pd(hcl + k), _mm256_loadu_pd(hc + k),
                                   _mm256_loadu_pd(ho + k), _mm256_loadu_pd(dh + k), 4));
  if (k < n) {
    const std::size_t r = n - k;
    store_tail(out + k, r, body(load_tail(hcl + k, r, 0.0), load_tail(hc + k, r, 0.0),
                                load_tail(ho + k, r, 0.0), load_tail(dh + k, r, 0.0), static_cast<int>(r)));
  }
  return clamped;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", exp_array, survival, accumulate_exp, augmentation};
  return &table;
}

}  // namespace drcrt::simd
