#include <cmath>
#include <vector>

#include "doctest.h"
#include "generators.hpp"

#include "drcrt/simd.hpp"

using namespace drcrt;
using simd::Link;

namespace {

double rel(double a, double b) {
  if (a == b) return 0.0;
  return std::abs(a - b) / std::max(std::abs(a), std::abs(b));
}

constexpr double kTol = 1e-14;

// exp(-y) inherits the rounding of y amplified by |y|, so tolerate a few ulps of the exponent.
bool close_in_exponent(double a, double b) {
  const double y = a > 0.0 ? std::abs(std::log(a)) : 0.0;
  return rel(a, b) <= 4.0 * 2.220446049250313e-16 * (4.0 + y);
}

std::vector<double> cumulative(testing::Gen& g, std::size_t n, double scale) {
  std::vector<double> h(n);
  double acc = 0.0;
  for (auto& v : h) v = acc += g.uniform(0.0, scale);
  return h;
}

}  // namespace

TEST_CASE("runtime selection honours the override") {
  const auto& k = simd::kernels();
  CHECK((k.name == simd::scalar_kernels().name || (simd::avx2_kernels() && k.name == simd::avx2_kernels()->name)));
}

TEST_CASE("vector kernels match the scalar reference") {
  const simd::KernelTable* fast = simd::avx2_kernels();
  if (!fast) {
    MESSAGE("AVX2 variant not compiled in");
    return;
  }
  __builtin_cpu_init();
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) {
    MESSAGE("CPU lacks AVX2/FMA");
    return;
  }
  const auto& ref = simd::scalar_kernels();
  testing::Gen g(167);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = std::size_t(g.integer(0, 67));

    std::vector<double> x(n), a(n), b(n);
    for (auto& v : x) v = g.uniform(-700.0, 50.0);
    ref.exp_array(x.data(), n, a.data());
    fast->exp_array(x.data(), n, b.data());
    for (std::size_t k = 0; k < n; ++k) CHECK(rel(a[k], b[k]) <= kTol);

    const auto h = cumulative(g, n, 0.3);
    const double scale = std::exp(g.uniform(-3.0, 3.0));
    for (Link link : {Link::exponential(), Link::gamma(std::exp(g.uniform(-4.0, 8.0)))}) {
      ref.survival(h.data(), n, scale, link, a.data());
      fast->survival(h.data(), n, scale, link, b.data());
      for (std::size_t k = 0; k < n; ++k) CHECK(close_in_exponent(a[k], b[k]));
    }

    std::vector<double> t(n);
    for (auto& v : t) v = g.uniform(0.0, 5.0);
    std::vector<double> acc_a(n, 0.25), acc_b(n, 0.25);
    const double rate = g.uniform(0.0, 10.0);
    ref.accumulate_exp(t.data(), n, rate, acc_a.data());
    fast->accumulate_exp(t.data(), n, rate, acc_b.data());
    for (std::size_t k = 0; k < n; ++k) CHECK(rel(acc_a[k], acc_b[k]) <= kTol);

    std::vector<double> hc = cumulative(g, n, rep % 5 == 0 ? 5.0 : 0.2), ho = cumulative(g, n, 0.2), hcl(n), dh(n);
    for (std::size_t k = 0; k < n; ++k) {
      hcl[k] = k ? hc[k - 1] : 0.0;
      dh[k] = hc[k] - hcl[k];
    }
    const double c = std::exp(g.uniform(-2.0, 2.0)), bo = std::exp(g.uniform(-2.0, 2.0));
    const double max_phi = -std::log(1e-8);
    for (Link lc : {Link::exponential(), Link::gamma(std::exp(g.uniform(-2.0, 4.0)))}) {
      for (Link lo : {Link::exponential(), Link::gamma(std::exp(g.uniform(-2.0, 4.0)))}) {
        const auto na = ref.augmentation(hcl.data(), hc.data(), ho.data(), dh.data(), n, c, lc, bo, lo, max_phi, a.data());
        const auto nb = fast->augmentation(hcl.data(), hc.data(), ho.data(), dh.data(), n, c, lc, bo, lo, max_phi, b.data());
        CHECK(na == nb);
        for (std::size_t k = 0; k < n; ++k) CHECK(close_in_exponent(a[k], b[k]));
      }
    }
  }
}
