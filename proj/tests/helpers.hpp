#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "lveg/gm.hpp"

namespace testing {

inline double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * M_PI * var);
}

// Composite Simpson rule on [lo, hi] with n (even) intervals.
template <class F>
double simpson(F f, double lo, double hi, int n = 4000) {
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Random mixture over the given slots, |mu| <= 5 and var in [0.1, 5].
inline lveg::GaussianMixture random_mixture(std::mt19937_64& rng, std::vector<lveg::Slot> slots,
                                            int k) {
  lveg::GaussianMixture f(std::move(slots));
  std::uniform_real_distribution<double> w(-1.0, 1.0), mu(-5.0, 5.0), var(0.1, 5.0);
  for (int c = 0; c < k; ++c) {
    std::vector<double> m(f.dims()), v(f.dims());
    for (auto& x : m) x = mu(rng);
    for (auto& x : v) x = var(rng);
    f.add_component(w(rng), m, v);
  }
  return f;
}

}  // namespace testing
