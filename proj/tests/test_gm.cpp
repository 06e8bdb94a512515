#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "helpers.hpp"
#include "lveg/error.hpp"
#include "lveg/gm.hpp"

using namespace lveg;
using testing::normal_pdf;
using testing::random_mixture;
using testing::rel_err;
using testing::simpson;

namespace {

GaussianMixture normal1(const std::string& slot, double w, double mu, double var) {
  GaussianMixture f({{slot, 1}});
  const double m[] = {mu}, v[] = {var};
  f.add_component(std::log(w), m, v);
  return f;
}

// Integral of f*g for diagonal mixtures over the same slots, one dimension at a time.
double quadrature_overlap(const GaussianMixture& f, const GaussianMixture& g) {
  double total = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a)
    for (std::size_t b = 0; b < g.size(); ++b) {
      double prod = std::exp(f.log_weight(a) + g.log_weight(b));
      for (std::size_t d = 0; d < f.dims(); ++d) {
        const double m1 = f.mean(a)[d], v1 = f.variance(a)[d];
        const double m2 = g.mean(b)[d], v2 = g.variance(b)[d];
        prod *= simpson([&](double x) { return normal_pdf(x, m1, v1) * normal_pdf(x, m2, v2); },
                        -25.0, 25.0, 8000);
      }
      total += prod;
    }
  return total;
}

}  // namespace

TEST_CASE("product with the unit element is the identity") {
  std::mt19937_64 rng(3);
  const GaussianMixture f = random_mixture(rng, {{"x", 2}}, 3);
  const GaussianMixture p = product(GaussianMixture::unit(), f);
  REQUIRE(p.size() == f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    CHECK(p.log_weight(k) == doctest::Approx(f.log_weight(k)).epsilon(1e-15));
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(p.mean(k)[d] == f.mean(k)[d]);
      CHECK(p.variance(k)[d] == f.variance(k)[d]);
    }
  }
}

TEST_CASE("product of two unit normals matches quadrature") {
  const auto f = normal1("x", 1.0, 0.0, 1.0);
  const auto g = normal1("x", 1.0, 0.0, 1.0);
  const auto p = product(f, g);
  REQUIRE(p.size() == 1);
  const double mass = simpson([](double x) { return normal_pdf(x, 0, 1) * normal_pdf(x, 0, 1); }, -10, 10);
  const double first = simpson([](double x) { return x * normal_pdf(x, 0, 1) * normal_pdf(x, 0, 1); }, -10, 10);
  const double second = simpson([](double x) { return x * x * normal_pdf(x, 0, 1) * normal_pdf(x, 0, 1); }, -10, 10);
  CHECK(std::exp(p.log_weight(0)) == doctest::Approx(mass).epsilon(1e-9));
  CHECK(std::exp(p.log_weight(0)) == doctest::Approx(0.28209).epsilon(1e-4));
  CHECK(p.mean(0)[0] == doctest::Approx(first / mass));
  CHECK(p.variance(0)[0] == doctest::Approx(second / mass).epsilon(1e-9));
}

TEST_CASE("product of shifted normals matches quadrature") {
  const auto p = product(normal1("x", 1.0, 0.0, 1.0), normal1("x", 1.0, 1.0, 1.0));
  const auto fg = [](double x) { return normal_pdf(x, 0, 1) * normal_pdf(x, 1, 1); };
  const double mass = simpson(fg, -10, 10);
  const double mean = simpson([&](double x) { return x * fg(x); }, -10, 10) / mass;
  const double var = simpson([&](double x) { return (x - mean) * (x - mean) * fg(x); }, -10, 10) / mass;
  CHECK(std::exp(p.log_weight(0)) == doctest::Approx(mass).epsilon(1e-9));
  CHECK(std::exp(p.log_weight(0)) == doctest::Approx(0.21970).epsilon(1e-4));
  CHECK(p.mean(0)[0] == doctest::Approx(mean).epsilon(1e-9));
  CHECK(p.variance(0)[0] == doctest::Approx(var).epsilon(1e-9));
}

TEST_CASE("product slot layout and width checks") {
  std::mt19937_64 rng(5);
  const auto f = random_mixture(rng, {{"a", 1}, {"b", 2}}, 2);
  const auto g = random_mixture(rng, {{"b", 2}, {"c", 1}}, 3);
  const auto p = product(f, g);
  REQUIRE(p.num_slots() == 3);
  CHECK(p.slots()[0].name == "a");
  CHECK(p.slots()[1].name == "b");
  CHECK(p.slots()[2].name == "c");
  CHECK(p.size() == 6);
  const auto bad = random_mixture(rng, {{"b", 1}}, 1);
  CHECK_THROWS_AS(product(f, bad), DimensionError);
}

TEST_CASE("full marginal of a product equals quadrature on random mixtures") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 12; ++trial) {
    const int dims = 1 + trial % 3;
    const auto f = random_mixture(rng, {{"x", dims}}, 1 + trial % 3);
    const auto g = random_mixture(rng, {{"x", dims}}, 2);
    const double analytic = total_mass(marginalize(product(f, g), "x"));
    CHECK(rel_err(analytic, quadrature_overlap(f, g)) < 1e-6);
  }
}

TEST_CASE("product commutes up to component order") {
  std::mt19937_64 rng(12);
  const auto f = random_mixture(rng, {{"x", 2}}, 2);
  const auto g = random_mixture(rng, {{"x", 2}}, 3);
  const auto fg = product(f, g), gf = product(g, f);
  CHECK(rel_err(total_mass(fg), total_mass(gf)) < 1e-12);
  std::normal_distribution<double> n(0, 2);
  for (int i = 0; i < 10; ++i) {
    const double x[] = {n(rng), n(rng)};
    CHECK(rel_err(fg.log_density(x), gf.log_density(x)) < 1e-10);
  }
  const auto h = random_mixture(rng, {{"x", 2}}, 2);
  CHECK(rel_err(total_mass(product(product(f, g), h)), total_mass(product(f, product(g, h)))) < 1e-10);
}

TEST_CASE("marginalize drops dims and keeps weights") {
  std::mt19937_64 rng(2);
  const auto f = random_mixture(rng, {{"a", 2}, {"b", 1}}, 3);
  const auto m = marginalize(f, "b");
  REQUIRE(m.dims() == 2);
  for (std::size_t k = 0; k < f.size(); ++k) {
    CHECK(m.log_weight(k) == f.log_weight(k));
    CHECK(m.mean(k)[1] == f.mean(k)[1]);
    CHECK(m.variance(k)[0] == f.variance(k)[0]);
  }
  GaussianMixture two({{"x", 1}});
  const double z[] = {0.0}, one[] = {1.0};
  two.add_component(std::log(0.3), z, one);
  two.add_component(std::log(0.7), one, one);
  const auto s = marginalize(two, "x");
  CHECK(s.num_slots() == 0);
  CHECK(total_mass(s) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(marginalize(GaussianMixture({{"x", 1}}), "x").empty());
  CHECK_THROWS_AS(marginalize(f, "nope"), LookupError);
}

TEST_CASE("marginalize commutes with a product over disjoint slots") {
  std::mt19937_64 rng(9);
  const auto f = random_mixture(rng, {{"a", 1}}, 2);
  const auto g = random_mixture(rng, {{"b", 1}}, 3);
  const auto lhs = marginalize(product(f, g), "b");
  std::normal_distribution<double> n(0, 2);
  for (int i = 0; i < 8; ++i) {
    const double x[] = {n(rng)};
    CHECK(rel_err(std::exp(lhs.log_density(x)), std::exp(f.log_density(x)) * total_mass(g)) < 1e-10);
  }
}

TEST_CASE("total mass") {
  CHECK(total_mass(GaussianMixture::unit()) == 1.0);
  GaussianMixture f({{"x", 1}});
  const double z[] = {0.0}, one[] = {1.0};
  for (int k = 0; k < 4; ++k) f.add_component(std::log(2.0), z, one);
  CHECK(total_mass(f) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(log_total_mass(GaussianMixture({{"x", 1}})) == -INFINITY);
}

TEST_CASE("moments examples") {
  auto m = moments(normal1("x", 1.0, 2.0, 3.0), 0);
  CHECK(m.mass == doctest::Approx(1.0));
  CHECK(m.first == doctest::Approx(2.0));
  CHECK(m.second == doctest::Approx(7.0));
  m = moments(normal1("x", 0.5, 0.0, 1.0), 0);
  CHECK(m.mass == doctest::Approx(0.5));
  CHECK(m.first == doctest::Approx(0.0));
  CHECK(m.second == doctest::Approx(0.5));
  GaussianMixture two({{"x", 1}});
  const double p[] = {1.0}, q[] = {-1.0}, one[] = {1.0};
  two.add_component(0.0, p, one);
  two.add_component(0.0, q, one);
  const auto dens = [&](double x) { return normal_pdf(x, 1, 1) + normal_pdf(x, -1, 1); };
  m = moments(two, 0);
  CHECK(m.mass == doctest::Approx(simpson(dens, -15, 15)).epsilon(1e-9));
  CHECK(m.first == doctest::Approx(0.0));
  CHECK(m.second == doctest::Approx(simpson([&](double x) { return x * x * dens(x); }, -15, 15)).epsilon(1e-9));
  CHECK(m.second == doctest::Approx(4.0));
  CHECK_THROWS_AS(moments(two, 1), DimensionError);
}

TEST_CASE("moments agree with quadrature on random mixtures") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_mixture(rng, {{"x", 2}}, 3);
    for (std::size_t d = 0; d < 2; ++d) {
      auto marginal = [&](double x, int power) {
        double s = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k)
          s += std::exp(f.log_weight(k)) * normal_pdf(x, f.mean(k)[d], f.variance(k)[d]);
        return s * std::pow(x, power);
      };
      const Moments m = moments(f, d);
      CHECK(rel_err(m.mass, simpson([&](double x) { return marginal(x, 0); }, -30, 30, 12000)) < 1e-6);
      CHECK(rel_err(m.second, simpson([&](double x) { return marginal(x, 2); }, -30, 30, 12000)) < 1e-6);
      const double first = simpson([&](double x) { return marginal(x, 1); }, -30, 30, 12000);
      CHECK(std::abs(m.first - first) < 1e-6 * std::max(1.0, std::abs(first)));
    }
  }
}

TEST_CASE("pruning arithmetic") {
  CHECK(allowed_components(30, PruneConfig::kmin_kmax(40, 50, 0.35)) == 30);
  CHECK(allowed_components(100, PruneConfig::kmin_kmax(20, 50, 0.35)) == 25);
  CHECK(allowed_components(1000000, PruneConfig::kmin_kmax(20, 50, 0.35)) == 50);
  CHECK(allowed_components(7, PruneConfig::hard(5)) == 5);
  CHECK(allowed_components(3, PruneConfig::hard(5)) == 3);
  CHECK(allowed_components(1000, PruneConfig::disabled()) == 1000);
}

TEST_CASE("pruning keeps the heaviest components in their original order") {
  std::mt19937_64 rng(4);
  const auto f = random_mixture(rng, {{"x", 1}}, 100);
  const auto p = prune_components(f, 20, 50, 0.35);
  REQUIRE(p.size() == 25);
  CHECK(total_mass(p) <= total_mass(f));
  std::vector<double> w(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) w[k] = f.log_weight(k);
  std::vector<double> sorted = w;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double cut = sorted[24];
  std::size_t j = 0;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (w[k] >= cut) {
      REQUIRE(j < p.size());
      CHECK(p.log_weight(j) == w[k]);
      CHECK(p.mean(j)[0] == f.mean(k)[0]);
      ++j;
    }
  CHECK(j == 25);
  const auto small = random_mixture(rng, {{"x", 1}}, 30);
  CHECK(prune_components(small, 40, 50, 0.35).size() == 30);
}

TEST_CASE("pruning ties go to the earliest components") {
  GaussianMixture f({{"x", 1}});
  const double one[] = {1.0};
  for (int k = 0; k < 30; ++k) {
    const double m[] = {static_cast<double>(k)};
    f.add_component(0.0, m, one);
  }
  const auto p = prune_components(f, PruneConfig::hard(4));
  REQUIRE(p.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(p.mean(k)[0] == static_cast<double>(k));
}

TEST_CASE("scale") {
  CHECK(total_mass(scale(GaussianMixture::unit(), std::log(2.0))) == doctest::Approx(2.0));
  std::mt19937_64 rng(8);
  const auto f = random_mixture(rng, {{"x", 2}}, 3);
  const auto same = scale(f, 0.0);
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(same.log_weight(k) == f.log_weight(k));
  CHECK(rel_err(total_mass(scale(f, std::log(10.0))), 10.0 * total_mass(f)) < 1e-12);
}

TEST_CASE("rename, coalesce and the accumulator") {
  std::mt19937_64 rng(6);
  const auto f = random_mixture(rng, {{"a", 1}, {"b", 1}}, 2);
  const auto r = rename_slots(f, {"left", "right"});
  CHECK(r.slots()[0].name == "left");
  CHECK(r.slot_index("right") == 1);
  CHECK_THROWS_AS(rename_slots(f, {"x"}), DimensionError);

  GaussianMixture dup({{"x", 1}});
  const double z[] = {0.0}, one[] = {1.0}, two[] = {2.0};
  dup.add_component(std::log(0.25), z, one);
  dup.add_component(std::log(0.5), two, one);
  dup.add_component(std::log(0.75), z, one);
  const auto c = coalesce(dup);
  REQUIRE(c.size() == 2);
  CHECK(std::exp(c.log_weight(0)) == doctest::Approx(1.0));
  CHECK(c.mean(1)[0] == 2.0);

  MixtureAccumulator acc({{"x", 1}});
  acc.add(dup);
  acc.add(GaussianMixture());
  acc.add(dup, std::log(2.0));
  const auto sum = acc.release();
  REQUIRE(sum.size() == 2);
  CHECK(total_mass(sum) == doctest::Approx(3.0 * 1.5));
  MixtureAccumulator wide({{"x", 2}});
  CHECK_THROWS_AS(wide.add(dup), DimensionError);
}

TEST_CASE("contract equals product then marginalize") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 2;
    const auto w = random_mixture(rng, {{"parent", d}, {"left", d}, {"right", d}}, 2);
    const auto b = random_mixture(rng, {{"x", d}}, 2);
    const auto c = random_mixture(rng, {{"x", d}}, 3);
    const SlotFactor fs[] = {SlotFactor::keep(), SlotFactor::of(b), SlotFactor::of(c)};
    const auto fused = contract(w, fs);
    const auto slow = marginalize(
        marginalize(product(product(w, rename_slots(b, {"left"})), rename_slots(c, {"right"})), "left"),
        "right");
    CHECK(fused.size() == w.size());
    CHECK(rel_err(total_mass(fused), total_mass(slow)) < 1e-12);
    std::normal_distribution<double> n(0, 1);
    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = n(rng);
    CHECK(rel_err(fused.log_density(x), slow.log_density(x)) < 1e-10);

    const auto a = random_mixture(rng, {{"x", d}}, 2);
    const SlotFactor all[] = {SlotFactor::of(a), SlotFactor::of(b), SlotFactor::unit()};
    const double lc = log_contract(w, all);
    const auto ref = product(product(w, rename_slots(a, {"parent"})), rename_slots(b, {"left"}));
    CHECK(rel_err(lc, log_total_mass(ref)) < 1e-10);
  }
}

TEST_CASE("invalid components are rejected") {
  GaussianMixture f({{"x", 2}});
  const double m[] = {0.0, 0.0}, bad[] = {1.0, 0.0}, short_m[] = {0.0};
  CHECK_THROWS_AS(f.add_component(0.0, m, bad), DimensionError);
  CHECK_THROWS_AS(f.add_component(0.0, short_m, short_m), DimensionError);
}
