#pragma once

// Gaussian mixtures with diagonal covariances over named latent-vector slots.
//
// A mixture f(x) = sum_k rho_k N(x | mu_k, diag(var_k)) where x is the
// concatenation of its slots. Weights are stored as log(rho_k). A mixture
// without slots is a scalar (sum_k rho_k); a mixture without components is
// the zero function.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lveg {

struct Slot {
  std::string name;
  int width = 1;

  friend bool operator==(const Slot&, const Slot&) = default;
};

struct GaussianComponent {
  double log_weight = 0.0;
  std::vector<double> mean;
  std::vector<double> variance;
};

class GaussianMixture {
 public:
  GaussianMixture() = default;
  explicit GaussianMixture(std::vector<Slot> slots);

  // Zero-slot mixture with one component of weight 1.
  static GaussianMixture unit();
  static GaussianMixture scalar(double log_value);

  const std::vector<Slot>& slots() const { return slots_; }
  std::size_t num_slots() const { return slots_.size(); }
  std::size_t dims() const { return dims_; }
  std::size_t size() const { return log_weights_.size(); }
  bool empty() const { return log_weights_.empty(); }

  // -1 when absent.
  int slot_index(std::string_view name) const;
  std::size_t slot_offset(std::size_t slot) const;

  double log_weight(std::size_t k) const { return log_weights_[k]; }
  std::span<const double> mean(std::size_t k) const {
    return {means_.data() + k * dims_, dims_};
  }
  std::span<const double> variance(std::size_t k) const {
    return {variances_.data() + k * dims_, dims_};
  }
  GaussianComponent component(std::size_t k) const;

  std::span<double> mutable_log_weights() { return log_weights_; }
  std::span<double> mutable_mean(std::size_t k) { return {means_.data() + k * dims_, dims_}; }
  std::span<double> mutable_variance(std::size_t k) {
    return {variances_.data() + k * dims_, dims_};
  }

  // Throws DimensionError on a length mismatch or a non-positive variance.
  void add_component(double log_weight, std::span<const double> mean,
                     std::span<const double> variance);
  void add_component(const GaussianComponent& c) {
    add_component(c.log_weight, c.mean, c.variance);
  }
  void reserve(std::size_t n);

  // Pointwise log density at x (length dims()).
  double log_density(std::span<const double> x) const;

 private:
  std::vector<Slot> slots_;
  std::size_t dims_ = 0;
  std::vector<double> log_weights_;
  std::vector<double> means_;
  std::vector<double> variances_;
};

// Pointwise product. Slots sharing a name are identified; the result keeps
// f's slot order followed by g's new slots.
GaussianMixture product(const GaussianMixture& f, const GaussianMixture& g);

// Integrates one slot out.
GaussianMixture marginalize(const GaussianMixture& f, std::string_view slot);

// log of the integral of f over all of its slots; -inf for the zero function.
double log_total_mass(const GaussianMixture& f);
double total_mass(const GaussianMixture& f);

struct Moments {
  double mass = 0.0;
  double first = 0.0;
  double second = 0.0;
};

// (int f, int f x_d, int f x_d^2), analytically.
Moments moments(const GaussianMixture& f, std::size_t dim);

GaussianMixture scale(const GaussianMixture& f, double log_c);

// Same function with slots relabelled positionally; widths must match.
GaussianMixture rename_slots(const GaussianMixture& f, const std::vector<std::string>& names);

// Merges components whose means and variances are bitwise identical.
GaussianMixture coalesce(const GaussianMixture& f);

struct PruneConfig {
  enum class Mode { none, kmin_kmax, hard };
  Mode mode = Mode::none;
  std::size_t k_min = 20;
  std::size_t k_max = 50;
  double theta = 0.35;
  std::size_t k_hard = 40;

  static PruneConfig disabled() { return {}; }
  static PruneConfig kmin_kmax(std::size_t k_min, std::size_t k_max, double theta) {
    return {Mode::kmin_kmax, k_min, k_max, theta, 0};
  }
  static PruneConfig hard(std::size_t k_hard) { return {Mode::hard, 0, 0, 0.0, k_hard}; }
};

// Number of components kept for a score with kc components.
std::size_t allowed_components(std::size_t kc, const PruneConfig& cfg);

GaussianMixture prune_components(const GaussianMixture& f, std::size_t k_min,
                                 std::size_t k_max, double theta);
GaussianMixture prune_components(const GaussianMixture& f, const PruneConfig& cfg);

// Builds a mixture by summation, merging components with identical
// parameters as they arrive. Component order is first-arrival order.
class MixtureAccumulator {
 public:
  MixtureAccumulator() = default;
  explicit MixtureAccumulator(std::vector<Slot> slots) : mixture_(std::move(slots)) {}

  void add(double log_weight, std::span<const double> mean, std::span<const double> variance);
  // Slot names of f are ignored; only dimensionality must agree.
  void add(const GaussianMixture& f, double log_scale = 0.0);

  std::size_t size() const { return mixture_.size(); }
  bool empty() const { return mixture_.empty(); }
  const GaussianMixture& peek() const { return mixture_; }
  GaussianMixture release();

 private:
  GaussianMixture mixture_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> index_;
};

// How one slot of a weight function is treated by contract().
struct SlotFactor {
  enum class Kind { keep, unit, mixture };
  Kind kind = Kind::keep;
  const GaussianMixture* mixture = nullptr;

  static SlotFactor keep() { return {Kind::keep, nullptr}; }
  static SlotFactor unit() { return {Kind::unit, nullptr}; }
  static SlotFactor of(const GaussianMixture& m) { return {Kind::mixture, &m}; }
};

// Fused product-then-marginalize: multiplies w by a one-slot mixture on each
// `mixture` slot, integrates those slots and the `unit` slots out, and keeps
// the `keep` slots. Equal to the composition of product() and marginalize(),
// with one output component per component of w.
GaussianMixture contract(const GaussianMixture& w, std::span<const SlotFactor> factors);
void contract_into(MixtureAccumulator& out, const GaussianMixture& w,
                   std::span<const SlotFactor> factors, double log_scale = 0.0);
// All slots integrated; returns the log of the scalar result.
double log_contract(const GaussianMixture& w, std::span<const SlotFactor> factors);

// log of int F(x) N(x | mean, var) dx for a one-slot mixture F.
double log_overlap(const GaussianMixture& factor, std::span<const double> mean,
                   std::span<const double> variance);

}  // namespace lveg
