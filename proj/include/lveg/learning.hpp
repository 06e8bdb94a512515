#pragma once

// Discriminative training of Gaussian-mixture weight functions: conditional
// likelihood, expected outer functions, moment-based gradients and Adam.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lveg/gm.hpp"
#include "lveg/grammar.hpp"
#include "lveg/inference.hpp"
#include "lveg/tree.hpp"

namespace lveg {

// Unconstrained coordinates of a list of weight functions. Per mixture, per
// component: [theta_rho, mu (dims), theta_sigma (dims, or 1 when spherical)]
// with rho = exp(theta_rho) and sigma^2 = exp(theta_sigma).
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(std::span<const GaussianMixture* const> weights, bool spherical);

  std::size_t size() const { return total_; }
  std::size_t num_weights() const { return offsets_.size(); }
  bool spherical() const { return spherical_; }
  std::size_t offset(std::size_t weight) const { return offsets_[weight]; }
  std::size_t block_size(std::size_t weight) const { return block_[weight]; }
  std::size_t component_size(std::size_t weight) const { return comp_[weight]; }
  std::size_t dims(std::size_t weight) const { return dims_[weight]; }

 private:
  bool spherical_ = false;
  std::size_t total_ = 0;
  std::vector<std::size_t> offsets_, block_, comp_, dims_;
};

std::vector<double> get_params(std::span<const GaussianMixture* const> weights,
                               const ParamLayout& layout);
void set_params(std::span<GaussianMixture* const> weights, const ParamLayout& layout,
                std::span<const double> params);

// Rule weight functions in rule-id order.
std::vector<GaussianMixture*> weight_functions(Grammar& g);
std::vector<const GaussianMixture*> weight_functions(const Grammar& g);

// One anchor's contribution to an expected outer function:
// exp(log_coef) * prod_s factor_s(x_s) over the slots of weight `weight`.
// Unit factors stand for the constant function 1.
struct OuterTerm {
  int weight = -1;
  double log_coef = 0.0;
  std::array<SlotFactor, 3> factors{};
};

// Expected outer functions of all weights in factored form. Factor mixtures
// live in charts kept alive through `owners`.
struct ExpectedOuter {
  std::vector<OuterTerm> terms;
  std::vector<std::shared_ptr<const void>> owners;
};

// sum over the terms of `weight` of exp(log_coef) * int W * factors: the
// expected number of times the weight is used.
double expected_count(const ExpectedOuter& outer, int weight, const GaussianMixture& w);

struct SentenceOuters {
  double log_z = 0.0;
  double log_gold = 0.0;
  ExpectedOuter unconstrained;
  ExpectedOuter gold;

  double nll() const { return log_z - log_gold; }
};

// Gradient blocks for the weights a sentence touches, ascending by weight.
struct SparseGradient {
  std::vector<int> weights;
  std::vector<std::vector<double>> blocks;
};

// d(log Z - log Z_gold)/d(params) in unconstrained coordinates.
SparseGradient gradients(std::span<const GaussianMixture* const> weights,
                         const ParamLayout& layout, const SentenceOuters& outers);
void add_gradient(std::span<double> dense, const SparseGradient& g, const ParamLayout& layout);

struct Example {
  std::vector<int> words;
  Tree gold;  // binarized, unary chains collapsed
};

// Baseline-PCFG posterior mask with the gold constituents forced in.
ConstituentMask training_mask(const Grammar& g, const Example& ex, double p_min);

// Throws CoverageError when the gold tree uses a rule missing from g and
// NoParseError when a weight is zero.
SentenceOuters expected_outers(const Grammar& g, const Example& ex, const PruneConfig& prune,
                               const ConstituentMask& mask);
double sentence_nll(const Grammar& g, const Example& ex, const PruneConfig& prune,
                    const ConstituentMask& mask);
// Sum over the batch, all-allow masks.
double nll(const Grammar& g, const std::vector<Example>& batch,
           const PruneConfig& prune = PruneConfig::disabled());

// A differentiable training objective over a fixed list of examples.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t num_examples() const = 0;
  virtual std::vector<GaussianMixture*> weights() = 0;
  virtual bool spherical() const = 0;
  // Safe to call concurrently for different examples.
  virtual SentenceOuters outers(std::size_t example) const = 0;
  virtual double nll(std::size_t example) const = 0;
};

class ParseObjective : public Objective {
 public:
  // Masks are computed once from baseline probabilities (p_min = 0 allows all).
  ParseObjective(Grammar& g, const std::vector<Example>& examples, const PruneConfig& prune,
                 double p_min);

  std::size_t num_examples() const override { return examples_.size(); }
  std::vector<GaussianMixture*> weights() override { return weight_functions(g_); }
  bool spherical() const override { return g_.spherical; }
  SentenceOuters outers(std::size_t example) const override;
  double nll(std::size_t example) const override;

 private:
  Grammar& g_;
  const std::vector<Example>& examples_;
  PruneConfig prune_;
  std::vector<ConstituentMask> masks_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  std::size_t skipped = 0;  // non-finite gradient entries left unapplied

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Throws DimensionError when the shapes disagree.
void adam_step(AdamState& state, const AdamConfig& cfg, std::span<double> params,
               std::span<const double> grads);

// Rescales g so that its largest finite magnitude is at most max_abs;
// returns the magnitude before clipping.
double clip_inf_norm(std::span<double> g, double max_abs);

struct BatchResult {
  std::vector<double> gradient;
  double nll = 0.0;
  std::size_t sentences = 0;
  std::size_t failed = 0;
};

// Sum of per-sentence gradients, reduced in example order regardless of jobs.
// Sentences without a parse are counted in `failed` and skipped.
BatchResult batch_gradient(Objective& obj, const ParamLayout& layout,
                           std::span<const std::size_t> examples, int jobs);

struct TrainConfig {
  int epochs = 15;
  std::size_t batch_size = 32;
  AdamConfig adam;
  double clip = 5.0;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double train_nll = 0.0;  // summed over the epoch's batches, before each update
  std::size_t sentences = 0;
  std::size_t failed = 0;
  std::size_t skipped_updates = 0;
  double dev_score = 0.0;
  bool has_dev = false;
  bool best = false;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;  // 0 when no dev evaluator was supplied
};

// Seeded shuffling into mini-batches with one Adam step per batch. With a
// dev evaluator (higher is better) the best epoch's parameters are restored
// at the end. Throws InputError when an epoch has no usable sentence.
TrainResult train(Objective& obj, const TrainConfig& cfg,
                  const std::function<double()>& dev_eval = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace lveg
