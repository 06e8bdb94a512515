#include "lveg/learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>

#include "lveg/error.hpp"
#include "lveg/numeric.hpp"
#include "lveg/parallel.hpp"

namespace lveg {

ParamLayout::ParamLayout(std::span<const GaussianMixture* const> weights, bool spherical)
    : spherical_(spherical) {
  for (const GaussianMixture* w : weights) {
    const std::size_t d = w->dims();
    const std::size_t comp = 1 + d + (spherical ? 1 : d);
    offsets_.push_back(total_);
    comp_.push_back(comp);
    dims_.push_back(d);
    block_.push_back(comp * w->size());
    total_ += comp * w->size();
  }
}

std::vector<double> get_params(std::span<const GaussianMixture* const> weights,
                               const ParamLayout& layout) {
  if (weights.size() != layout.num_weights()) throw DimensionError("parameter layout mismatch");
  std::vector<double> out(layout.size());
  for (std::size_t r = 0; r < weights.size(); ++r) {
    const GaussianMixture& w = *weights[r];
    if (w.size() * layout.component_size(r) != layout.block_size(r))
      throw DimensionError("parameter layout mismatch");
    double* p = out.data() + layout.offset(r);
    const std::size_t d = w.dims();
    for (std::size_t k = 0; k < w.size(); ++k) {
      *p++ = w.log_weight(k);
      for (double m : w.mean(k)) *p++ = m;
      if (layout.spherical()) {
        *p++ = d ? std::log(w.variance(k)[0]) : 0.0;
      } else {
        for (double v : w.variance(k)) *p++ = std::log(v);
      }
    }
  }
  return out;
}

void set_params(std::span<GaussianMixture* const> weights, const ParamLayout& layout,
                std::span<const double> params) {
  if (weights.size() != layout.num_weights() || params.size() != layout.size())
    throw DimensionError("parameter layout mismatch");
  for (std::size_t r = 0; r < weights.size(); ++r) {
    GaussianMixture& w = *weights[r];
    if (w.size() * layout.component_size(r) != layout.block_size(r))
      throw DimensionError("parameter layout mismatch");
    const double* p = params.data() + layout.offset(r);
    auto lw = w.mutable_log_weights();
    for (std::size_t k = 0; k < w.size(); ++k) {
      lw[k] = *p++;
      for (double& m : w.mutable_mean(k)) m = *p++;
      if (layout.spherical()) {
        const double v = std::exp(*p++);
        for (double& x : w.mutable_variance(k)) x = v;
      } else {
        for (double& x : w.mutable_variance(k)) x = std::exp(*p++);
      }
    }
  }
}

std::vector<GaussianMixture*> weight_functions(Grammar& g) {
  std::vector<GaussianMixture*> out;
  out.reserve(g.num_rules());
  for (std::size_t r = 0; r < g.num_rules(); ++r)
    out.push_back(&g.mutable_rule(static_cast<int>(r)).weight);
  return out;
}

std::vector<const GaussianMixture*> weight_functions(const Grammar& g) {
  std::vector<const GaussianMixture*> out;
  out.reserve(g.num_rules());
  for (const Rule& r : g.rules()) out.push_back(&r.weight);
  return out;
}

double expected_count(const ExpectedOuter& outer, int weight, const GaussianMixture& w) {
  double total = kLogZero;
  for (const OuterTerm& t : outer.terms) {
    if (t.weight != weight) continue;
    total = log_add(total, t.log_coef + log_contract(w, std::span(t.factors).first(w.num_slots())));
  }
  return std::exp(total);
}

namespace {

// log int F(x) N(x | m, v) dx for a one-slot F, plus the centred moments
// E[x - m] and E[(x - m)^2] under the normalized product F * N.
double slot_moments(const GaussianMixture& f, std::span<const double> m,
                    std::span<const double> v, double* c1, double* c2) {
  thread_local std::vector<double> lw;
  lw.resize(f.size());
  double best = kLogZero;
  for (std::size_t j = 0; j < f.size(); ++j) {
    auto fm = f.mean(j);
    auto fv = f.variance(j);
    double x = f.log_weight(j);
    for (std::size_t d = 0; d < m.size(); ++d) x += log_normal(m[d], fm[d], v[d] + fv[d]);
    lw[j] = x;
    best = std::max(best, x);
  }
  if (best == kLogZero) return kLogZero;
  std::fill(c1, c1 + m.size(), 0.0);
  std::fill(c2, c2 + m.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    const double w = std::exp(lw[j] - best);
    if (w == 0.0) continue;
    sum += w;
    auto fm = f.mean(j);
    auto fv = f.variance(j);
    for (std::size_t d = 0; d < m.size(); ++d) {
      const double s = v[d] + fv[d];
      const double shift = (fm[d] - m[d]) * v[d] / s;  // posterior mean minus m
      const double pv = fv[d] * v[d] / s;
      c1[d] += w * shift;
      c2[d] += w * (shift * shift + pv);
    }
  }
  for (std::size_t d = 0; d < m.size(); ++d) {
    c1[d] /= sum;
    c2[d] /= sum;
  }
  return best + std::log(sum);
}

void accumulate_term(const GaussianMixture& w, const OuterTerm& t, double sign, bool spherical,
                     std::size_t comp_size, std::vector<double>& block) {
  const std::size_t dims = w.dims();
  thread_local std::vector<double> c1, c2;
  c1.resize(dims);
  c2.resize(dims);
  for (std::size_t k = 0; k < w.size(); ++k) {
    auto m = w.mean(k);
    auto v = w.variance(k);
    double log_m = t.log_coef;
    for (std::size_t s = 0, off = 0; s < w.num_slots(); ++s) {
      const std::size_t width = static_cast<std::size_t>(w.slots()[s].width);
      const SlotFactor& f = t.factors[s];
      if (f.kind == SlotFactor::Kind::mixture) {
        log_m += slot_moments(*f.mixture, m.subspan(off, width), v.subspan(off, width),
                              c1.data() + off, c2.data() + off);
      } else if (f.kind == SlotFactor::Kind::unit) {
        for (std::size_t d = off; d < off + width; ++d) {
          c1[d] = 0.0;
          c2[d] = v[d];
        }
      } else {
        throw DimensionError("outer term cannot keep a slot");
      }
      if (log_m == kLogZero) break;
      off += width;
    }
    if (log_m == kLogZero) continue;
    // rho_k * int N_k * outer
    const double c = sign * std::exp(w.log_weight(k) + log_m);
    double* g = block.data() + k * comp_size;
    g[0] += c;
    for (std::size_t d = 0; d < dims; ++d) {
      g[1 + d] += c * c1[d] / v[d];
      const double ts = 0.5 * c * (c2[d] / v[d] - 1.0);
      if (spherical)
        g[1 + dims] += ts;
      else
        g[1 + dims + d] += ts;
    }
  }
}

}  // namespace

SparseGradient gradients(std::span<const GaussianMixture* const> weights,
                         const ParamLayout& layout, const SentenceOuters& outers) {
  if (weights.size() != layout.num_weights()) throw DimensionError("parameter layout mismatch");
  std::map<int, std::vector<double>> blocks;
  auto add_terms = [&](const ExpectedOuter& outer, double sign) {
    for (const OuterTerm& t : outer.terms) {
      if (t.weight < 0 || static_cast<std::size_t>(t.weight) >= weights.size())
        throw DimensionError("outer term refers to an unknown weight");
      const auto r = static_cast<std::size_t>(t.weight);
      auto& block = blocks[t.weight];
      if (block.empty()) block.assign(layout.block_size(r), 0.0);
      accumulate_term(*weights[r], t, sign, layout.spherical(), layout.component_size(r), block);
    }
  };
  add_terms(outers.unconstrained, 1.0);
  add_terms(outers.gold, -1.0);
  SparseGradient out;
  for (auto& [w, b] : blocks) {
    out.weights.push_back(w);
    out.blocks.push_back(std::move(b));
  }
  return out;
}

void add_gradient(std::span<double> dense, const SparseGradient& g, const ParamLayout& layout) {
  if (dense.size() != layout.size()) throw DimensionError("gradient size mismatch");
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    const auto r = static_cast<std::size_t>(g.weights[i]);
    const std::vector<double>& b = g.blocks[i];
    if (b.size() != layout.block_size(r)) throw DimensionError("gradient block size mismatch");
    double* out = dense.data() + layout.offset(r);
    for (std::size_t j = 0; j < b.size(); ++j) out[j] += b[j];
  }
}

ConstituentMask training_mask(const Grammar& g, const Example& ex, double p_min) {
  ConstituentMask mask = pcfg_mask(g, ex.words, p_min);
  for (const auto& c : constituents(ex.gold)) mask.set(c.begin, c.end, c.label, true);
  return mask;
}

SentenceOuters expected_outers(const Grammar& g, const Example& ex, const PruneConfig& prune,
                               const ConstituentMask& mask) {
  SentenceOuters so;
  auto gp = std::make_shared<GoldPass>(gold_pass(g, ex.gold, prune, true));
  if (gp->log_weight == kLogZero) throw NoParseError("gold tree has zero weight");
  auto chart = std::make_shared<ParseChart>(inside(g, ex.words, mask, prune));
  so.log_z = sentence_weight(*chart);
  outside(g, *chart, prune);
  so.log_gold = gp->log_weight;

  for_each_anchor(g, *chart, [&](const Anchor& a) {
    OuterTerm t;
    t.weight = a.rule;
    t.log_coef = -so.log_z;
    std::copy(a.factors.begin(), a.factors.end(), t.factors.begin());
    so.unconstrained.terms.push_back(t);
  });
  so.unconstrained.owners.push_back(chart);

  for (const GoldPass::Node& nd : gp->nodes) {
    OuterTerm t;
    t.weight = nd.rule;
    t.log_coef = -so.log_gold;
    t.factors[0] = nd.outside_factor();
    if (nd.left >= 0) t.factors[1] = SlotFactor::of(gp->nodes[static_cast<std::size_t>(nd.left)].inside);
    if (nd.right >= 0)
      t.factors[2] = SlotFactor::of(gp->nodes[static_cast<std::size_t>(nd.right)].inside);
    so.gold.terms.push_back(t);
  }
  so.gold.owners.push_back(gp);
  return so;
}

double sentence_nll(const Grammar& g, const Example& ex, const PruneConfig& prune,
                    const ConstituentMask& mask) {
  const GoldPass gp = gold_pass(g, ex.gold, prune, false);
  if (gp.log_weight == kLogZero) throw NoParseError("gold tree has zero weight");
  const ParseChart chart = inside(g, ex.words, mask, prune);
  return sentence_weight(chart) - gp.log_weight;
}

double nll(const Grammar& g, const std::vector<Example>& batch, const PruneConfig& prune) {
  double total = 0.0;
  for (const Example& ex : batch)
    total += sentence_nll(g, ex, prune,
                          ConstituentMask::all(static_cast<int>(ex.words.size()),
                                               g.num_nonterminals()));
  return total;
}

ParseObjective::ParseObjective(Grammar& g, const std::vector<Example>& examples,
                               const PruneConfig& prune, double p_min)
    : g_(g), examples_(examples), prune_(prune) {
  masks_.reserve(examples.size());
  for (const Example& ex : examples) masks_.push_back(training_mask(g, ex, p_min));
}

SentenceOuters ParseObjective::outers(std::size_t example) const {
  return expected_outers(g_, examples_.at(example), prune_, masks_[example]);
}

double ParseObjective::nll(std::size_t example) const {
  return sentence_nll(g_, examples_.at(example), prune_, masks_[example]);
}

void adam_step(AdamState& s, const AdamConfig& cfg, std::span<double> params,
               std::span<const double> grads) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size())
    throw DimensionError("Adam state does not match the parameters");
  ++s.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) {
      ++s.skipped;
      continue;
    }
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g;
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double clip_inf_norm(std::span<double> g, double max_abs) {
  double norm = 0.0;
  for (double x : g)
    if (std::isfinite(x)) norm = std::max(norm, std::abs(x));
  if (norm > max_abs) {
    const double scale = max_abs / norm;
    for (double& x : g)
      if (std::isfinite(x)) x *= scale;
  }
  return norm;
}

BatchResult batch_gradient(Objective& obj, const ParamLayout& layout,
                           std::span<const std::size_t> examples, int jobs) {
  const std::vector<GaussianMixture*> mutable_weights = obj.weights();
  const std::vector<const GaussianMixture*> weights(mutable_weights.begin(), mutable_weights.end());
  std::vector<std::optional<SparseGradient>> grads(examples.size());
  std::vector<double> nlls(examples.size(), 0.0);
  parallel_for(examples.size(), jobs, [&](std::size_t i) {
    try {
      const SentenceOuters so = obj.outers(examples[i]);
      nlls[i] = so.nll();
      grads[i] = gradients(weights, layout, so);
    } catch (const NoParseError&) {
    } catch (const CoverageError&) {
    }
  });
  BatchResult res;
  res.gradient.assign(layout.size(), 0.0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    ++res.sentences;
    if (!grads[i]) {
      ++res.failed;
      continue;
    }
    res.nll += nlls[i];
    add_gradient(res.gradient, *grads[i], layout);
  }
  return res;
}

TrainResult train(Objective& obj, const TrainConfig& cfg, const std::function<double()>& dev_eval,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
  const std::vector<GaussianMixture*> weights = obj.weights();
  const std::vector<const GaussianMixture*> cweights(weights.begin(), weights.end());
  const ParamLayout layout(cweights, obj.spherical());
  std::vector<double> params = get_params(cweights, layout);
  AdamState state(layout.size());
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(obj.num_examples());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<double> best_params;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    em.epoch = epoch;
    const std::size_t skipped_before = state.skipped;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      BatchResult br =
          batch_gradient(obj, layout, std::span(order).subspan(b, e - b), cfg.jobs);
      em.sentences += br.sentences;
      em.failed += br.failed;
      em.train_nll += br.nll;
      if (br.failed == br.sentences) continue;
      if (cfg.clip > 0.0) clip_inf_norm(br.gradient, cfg.clip);
      adam_step(state, cfg.adam, params, br.gradient);
      set_params(weights, layout, params);
    }
    if (em.sentences > 0 && em.failed == em.sentences)
      throw InputError("training aborted: none of the " + std::to_string(em.sentences) +
                       " sentences could be parsed");
    em.skipped_updates = state.skipped - skipped_before;
    if (dev_eval) {
      em.has_dev = true;
      em.dev_score = dev_eval();
      if (em.dev_score > best_score) {
        best_score = em.dev_score;
        best_params = params;
        result.best_epoch = epoch;
        em.best = true;
      }
    }
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(em);
    if (on_epoch) on_epoch(em);
  }
  if (result.best_epoch > 0) set_params(weights, layout, best_params);
  return result;
}

}  // namespace lveg
