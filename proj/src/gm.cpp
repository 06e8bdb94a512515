#include "lveg/gm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "lveg/error.hpp"
#include "lveg/numeric.hpp"

namespace lveg {

GaussianMixture::GaussianMixture(std::vector<Slot> slots) : slots_(std::move(slots)) {
  for (const auto& s : slots_) {
    if (s.width < 1) throw DimensionError("slot '" + s.name + "' has width < 1");
    dims_ += static_cast<std::size_t>(s.width);
  }
}

GaussianMixture GaussianMixture::unit() { return scalar(0.0); }

GaussianMixture GaussianMixture::scalar(double log_value) {
  GaussianMixture m;
  m.log_weights_.push_back(log_value);
  return m;
}

int GaussianMixture::slot_index(std::string_view name) const {
  for (std::size_t i = 0; i < slots_.size(); ++i)
    if (slots_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t GaussianMixture::slot_offset(std::size_t slot) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < slot; ++i) off += static_cast<std::size_t>(slots_[i].width);
  return off;
}

GaussianComponent GaussianMixture::component(std::size_t k) const {
  auto m = mean(k);
  auto v = variance(k);
  return {log_weights_[k], {m.begin(), m.end()}, {v.begin(), v.end()}};
}

void GaussianMixture::add_component(double log_weight, std::span<const double> mean,
                                    std::span<const double> variance) {
  if (mean.size() != dims_ || variance.size() != dims_)
    throw DimensionError("component dimensionality does not match the slot layout");
  for (double v : variance)
    if (!(v > 0.0)) throw DimensionError("variance entries must be strictly positive");
  log_weights_.push_back(log_weight);
  means_.insert(means_.end(), mean.begin(), mean.end());
  variances_.insert(variances_.end(), variance.begin(), variance.end());
}

void GaussianMixture::reserve(std::size_t n) {
  log_weights_.reserve(n);
  means_.reserve(n * dims_);
  variances_.reserve(n * dims_);
}

double GaussianMixture::log_density(std::span<const double> x) const {
  if (x.size() != dims_) throw DimensionError("point dimensionality mismatch");
  std::vector<double> terms(size());
  for (std::size_t k = 0; k < size(); ++k) {
    double lw = log_weights_[k];
    auto m = mean(k);
    auto v = variance(k);
    for (std::size_t d = 0; d < dims_; ++d) lw += log_normal(x[d], m[d], v[d]);
    terms[k] = lw;
  }
  return log_sum_exp(terms);
}

GaussianMixture product(const GaussianMixture& f, const GaussianMixture& g) {
  // For each of g's slots: the matching offset in the result, or a new slot.
  std::vector<Slot> slots = f.slots();
  std::vector<int> g_to_f(g.num_slots(), -1);
  for (std::size_t s = 0; s < g.num_slots(); ++s) {
    const Slot& gs = g.slots()[s];
    int fi = f.slot_index(gs.name);
    if (fi >= 0) {
      if (f.slots()[fi].width != gs.width)
        throw DimensionError("slot '" + gs.name + "' has mismatched widths");
      g_to_f[s] = fi;
    } else {
      slots.push_back(gs);
    }
  }
  GaussianMixture out(std::move(slots));
  const std::size_t fd = f.dims();
  // shared[d] = matching dim in f for each dim of g, or -1.
  std::vector<int> shared(g.dims(), -1);
  std::vector<std::size_t> new_dims;
  for (std::size_t s = 0, off = 0; s < g.num_slots(); ++s) {
    const std::size_t w = static_cast<std::size_t>(g.slots()[s].width);
    if (g_to_f[s] >= 0) {
      const std::size_t foff = f.slot_offset(static_cast<std::size_t>(g_to_f[s]));
      for (std::size_t d = 0; d < w; ++d) shared[off + d] = static_cast<int>(foff + d);
    } else {
      for (std::size_t d = 0; d < w; ++d) new_dims.push_back(off + d);
    }
    off += w;
  }

  out.reserve(f.size() * g.size());
  std::vector<double> mean(out.dims()), var(out.dims());
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto fm = f.mean(i);
    auto fv = f.variance(i);
    for (std::size_t j = 0; j < g.size(); ++j) {
      auto gm = g.mean(j);
      auto gv = g.variance(j);
      double lw = f.log_weight(i) + g.log_weight(j);
      std::copy(fm.begin(), fm.end(), mean.begin());
      std::copy(fv.begin(), fv.end(), var.begin());
      for (std::size_t d = 0; d < g.dims(); ++d) {
        if (shared[d] < 0) continue;
        const std::size_t t = static_cast<std::size_t>(shared[d]);
        const double s = fv[t] + gv[d];
        lw += log_normal(fm[t], gm[d], s);
        mean[t] = (fm[t] * gv[d] + gm[d] * fv[t]) / s;
        var[t] = fv[t] * gv[d] / s;
      }
      for (std::size_t n = 0; n < new_dims.size(); ++n) {
        mean[fd + n] = gm[new_dims[n]];
        var[fd + n] = gv[new_dims[n]];
      }
      out.add_component(lw, mean, var);
    }
  }
  return out;
}

GaussianMixture marginalize(const GaussianMixture& f, std::string_view slot) {
  const int idx = f.slot_index(slot);
  if (idx < 0) throw LookupError("unknown slot '" + std::string(slot) + "'");
  std::vector<Slot> slots = f.slots();
  slots.erase(slots.begin() + idx);
  GaussianMixture out(std::move(slots));
  const std::size_t off = f.slot_offset(static_cast<std::size_t>(idx));
  const std::size_t w = static_cast<std::size_t>(f.slots()[idx].width);
  out.reserve(f.size());
  std::vector<double> mean, var;
  for (std::size_t k = 0; k < f.size(); ++k) {
    auto m = f.mean(k);
    auto v = f.variance(k);
    mean.assign(m.begin(), m.begin() + off);
    mean.insert(mean.end(), m.begin() + off + w, m.end());
    var.assign(v.begin(), v.begin() + off);
    var.insert(var.end(), v.begin() + off + w, v.end());
    out.add_component(f.log_weight(k), mean, var);
  }
  return out;
}

double log_total_mass(const GaussianMixture& f) {
  std::vector<double> lw(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) lw[k] = f.log_weight(k);
  return log_sum_exp(lw);
}

double total_mass(const GaussianMixture& f) { return std::exp(log_total_mass(f)); }

Moments moments(const GaussianMixture& f, std::size_t dim) {
  if (dim >= f.dims()) throw DimensionError("moment dimension out of range");
  if (f.empty()) return {};
  double shift = kLogZero;
  for (std::size_t k = 0; k < f.size(); ++k) shift = std::max(shift, f.log_weight(k));
  Moments m;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double w = std::exp(f.log_weight(k) - shift);
    const double mu = f.mean(k)[dim];
    const double var = f.variance(k)[dim];
    m.mass += w;
    m.first += w * mu;
    m.second += w * (mu * mu + var);
  }
  const double s = std::exp(shift);
  m.mass *= s;
  m.first *= s;
  m.second *= s;
  return m;
}

GaussianMixture scale(const GaussianMixture& f, double log_c) {
  GaussianMixture out = f;
  for (double& lw : out.mutable_log_weights()) lw += log_c;
  return out;
}

GaussianMixture rename_slots(const GaussianMixture& f, const std::vector<std::string>& names) {
  if (names.size() != f.num_slots()) throw DimensionError("rename_slots: slot count mismatch");
  std::vector<Slot> slots = f.slots();
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i].name = names[i];
  GaussianMixture out(std::move(slots));
  out.reserve(f.size());
  for (std::size_t k = 0; k < f.size(); ++k)
    out.add_component(f.log_weight(k), f.mean(k), f.variance(k));
  return out;
}

GaussianMixture coalesce(const GaussianMixture& f) {
  MixtureAccumulator acc(f.slots());
  acc.add(f);
  return acc.release();
}

std::size_t allowed_components(std::size_t kc, const PruneConfig& cfg) {
  switch (cfg.mode) {
    case PruneConfig::Mode::none:
      return kc;
    case PruneConfig::Mode::hard:
      return std::min(kc, cfg.k_hard);
    case PruneConfig::Mode::kmin_kmax: {
      if (kc <= cfg.k_min) return kc;
      // The epsilon keeps exact integer powers (e.g. 32^0.2) from flooring down.
      const auto grow = static_cast<std::size_t>(
          std::floor(std::pow(static_cast<double>(kc), cfg.theta) + 1e-9));
      return std::min({cfg.k_min + grow, cfg.k_max, kc});
    }
  }
  return kc;
}

GaussianMixture prune_components(const GaussianMixture& f, std::size_t k_min, std::size_t k_max,
                                 double theta) {
  return prune_components(f, PruneConfig::kmin_kmax(k_min, k_max, theta));
}

GaussianMixture prune_components(const GaussianMixture& f, const PruneConfig& cfg) {
  const std::size_t keep = allowed_components(f.size(), cfg);
  if (keep >= f.size()) return f;
  std::vector<std::size_t> order(f.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return f.log_weight(a) > f.log_weight(b);
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  GaussianMixture out(f.slots());
  out.reserve(keep);
  for (std::size_t k : order) out.add_component(f.log_weight(k), f.mean(k), f.variance(k));
  return out;
}

namespace {

std::uint64_t hash_params(std::span<const double> mean, std::span<const double> var) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double x) {
    h ^= std::bit_cast<std::uint64_t>(x);
    h *= 1099511628211ULL;
    h ^= h >> 29;
  };
  for (double x : mean) mix(x);
  for (double x : var) mix(x);
  return h;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

void MixtureAccumulator::add(double log_weight, std::span<const double> mean,
                             std::span<const double> variance) {
  if (log_weight == kLogZero) return;
  auto& bucket = index_[hash_params(mean, variance)];
  for (std::uint32_t k : bucket) {
    if (same_bits(mixture_.mean(k), mean) && same_bits(mixture_.variance(k), variance)) {
      auto lw = mixture_.mutable_log_weights();
      lw[k] = log_add(lw[k], log_weight);
      return;
    }
  }
  bucket.push_back(static_cast<std::uint32_t>(mixture_.size()));
  mixture_.add_component(log_weight, mean, variance);
}

void MixtureAccumulator::add(const GaussianMixture& f, double log_scale) {
  if (f.empty()) return;
  if (f.dims() != mixture_.dims()) throw DimensionError("accumulator dimensionality mismatch");
  for (std::size_t k = 0; k < f.size(); ++k)
    add(f.log_weight(k) + log_scale, f.mean(k), f.variance(k));
}

GaussianMixture MixtureAccumulator::release() {
  index_.clear();
  GaussianMixture out = std::move(mixture_);
  mixture_ = GaussianMixture(out.slots());
  return out;
}

double log_overlap(const GaussianMixture& factor, std::span<const double> mean,
                   std::span<const double> variance) {
  double best = kLogZero;
  // Two passes keep this allocation-free: max first, then the shifted sum.
  thread_local std::vector<double> terms;
  terms.resize(factor.size());
  for (std::size_t j = 0; j < factor.size(); ++j) {
    auto fm = factor.mean(j);
    auto fv = factor.variance(j);
    double lw = factor.log_weight(j);
    for (std::size_t d = 0; d < mean.size(); ++d)
      lw += log_normal(mean[d], fm[d], variance[d] + fv[d]);
    terms[j] = lw;
    best = std::max(best, lw);
  }
  if (best == kLogZero) return kLogZero;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

namespace {

struct ContractPlan {
  std::vector<std::size_t> kept_dims;
  std::vector<Slot> kept_slots;
};

ContractPlan plan_contract(const GaussianMixture& w, std::span<const SlotFactor> factors) {
  if (factors.size() != w.num_slots()) throw DimensionError("contract: one factor per slot");
  ContractPlan plan;
  for (std::size_t s = 0, off = 0; s < w.num_slots(); ++s) {
    const std::size_t width = static_cast<std::size_t>(w.slots()[s].width);
    const SlotFactor& f = factors[s];
    if (f.kind == SlotFactor::Kind::keep) {
      plan.kept_slots.push_back(w.slots()[s]);
      for (std::size_t d = 0; d < width; ++d) plan.kept_dims.push_back(off + d);
    } else if (f.kind == SlotFactor::Kind::mixture) {
      if (f.mixture->num_slots() != 1 || f.mixture->dims() != width)
        throw DimensionError("contract: factor must be a one-slot mixture of the slot's width");
    }
    off += width;
  }
  return plan;
}

}  // namespace

void contract_into(MixtureAccumulator& out, const GaussianMixture& w,
                   std::span<const SlotFactor> factors, double log_scale) {
  const ContractPlan plan = plan_contract(w, factors);
  for (const auto& f : factors)
    if (f.kind == SlotFactor::Kind::mixture && f.mixture->empty()) return;
  std::vector<std::size_t> offsets(w.num_slots());
  for (std::size_t s = 0, off = 0; s < w.num_slots(); ++s) {
    offsets[s] = off;
    off += static_cast<std::size_t>(w.slots()[s].width);
  }
  std::vector<double> mean(plan.kept_dims.size()), var(plan.kept_dims.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    auto m = w.mean(k);
    auto v = w.variance(k);
    double lw = w.log_weight(k) + log_scale;
    for (std::size_t s = 0; s < w.num_slots() && lw != kLogZero; ++s) {
      if (factors[s].kind != SlotFactor::Kind::mixture) continue;
      const std::size_t width = static_cast<std::size_t>(w.slots()[s].width);
      lw += log_overlap(*factors[s].mixture, m.subspan(offsets[s], width),
                        v.subspan(offsets[s], width));
    }
    for (std::size_t d = 0; d < plan.kept_dims.size(); ++d) {
      mean[d] = m[plan.kept_dims[d]];
      var[d] = v[plan.kept_dims[d]];
    }
    out.add(lw, mean, var);
  }
}

GaussianMixture contract(const GaussianMixture& w, std::span<const SlotFactor> factors) {
  MixtureAccumulator acc(plan_contract(w, factors).kept_slots);
  contract_into(acc, w, factors);
  return acc.release();
}

double log_contract(const GaussianMixture& w, std::span<const SlotFactor> factors) {
  if (factors.size() != w.num_slots()) throw DimensionError("contract: one factor per slot");
  for (const auto& f : factors) {
    if (f.kind == SlotFactor::Kind::keep)
      throw DimensionError("log_contract: every slot must be integrated");
    if (f.kind == SlotFactor::Kind::mixture && f.mixture->empty()) return kLogZero;
  }
  double total = kLogZero;
  for (std::size_t k = 0; k < w.size(); ++k) {
    auto m = w.mean(k);
    auto v = w.variance(k);
    double lw = w.log_weight(k);
    for (std::size_t s = 0, off = 0; s < w.num_slots(); ++s) {
      const std::size_t width = static_cast<std::size_t>(w.slots()[s].width);
      if (factors[s].kind == SlotFactor::Kind::mixture)
        lw += log_overlap(*factors[s].mixture, m.subspan(off, width), v.subspan(off, width));
      off += width;
    }
    total = log_add(total, lw);
  }
  return total;
}

}  // namespace lveg
