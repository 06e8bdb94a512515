#include "lveg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <tuple>

#include "lveg/error.hpp"
#include "lveg/numeric.hpp"

namespace lveg {

ConstituentMask::ConstituentMask(int n, int num_nonterminals, bool allow)
    : n_(n), nt_(num_nonterminals) {
  if (n < 0 || num_nonterminals < 0) throw DimensionError("mask dimensions must be non-negative");
  bits_.assign(static_cast<std::size_t>(n) * n * num_nonterminals, allow ? 1 : 0);
}

std::size_t ConstituentMask::index(int i, int j, int a) const {
  if (i < 1 || j < i || j > n_ || a < 0 || a >= nt_)
    throw DimensionError("mask index out of range");
  return (static_cast<std::size_t>(i - 1) * n_ + (j - 1)) * nt_ + a;
}

std::size_t ConstituentMask::count_allowed() const {
  std::size_t c = 0;
  for (int i = 1; i <= n_; ++i)
    for (int j = i; j <= n_; ++j)
      for (int a = 0; a < nt_; ++a) c += allowed(i, j, a);
  return c;
}

ParseChart::ParseChart(std::vector<int> words, ConstituentMask mask)
    : words_(std::move(words)), mask_(std::move(mask)) {
  const std::size_t n = words_.size();
  cells_.resize(n * n * static_cast<std::size_t>(mask_.num_nonterminals()));
  active_pre_.resize(n * n);
  active_post_.resize(n * n);
}

std::size_t ParseChart::span(int i, int j) const {
  const int n = length();
  if (i < 1 || j < i || j > n) throw DimensionError("chart span out of range");
  return static_cast<std::size_t>(i - 1) * n + (j - 1);
}

std::size_t ParseChart::index(int i, int j, int a) const {
  if (a < 0 || a >= num_nonterminals()) throw DimensionError("chart nonterminal out of range");
  return span(i, j) * num_nonterminals() + a;
}

namespace {

// Lazily created accumulators for the nonterminals of one span.
class SpanAccumulators {
 public:
  SpanAccumulators(int nt, int d) : accs_(static_cast<std::size_t>(nt)), slot_{"x", d} {}

  MixtureAccumulator& at(int a) {
    auto& acc = accs_[static_cast<std::size_t>(a)];
    if (!acc) acc.emplace(std::vector<Slot>{slot_});
    return *acc;
  }
  bool has(int a) const {
    const auto& acc = accs_[static_cast<std::size_t>(a)];
    return acc && !acc->empty();
  }
  GaussianMixture release(int a) { return accs_[static_cast<std::size_t>(a)]->release(); }
  void reset() {
    for (auto& acc : accs_) acc.reset();
  }

 private:
  std::vector<std::optional<MixtureAccumulator>> accs_;
  Slot slot_;
};

std::vector<std::vector<int>> binary_rules_by_parent(const Grammar& g) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(g.num_nonterminals()));
  for (const Rule& r : g.rules())
    if (r.kind == RuleKind::binary) out[static_cast<std::size_t>(r.parent)].push_back(r.id);
  return out;
}

void check_sentence(const Grammar& g, std::span<const int> words, const ConstituentMask& mask) {
  if (words.empty()) throw InputError("empty sentence");
  if (mask.length() != static_cast<int>(words.size()) ||
      mask.num_nonterminals() != g.num_nonterminals())
    throw DimensionError("mask does not match the sentence and grammar");
  if (g.start() < 0) throw StateError("grammar has no start symbol");
  for (int w : words) {
    if (w < 0 || w >= g.symbols.terminals.size())
      throw CoverageError("terminal id " + std::to_string(w) + " is not in the grammar");
    if (g.rules_for_terminal(w).empty())
      throw CoverageError("no lexical rule for the word '" + g.symbols.terminal(w) + "'");
  }
}

}  // namespace

ParseChart inside(const Grammar& g, std::span<const int> words, const ConstituentMask& mask,
                  const PruneConfig& prune) {
  check_sentence(g, words, mask);
  const int n = static_cast<int>(words.size());
  const int nt = g.num_nonterminals();
  ParseChart c(std::vector<int>(words.begin(), words.end()), mask);
  c.start_ = g.start();
  SpanAccumulators pre(nt, g.d), post(nt, g.d);
  const SlotFactor keep = SlotFactor::keep();

  for (int len = 1; len <= n; ++len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      pre.reset();
      post.reset();
      if (len == 1) {
        for (int rid : g.rules_for_terminal(words[static_cast<std::size_t>(i - 1)])) {
          const Rule& r = g.rule(rid);
          if (mask.allowed(i, j, r.parent)) pre.at(r.parent).add(r.weight);
        }
      } else {
        for (int k = i; k < j; ++k) {
          for (int b : c.active_post(i, k)) {
            const GaussianMixture& ib = c.cell(i, k, b).inside_post;
            for (int rid : g.binary_rules_for_left(b)) {
              const Rule& r = g.rule(rid);
              if (!mask.allowed(i, j, r.parent)) continue;
              const GaussianMixture& ic = c.cell(k + 1, j, r.right).inside_post;
              if (ic.empty()) continue;
              const SlotFactor f[] = {keep, SlotFactor::of(ib), SlotFactor::of(ic)};
              contract_into(pre.at(r.parent), r.weight, f);
            }
          }
        }
      }
      auto& act_pre = c.active_pre_[c.span(i, j)];
      for (int a = 0; a < nt; ++a) {
        if (!pre.has(a)) continue;
        c.cell(i, j, a).inside_pre = prune_components(pre.release(a), prune);
        act_pre.push_back(a);
      }

      std::vector<bool> has_unary(static_cast<std::size_t>(nt), false);
      for (int b : act_pre) {
        const GaussianMixture& ib = c.cell(i, j, b).inside_pre;
        for (int rid : g.unary_rules_for_child(b)) {
          const Rule& r = g.rule(rid);
          if (!mask.allowed(i, j, r.parent)) continue;
          auto& acc = post.at(r.parent);
          if (!has_unary[static_cast<std::size_t>(r.parent)]) {
            acc.add(c.cell(i, j, r.parent).inside_pre);
            has_unary[static_cast<std::size_t>(r.parent)] = true;
          }
          const SlotFactor f[] = {keep, SlotFactor::of(ib)};
          contract_into(acc, r.weight, f);
        }
      }
      auto& act_post = c.active_post_[c.span(i, j)];
      for (int a = 0; a < nt; ++a) {
        ChartCell& cell = c.cell(i, j, a);
        if (has_unary[static_cast<std::size_t>(a)]) {
          if (post.has(a)) cell.inside_post = prune_components(post.release(a), prune);
        } else {
          cell.inside_post = cell.inside_pre;
        }
        if (!cell.inside_post.empty()) act_post.push_back(a);
      }
    }
  }
  c.inside_done_ = true;
  return c;
}

void outside(const Grammar& g, ParseChart& c, const PruneConfig& prune) {
  if (!c.inside_done_) throw StateError("outside pass requires the inside pass");
  const int n = c.length();
  const int s = g.start();
  const ConstituentMask& mask = c.mask();
  const auto binary_by_parent = binary_rules_by_parent(g);
  const Slot slot{"x", g.d};
  const SlotFactor keep = SlotFactor::keep();

  // Outside contributions pushed down from binary parents, per (span, A).
  std::vector<std::unique_ptr<MixtureAccumulator>> pushed(c.cells_.size());
  auto acc_at = [&](int i, int j, int a) -> MixtureAccumulator& {
    auto& p = pushed[c.index(i, j, a)];
    if (!p) p = std::make_unique<MixtureAccumulator>(std::vector<Slot>{slot});
    return *p;
  };

  ChartCell& root = c.cell(1, n, s);
  if (!root.inside_post.empty()) root.outside_post_unit = true;

  for (int len = n; len >= 1; --len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      for (int a : c.active_post(i, j)) {
        auto& p = pushed[c.index(i, j, a)];
        if (!p || p->empty()) continue;
        c.cell(i, j, a).outside_post = prune_components(p->release(), prune);
        p.reset();
      }
      for (int b : c.active_pre(i, j)) {
        ChartCell& cb = c.cell(i, j, b);
        if (cb.outside_post_unit) {
          cb.outside_pre_unit = true;
          continue;
        }
        MixtureAccumulator acc(std::vector<Slot>{slot});
        bool unary = false;
        for (int rid : g.unary_rules_for_child(b)) {
          const Rule& r = g.rule(rid);
          if (!mask.allowed(i, j, r.parent)) continue;
          const ChartCell& ca = c.cell(i, j, r.parent);
          if (!ca.has_outside_post()) continue;
          if (!unary) acc.add(cb.outside_post);
          unary = true;
          const SlotFactor f[] = {ca.outside_post_factor(), keep};
          contract_into(acc, r.weight, f);
        }
        if (unary)
          cb.outside_pre = prune_components(acc.release(), prune);
        else
          cb.outside_pre = cb.outside_post;
      }
      if (len == 1) continue;
      for (int a : c.active_pre(i, j)) {
        const ChartCell& ca = c.cell(i, j, a);
        if (!ca.has_outside_pre()) continue;
        const SlotFactor oa = ca.outside_pre_factor();
        for (int rid : binary_by_parent[static_cast<std::size_t>(a)]) {
          const Rule& r = g.rule(rid);
          for (int k = i; k < j; ++k) {
            const GaussianMixture& ib = c.cell(i, k, r.left).inside_post;
            if (ib.empty()) continue;
            const GaussianMixture& ic = c.cell(k + 1, j, r.right).inside_post;
            if (ic.empty()) continue;
            const SlotFactor fl[] = {oa, keep, SlotFactor::of(ic)};
            contract_into(acc_at(i, k, r.left), r.weight, fl);
            const SlotFactor fr[] = {oa, SlotFactor::of(ib), keep};
            contract_into(acc_at(k + 1, j, r.right), r.weight, fr);
          }
        }
      }
    }
  }
  c.outside_done_ = true;
}

double sentence_weight(const ParseChart& chart) {
  if (!chart.inside_done()) throw StateError("sentence weight requires the inside pass");
  const double best = log_total_mass(chart.cell(1, chart.length(), chart.start()).inside_post);
  if (best == kLogZero) throw NoParseError("sentence has no parse under the grammar");
  return best;
}

double log_span_mass(const ParseChart& chart, int i, int j) {
  if (!chart.outside_done()) throw StateError("span mass requires the outside pass");
  double total = kLogZero;
  for (int a : chart.active_post(i, j)) {
    const ChartCell& cell = chart.cell(i, j, a);
    if (!cell.has_outside_post()) continue;
    const SlotFactor f[] = {cell.outside_post_factor()};
    total = log_add(total, log_contract(cell.inside_post, f));
  }
  return total;
}

void for_each_anchor(const Grammar& g, const ParseChart& c,
                     const std::function<void(const Anchor&)>& visit) {
  if (!c.outside_done()) throw StateError("anchors require the outside pass");
  const int n = c.length();
  const ConstituentMask& mask = c.mask();
  for (int len = 1; len <= n; ++len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      if (len == 1) {
        for (int rid : g.rules_for_terminal(c.words()[static_cast<std::size_t>(i - 1)])) {
          const Rule& r = g.rule(rid);
          if (!mask.allowed(i, j, r.parent)) continue;
          const ChartCell& ca = c.cell(i, j, r.parent);
          if (!ca.has_outside_pre()) continue;
          const SlotFactor f[] = {ca.outside_pre_factor()};
          visit({rid, i, -1, j, f});
        }
      }
      for (int k = i; k < j; ++k) {
        for (int b : c.active_post(i, k)) {
          const GaussianMixture& ib = c.cell(i, k, b).inside_post;
          for (int rid : g.binary_rules_for_left(b)) {
            const Rule& r = g.rule(rid);
            if (!mask.allowed(i, j, r.parent)) continue;
            const ChartCell& ca = c.cell(i, j, r.parent);
            if (!ca.has_outside_pre()) continue;
            const GaussianMixture& ic = c.cell(k + 1, j, r.right).inside_post;
            if (ic.empty()) continue;
            const SlotFactor f[] = {ca.outside_pre_factor(), SlotFactor::of(ib),
                                    SlotFactor::of(ic)};
            visit({rid, i, k, j, f});
          }
        }
      }
      for (int b : c.active_pre(i, j)) {
        const GaussianMixture& ib = c.cell(i, j, b).inside_pre;
        for (int rid : g.unary_rules_for_child(b)) {
          const Rule& r = g.rule(rid);
          if (!mask.allowed(i, j, r.parent)) continue;
          const ChartCell& ca = c.cell(i, j, r.parent);
          if (!ca.has_outside_post()) continue;
          const SlotFactor f[] = {ca.outside_post_factor(), SlotFactor::of(ib)};
          visit({rid, i, -1, j, f});
        }
      }
    }
  }
}

double AnchoredPosterior::q_binary(int rule, int i, int k, int j) const {
  for (const auto& e : binary)
    if (e.rule == rule && e.i == i && e.k == k && e.j == j) return e.q;
  return 0.0;
}

double AnchoredPosterior::q_unary(int rule, int i, int j) const {
  for (const auto& e : unary)
    if (e.rule == rule && e.i == i && e.j == j) return e.q;
  return 0.0;
}

double AnchoredPosterior::q_lexical(int rule, int i) const {
  for (const auto& e : lexical)
    if (e.rule == rule && e.i == i) return e.q;
  return 0.0;
}

AnchoredPosterior rule_posteriors(const Grammar& g, const ParseChart& chart) {
  const double log_z = sentence_weight(chart);
  AnchoredPosterior p;
  p.n = chart.length();
  for_each_anchor(g, chart, [&](const Anchor& a) {
    const Rule& r = g.rule(a.rule);
    const double q = std::exp(log_contract(r.weight, a.factors) - log_z);
    switch (r.kind) {
      case RuleKind::binary: p.binary.push_back({a.rule, a.i, a.k, a.j, q}); break;
      case RuleKind::unary: p.unary.push_back({a.rule, a.i, a.j, q}); break;
      case RuleKind::lexical: p.lexical.push_back({a.rule, a.i, a.j, q}); break;
    }
  });
  return p;
}

namespace {

// Best-derivation tables for max-rule and Viterbi decoding.
struct Backtrace {
  int n;
  int nt;
  std::vector<double> pre, post;
  std::vector<int> pre_rule, pre_split, post_rule;

  Backtrace(int n_, int nt_)
      : n(n_),
        nt(nt_),
        pre(size(), kLogZero),
        post(size(), kLogZero),
        pre_rule(size(), -1),
        pre_split(size(), -1),
        post_rule(size(), -1) {}

  std::size_t size() const { return static_cast<std::size_t>(n) * n * nt; }
  std::size_t at(int i, int j, int a) const {
    return (static_cast<std::size_t>(i - 1) * n + (j - 1)) * nt + a;
  }

  void offer_pre(int i, int j, int a, int rule, int split, double score) {
    const std::size_t x = at(i, j, a);
    if (score == kLogZero) return;
    if (score > pre[x] ||
        (score == pre[x] && std::tie(rule, split) < std::tie(pre_rule[x], pre_split[x]))) {
      pre[x] = score;
      pre_rule[x] = rule;
      pre_split[x] = split;
    }
  }
  // Call after all pre candidates of the span are in.
  void seed_post(int i, int j) {
    for (int a = 0; a < nt; ++a) {
      const std::size_t x = at(i, j, a);
      post[x] = pre[x];
      post_rule[x] = -1;
    }
  }
  void offer_unary(int i, int j, int a, int rule, double score) {
    const std::size_t x = at(i, j, a);
    if (score == kLogZero) return;
    if (score > post[x] || (score == post[x] && post_rule[x] >= 0 && rule < post_rule[x])) {
      post[x] = score;
      post_rule[x] = rule;
    }
  }

  Tree build(const Grammar& g, int i, int j, int a, bool upper) const {
    const std::size_t x = at(i, j, a);
    if (upper && post_rule[x] >= 0) {
      const Rule& u = g.rule(post_rule[x]);
      return Tree::node(a, {build(g, i, j, u.left, false)});
    }
    const Rule& r = g.rule(pre_rule[x]);
    if (r.kind == RuleKind::lexical) return Tree::preterminal(a, r.terminal, i);
    const int k = pre_split[x];
    return Tree::node(a, {build(g, i, k, r.left, true), build(g, k + 1, j, r.right, true)});
  }
};

double safe_log(double q) { return q > 0.0 ? std::log(q) : kLogZero; }

}  // namespace

Tree max_rule_parse(const Grammar& g, const AnchoredPosterior& post) {
  const int n = post.n;
  if (n < 1) throw InputError("max_rule_parse: empty sentence");
  const int nt = g.num_nonterminals();
  Backtrace bt(n, nt);
  const auto span = [n](int i, int j) { return static_cast<std::size_t>(i - 1) * n + (j - 1); };
  std::vector<std::vector<const AnchoredPosterior::Binary*>> bin(static_cast<std::size_t>(n) * n);
  std::vector<std::vector<const AnchoredPosterior::Single*>> un(static_cast<std::size_t>(n) * n);
  std::vector<std::vector<const AnchoredPosterior::Single*>> lex(static_cast<std::size_t>(n) * n);
  for (const auto& e : post.binary) bin[span(e.i, e.j)].push_back(&e);
  for (const auto& e : post.unary) un[span(e.i, e.j)].push_back(&e);
  for (const auto& e : post.lexical) lex[span(e.i, e.j)].push_back(&e);

  for (int len = 1; len <= n; ++len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      for (const auto* e : lex[span(i, j)])
        bt.offer_pre(i, j, g.rule(e->rule).parent, e->rule, -1, safe_log(e->q));
      for (const auto* e : bin[span(i, j)]) {
        const Rule& r = g.rule(e->rule);
        const double score = safe_log(e->q) + bt.post[bt.at(i, e->k, r.left)] +
                             bt.post[bt.at(e->k + 1, j, r.right)];
        bt.offer_pre(i, j, r.parent, e->rule, e->k, score);
      }
      bt.seed_post(i, j);
      for (const auto* e : un[span(i, j)]) {
        const Rule& r = g.rule(e->rule);
        bt.offer_unary(i, j, r.parent, e->rule, safe_log(e->q) + bt.pre[bt.at(i, j, r.left)]);
      }
    }
  }
  if (bt.post[bt.at(1, n, g.start())] == kLogZero)
    throw NoParseError("no tree has positive posterior on every anchored rule");
  return bt.build(g, 1, n, g.start(), true);
}

std::vector<int> tree_rules(const Grammar& g, const Tree& t) {
  std::vector<int> out;
  const std::function<void(const Tree&)> walk = [&](const Tree& node) {
    int rid = -1;
    std::string desc;
    if (node.is_preterminal()) {
      rid = g.find_lexical(node.label, node.word);
      if (rid < 0)
        desc = g.symbols.nonterminal(node.label) + " -> '" + g.symbols.terminal(node.word) + "'";
    } else if (node.children.size() == 1) {
      rid = g.find_unary(node.label, node.children[0].label);
      if (rid < 0)
        desc = g.symbols.nonterminal(node.label) + " -> " +
               g.symbols.nonterminal(node.children[0].label);
    } else if (node.children.size() == 2) {
      rid = g.find_binary(node.label, node.children[0].label, node.children[1].label);
      if (rid < 0)
        desc = g.symbols.nonterminal(node.label) + " -> " +
               g.symbols.nonterminal(node.children[0].label) + " " +
               g.symbols.nonterminal(node.children[1].label);
    } else {
      throw InputError("tree is not binarized");
    }
    if (rid < 0) throw CoverageError("rule " + desc + " is not in the grammar");
    out.push_back(rid);
    for (const auto& ch : node.children) walk(ch);
  };
  walk(t);
  return out;
}

double log_rule_product(const Grammar& g, const AnchoredPosterior& post, const Tree& t) {
  double total = 0.0;
  const std::function<void(const Tree&, bool)> walk = [&](const Tree& node, bool upper) {
    if (node.is_preterminal()) {
      total += safe_log(post.q_lexical(g.find_lexical(node.label, node.word), node.begin));
    } else if (node.children.size() == 1) {
      if (!upper) throw InputError("tree has more than one unary at a span");
      total += safe_log(
          post.q_unary(g.find_unary(node.label, node.children[0].label), node.begin, node.end));
      walk(node.children[0], false);
      return;
    } else {
      const Tree& l = node.children[0];
      const Tree& r = node.children[1];
      total += safe_log(post.q_binary(g.find_binary(node.label, l.label, r.label), node.begin,
                                      l.end, node.end));
    }
    for (const auto& ch : node.children) walk(ch, true);
  };
  walk(t, true);
  return total;
}

namespace {

struct ScalarChart {
  int n;
  int nt;
  std::vector<double> ipre, iun, ipost, opre, opost;

  ScalarChart(int n_, int nt_) : n(n_), nt(nt_) {
    const std::size_t sz = static_cast<std::size_t>(n) * n * nt;
    for (auto* v : {&ipre, &iun, &ipost, &opre, &opost}) v->assign(sz, kLogZero);
  }
  std::size_t at(int i, int j, int a) const {
    return (static_cast<std::size_t>(i - 1) * n + (j - 1)) * nt + a;
  }
};

}  // namespace

ConstituentMask pcfg_mask(const Grammar& g, std::span<const int> words, double p_min) {
  const int n = static_cast<int>(words.size());
  const int nt = g.num_nonterminals();
  ConstituentMask all = ConstituentMask::all(n, nt);
  check_sentence(g, words, all);
  if (!(p_min > 0.0)) return all;

  std::vector<double> logp(g.num_rules());
  for (std::size_t r = 0; r < g.num_rules(); ++r) logp[r] = safe_log(g.rules()[r].baseline_prob);
  const auto binary_by_parent = binary_rules_by_parent(g);

  ScalarChart sc(n, nt);
  for (int len = 1; len <= n; ++len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      if (len == 1) {
        for (int rid : g.rules_for_terminal(words[static_cast<std::size_t>(i - 1)])) {
          auto& x = sc.ipre[sc.at(i, j, g.rule(rid).parent)];
          x = log_add(x, logp[static_cast<std::size_t>(rid)]);
        }
      } else {
        for (int a = 0; a < nt; ++a) {
          double acc = kLogZero;
          for (int rid : binary_by_parent[static_cast<std::size_t>(a)]) {
            const Rule& r = g.rule(rid);
            for (int k = i; k < j; ++k) {
              const double l = sc.ipost[sc.at(i, k, r.left)];
              const double rt = sc.ipost[sc.at(k + 1, j, r.right)];
              if (l == kLogZero || rt == kLogZero) continue;
              acc = log_add(acc, logp[static_cast<std::size_t>(rid)] + l + rt);
            }
          }
          sc.ipre[sc.at(i, j, a)] = acc;
        }
      }
      for (const Rule& r : g.rules()) {
        if (r.kind != RuleKind::unary) continue;
        const double b = sc.ipre[sc.at(i, j, r.left)];
        if (b == kLogZero) continue;
        auto& x = sc.iun[sc.at(i, j, r.parent)];
        x = log_add(x, logp[static_cast<std::size_t>(r.id)] + b);
      }
      for (int a = 0; a < nt; ++a)
        sc.ipost[sc.at(i, j, a)] = log_add(sc.ipre[sc.at(i, j, a)], sc.iun[sc.at(i, j, a)]);
    }
  }
  const double log_z = sc.ipost[sc.at(1, n, g.start())];
  if (log_z == kLogZero) return all;

  sc.opost[sc.at(1, n, g.start())] = 0.0;
  for (int len = n; len >= 1; --len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      for (int b = 0; b < nt; ++b) sc.opre[sc.at(i, j, b)] = sc.opost[sc.at(i, j, b)];
      for (const Rule& r : g.rules()) {
        if (r.kind != RuleKind::unary) continue;
        const double oa = sc.opost[sc.at(i, j, r.parent)];
        if (oa == kLogZero) continue;
        auto& x = sc.opre[sc.at(i, j, r.left)];
        x = log_add(x, logp[static_cast<std::size_t>(r.id)] + oa);
      }
      if (len == 1) continue;
      for (int a = 0; a < nt; ++a) {
        const double oa = sc.opre[sc.at(i, j, a)];
        if (oa == kLogZero || sc.ipre[sc.at(i, j, a)] == kLogZero) continue;
        for (int rid : binary_by_parent[static_cast<std::size_t>(a)]) {
          const Rule& r = g.rule(rid);
          const double lp = logp[static_cast<std::size_t>(rid)] + oa;
          for (int k = i; k < j; ++k) {
            const double l = sc.ipost[sc.at(i, k, r.left)];
            const double rt = sc.ipost[sc.at(k + 1, j, r.right)];
            if (l == kLogZero || rt == kLogZero) continue;
            auto& xl = sc.opost[sc.at(i, k, r.left)];
            xl = log_add(xl, lp + rt);
            auto& xr = sc.opost[sc.at(k + 1, j, r.right)];
            xr = log_add(xr, lp + l);
          }
        }
      }
    }
  }

  ConstituentMask mask = ConstituentMask::none(n, nt);
  const double log_p_min = std::log(p_min);
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      for (int a = 0; a < nt; ++a) {
        const std::size_t x = sc.at(i, j, a);
        const double lp =
            log_add(sc.ipre[x] + sc.opre[x], sc.iun[x] + sc.opost[x]) - log_z;
        if (lp >= log_p_min) mask.set(i, j, a, true);
      }
    }
  }
  mask.set(1, n, g.start(), true);
  return mask;
}

ConstituentMask kbest_mask(const std::vector<Tree>& trees, int n, int num_nonterminals) {
  ConstituentMask mask = ConstituentMask::none(n, num_nonterminals);
  for (const Tree& t : trees) {
    if (t.begin != 1 || t.end != n)
      throw InputError("k-best tree covers " + std::to_string(t.length()) +
                       " words, sentence has " + std::to_string(n));
    for (const auto& c : constituents(t)) mask.set(c.begin, c.end, c.label, true);
  }
  return mask;
}

Tree pcfg_viterbi(const Grammar& g, std::span<const int> words, const ConstituentMask& mask) {
  check_sentence(g, words, mask);
  const int n = static_cast<int>(words.size());
  const int nt = g.num_nonterminals();
  const auto binary_by_parent = binary_rules_by_parent(g);
  Backtrace bt(n, nt);
  for (int len = 1; len <= n; ++len) {
    for (int i = 1; i + len - 1 <= n; ++i) {
      const int j = i + len - 1;
      if (len == 1) {
        for (int rid : g.rules_for_terminal(words[static_cast<std::size_t>(i - 1)])) {
          const Rule& r = g.rule(rid);
          if (mask.allowed(i, j, r.parent))
            bt.offer_pre(i, j, r.parent, rid, -1, safe_log(r.baseline_prob));
        }
      } else {
        for (int a = 0; a < nt; ++a) {
          if (!mask.allowed(i, j, a)) continue;
          for (int rid : binary_by_parent[static_cast<std::size_t>(a)]) {
            const Rule& r = g.rule(rid);
            for (int k = i; k < j; ++k) {
              const double s = safe_log(r.baseline_prob) + bt.post[bt.at(i, k, r.left)] +
                               bt.post[bt.at(k + 1, j, r.right)];
              bt.offer_pre(i, j, a, rid, k, s);
            }
          }
        }
      }
      bt.seed_post(i, j);
      for (const Rule& r : g.rules()) {
        if (r.kind != RuleKind::unary || !mask.allowed(i, j, r.parent)) continue;
        bt.offer_unary(i, j, r.parent, r.id,
                       safe_log(r.baseline_prob) + bt.pre[bt.at(i, j, r.left)]);
      }
    }
  }
  if (bt.post[bt.at(1, n, g.start())] == kLogZero)
    throw NoParseError("sentence has no parse under the baseline grammar");
  return bt.build(g, 1, n, g.start(), true);
}

GoldPass gold_pass(const Grammar& g, const Tree& t, const PruneConfig& prune, bool with_outside) {
  const std::vector<int> rules = tree_rules(g, t);
  GoldPass gp;
  gp.nodes.resize(rules.size());
  {
    std::size_t next = 0;
    const std::function<int(const Tree&)> flatten = [&](const Tree& node) {
      const int me = static_cast<int>(next++);
      GoldPass::Node& gn = gp.nodes[static_cast<std::size_t>(me)];
      gn.rule = rules[static_cast<std::size_t>(me)];
      gn.begin = node.begin;
      gn.end = node.end;
      if (!node.children.empty()) {
        const int l = flatten(node.children[0]);
        gp.nodes[static_cast<std::size_t>(me)].left = l;
        if (node.children.size() == 2) {
          const int r = flatten(node.children[1]);
          gp.nodes[static_cast<std::size_t>(me)].right = r;
        }
      }
      return me;
    };
    flatten(t);
  }
  const SlotFactor keep = SlotFactor::keep();
  auto& nodes = gp.nodes;
  for (std::size_t x = nodes.size(); x-- > 0;) {
    GoldPass::Node& nd = nodes[x];
    const Rule& r = g.rule(nd.rule);
    GaussianMixture in;
    if (r.kind == RuleKind::lexical) {
      in = r.weight;
    } else if (r.kind == RuleKind::unary) {
      const SlotFactor f[] = {keep, SlotFactor::of(nodes[static_cast<std::size_t>(nd.left)].inside)};
      in = contract(r.weight, f);
    } else {
      const SlotFactor f[] = {keep, SlotFactor::of(nodes[static_cast<std::size_t>(nd.left)].inside),
                              SlotFactor::of(nodes[static_cast<std::size_t>(nd.right)].inside)};
      in = contract(r.weight, f);
    }
    nd.inside = prune_components(rename_slots(in, {"x"}), prune);
  }
  gp.log_weight = log_total_mass(nodes.front().inside);
  if (!with_outside) return gp;
  nodes.front().outside_unit = true;
  for (std::size_t x = 0; x < nodes.size(); ++x) {
    const GoldPass::Node& nd = nodes[x];
    const Rule& r = g.rule(nd.rule);
    const SlotFactor o = nd.outside_factor();
    if (r.kind == RuleKind::unary) {
      const SlotFactor f[] = {o, keep};
      nodes[static_cast<std::size_t>(nd.left)].outside =
          prune_components(rename_slots(contract(r.weight, f), {"x"}), prune);
    } else if (r.kind == RuleKind::binary) {
      GoldPass::Node& l = nodes[static_cast<std::size_t>(nd.left)];
      GoldPass::Node& rt = nodes[static_cast<std::size_t>(nd.right)];
      const SlotFactor fl[] = {o, keep, SlotFactor::of(rt.inside)};
      const SlotFactor fr[] = {o, SlotFactor::of(l.inside), keep};
      GaussianMixture ol = contract(r.weight, fl);
      GaussianMixture orr = contract(r.weight, fr);
      l.outside = prune_components(rename_slots(ol, {"x"}), prune);
      rt.outside = prune_components(rename_slots(orr, {"x"}), prune);
    }
  }
  return gp;
}

}  // namespace lveg
