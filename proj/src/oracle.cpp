#include "lveg/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <tuple>

#include "lveg/error.hpp"
#include "lveg/numeric.hpp"

namespace lveg {

namespace {

GaussianMixture upward_message(const Grammar& g, const Tree& t) {
  if (t.is_preterminal()) {
    const int rid = g.find_lexical(t.label, t.word);
    if (rid < 0)
      throw CoverageError("rule " + g.symbols.nonterminal(t.label) + " -> '" +
                          g.symbols.terminal(t.word) + "' is not in the grammar");
    return g.rule(rid).weight;
  }
  if (t.children.size() == 1) {
    const int rid = g.find_unary(t.label, t.children[0].label);
    if (rid < 0)
      throw CoverageError("rule " + g.symbols.nonterminal(t.label) + " -> " +
                          g.symbols.nonterminal(t.children[0].label) + " is not in the grammar");
    const GaussianMixture child = rename_slots(upward_message(g, t.children[0]), {"child"});
    return marginalize(product(g.rule(rid).weight, child), "child");
  }
  if (t.children.size() != 2) throw InputError("tree is not binarized");
  const int rid = g.find_binary(t.label, t.children[0].label, t.children[1].label);
  if (rid < 0)
    throw CoverageError("rule " + g.symbols.nonterminal(t.label) + " -> " +
                        g.symbols.nonterminal(t.children[0].label) + " " +
                        g.symbols.nonterminal(t.children[1].label) + " is not in the grammar");
  const GaussianMixture left = rename_slots(upward_message(g, t.children[0]), {"left"});
  const GaussianMixture right = rename_slots(upward_message(g, t.children[1]), {"right"});
  GaussianMixture m = marginalize(product(g.rule(rid).weight, left), "left");
  return marginalize(product(m, right), "right");
}

class Enumerator {
 public:
  Enumerator(const Grammar& g, std::span<const int> words) : g_(g), words_(words) {
    binary_.resize(static_cast<std::size_t>(g.num_nonterminals()));
    for (const Rule& r : g.rules())
      if (r.kind == RuleKind::binary) binary_[static_cast<std::size_t>(r.parent)].push_back(r.id);
  }

  // Derivations of A over (i, j); `upper` allows one unary on top.
  const std::vector<Tree>& derive(int i, int j, int a, bool upper) {
    const auto key = std::make_tuple(i, j, a, upper);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    std::vector<Tree> out;
    if (upper) {
      out = derive(i, j, a, false);
      for (const Rule& r : g_.rules()) {
        if (r.kind != RuleKind::unary || r.parent != a) continue;
        for (const Tree& c : derive(i, j, r.left, false)) out.push_back(Tree::node(a, {c}));
      }
    } else if (i == j) {
      const int w = words_[static_cast<std::size_t>(i - 1)];
      if (g_.find_lexical(a, w) >= 0) out.push_back(Tree::preterminal(a, w, i));
    } else {
      for (int rid : binary_[static_cast<std::size_t>(a)]) {
        const Rule& r = g_.rule(rid);
        for (int k = i; k < j; ++k) {
          const std::vector<Tree>& ls = derive(i, k, r.left, true);
          if (ls.empty()) continue;
          const std::vector<Tree>& rs = derive(k + 1, j, r.right, true);
          for (const Tree& l : ls)
            for (const Tree& rt : rs) out.push_back(Tree::node(a, {l, rt}));
        }
      }
    }
    return memo_.emplace(key, std::move(out)).first->second;
  }

 private:
  const Grammar& g_;
  std::span<const int> words_;
  std::vector<std::vector<int>> binary_;
  std::map<std::tuple<int, int, int, bool>, std::vector<Tree>> memo_;
};

double count_derivations(const Grammar& g, std::span<const int> words, int i, int j, int a, bool upper,
                         std::map<std::tuple<int, int, int, bool>, double>& memo) {
  const auto key = std::make_tuple(i, j, a, upper);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  double c = 0.0;
  if (upper) {
    c = count_derivations(g, words, i, j, a, false, memo);
    for (const Rule& r : g.rules())
      if (r.kind == RuleKind::unary && r.parent == a)
        c += count_derivations(g, words, i, j, r.left, false, memo);
  } else if (i == j) {
    c = g.find_lexical(a, words[static_cast<std::size_t>(i - 1)]) >= 0 ? 1.0 : 0.0;
  } else {
    for (const Rule& r : g.rules()) {
      if (r.kind != RuleKind::binary || r.parent != a) continue;
      for (int k = i; k < j; ++k)
        c += count_derivations(g, words, i, k, r.left, true, memo) *
             count_derivations(g, words, k + 1, j, r.right, true, memo);
    }
  }
  memo.emplace(key, c);
  return c;
}

}  // namespace

double count_parses(const Grammar& g, std::span<const int> words) {
  if (words.empty() || g.start() < 0) return 0.0;
  std::map<std::tuple<int, int, int, bool>, double> memo;
  return count_derivations(g, words, 1, static_cast<int>(words.size()), g.start(), true, memo);
}

double tree_weight(const Grammar& g, const Tree& t) {
  return log_total_mass(upward_message(g, t));
}

std::vector<EnumeratedParse> enumerate_parses(const Grammar& g, std::span<const int> words) {
  const int n = static_cast<int>(words.size());
  if (n < 1) throw InputError("enumerate_parses: empty sentence");
  if (n > kMaxEnumerationLength)
    throw InputError("enumerate_parses: sentence longer than " +
                     std::to_string(kMaxEnumerationLength) + " words");
  if (g.start() < 0) throw StateError("grammar has no start symbol");
  Enumerator e(g, words);
  std::vector<EnumeratedParse> out;
  for (const Tree& t : e.derive(1, n, g.start(), true)) out.push_back({t, tree_weight(g, t)});
  return out;
}

double log_total_weight(const std::vector<EnumeratedParse>& parses) {
  std::vector<double> lw;
  lw.reserve(parses.size());
  for (const auto& p : parses) lw.push_back(p.log_weight);
  return log_sum_exp(lw);
}

AnchoredPosterior brute_force_posteriors(const Grammar& g,
                                         const std::vector<EnumeratedParse>& parses, int n) {
  const double log_z = log_total_weight(parses);
  // (kind, rule, i, k, j) -> q
  std::map<std::tuple<int, int, int, int, int>, double> acc;
  for (const auto& p : parses) {
    const double share = std::exp(p.log_weight - log_z);
    const std::function<void(const Tree&)> walk = [&](const Tree& t) {
      if (t.is_preterminal()) {
        acc[{2, g.find_lexical(t.label, t.word), t.begin, -1, t.end}] += share;
      } else if (t.children.size() == 1) {
        acc[{1, g.find_unary(t.label, t.children[0].label), t.begin, -1, t.end}] += share;
      } else {
        const Tree& l = t.children[0];
        const Tree& r = t.children[1];
        acc[{0, g.find_binary(t.label, l.label, r.label), t.begin, l.end, t.end}] += share;
      }
      for (const auto& c : t.children) walk(c);
    };
    walk(p.tree);
  }
  AnchoredPosterior out;
  out.n = n;
  for (const auto& [key, q] : acc) {
    const auto [kind, rule, i, k, j] = key;
    if (kind == 0)
      out.binary.push_back({rule, i, k, j, q});
    else if (kind == 1)
      out.unary.push_back({rule, i, j, q});
    else
      out.lexical.push_back({rule, i, j, q});
  }
  return out;
}

std::vector<double> fd_gradient(Objective& obj, double step) {
  const std::vector<GaussianMixture*> weights = obj.weights();
  const std::vector<const GaussianMixture*> cweights(weights.begin(), weights.end());
  const ParamLayout layout(cweights, obj.spherical());
  std::vector<double> params = get_params(cweights, layout);
  const std::vector<double> original = params;
  auto total = [&] {
    set_params(weights, layout, params);
    double s = 0.0;
    for (std::size_t e = 0; e < obj.num_examples(); ++e) s += obj.nll(e);
    return s;
  };
  std::vector<double> grad(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = original[i] + step;
    const double up = total();
    params[i] = original[i] - step;
    const double down = total();
    params[i] = original[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  set_params(weights, layout, original);
  return grad;
}

std::vector<double> fd_gradient(Grammar& g, const std::vector<Example>& batch, double step) {
  ParseObjective obj(g, batch, PruneConfig::disabled(), 0.0);
  return fd_gradient(obj, step);
}

Grammar random_grammar(std::mt19937_64& rng, const RandomGrammarSpec& spec) {
  std::uniform_int_distribution<int> nt_dist(spec.min_nonterminals, spec.max_nonterminals);
  std::uniform_int_distribution<int> k_dist(1, spec.max_K);
  std::uniform_int_distribution<int> d_dist(1, spec.max_d);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  Grammar g;
  const int nt = nt_dist(rng);
  g.d = d_dist(rng);
  g.K = k_dist(rng);
  g.spherical = spec.spherical;
  for (int a = 0; a < nt; ++a) g.symbols.nonterminals.intern("N" + std::to_string(a));
  for (int t = 0; t < spec.num_terminals; ++t)
    g.symbols.terminals.intern(std::string(1, static_cast<char>('a' + t)));
  g.symbols.start_id = 0;

  std::uniform_int_distribution<int> comp_dist(1, g.K);
  auto make_weight = [&](RuleKind kind) {
    GaussianMixture w(rule_slots(kind, g.d));
    const int k = comp_dist(rng);
    std::vector<double> mean(w.dims()), var(w.dims());
    for (int c = 0; c < k; ++c) {
      const double lw = -1.0 + 1.5 * uni(rng);
      for (double& m : mean) m = normal(rng);
      const double shared = 0.5 + 1.5 * uni(rng);
      for (double& v : var) v = spec.spherical ? shared : 0.5 + 1.5 * uni(rng);
      w.add_component(lw, mean, var);
    }
    return w;
  };
  std::vector<Rule> rules;
  auto add = [&](RuleKind kind, int parent, int left, int right, int terminal) {
    Rule r;
    r.kind = kind;
    r.parent = parent;
    r.left = left;
    r.right = right;
    r.terminal = terminal;
    r.weight = make_weight(kind);
    rules.push_back(std::move(r));
  };

  bool start_binary = false;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nt; ++b)
      for (int c = 0; c < nt; ++c)
        if (uni(rng) < spec.binary_p) {
          add(RuleKind::binary, a, b, c, -1);
          start_binary |= a == 0;
        }
  if (!start_binary) {
    std::uniform_int_distribution<int> pick(0, nt - 1);
    const int b = pick(rng);
    const int c = pick(rng);
    add(RuleKind::binary, 0, b, c, -1);
  }
  if (!spec.cnf)
    for (int a = 0; a < nt; ++a)
      for (int b = 0; b < nt; ++b)
        if (a != b && uni(rng) < spec.unary_p) add(RuleKind::unary, a, b, -1, -1);
  for (int t = 0; t < spec.num_terminals; ++t) {
    bool covered = false;
    for (int a = 0; a < nt; ++a)
      if (uni(rng) < spec.lexical_p) {
        add(RuleKind::lexical, a, -1, -1, t);
        covered = true;
      }
    if (!covered) add(RuleKind::lexical, std::uniform_int_distribution<int>(0, nt - 1)(rng), -1, -1, t);
  }
  std::vector<int> per_parent(static_cast<std::size_t>(nt), 0);
  for (const Rule& r : rules) ++per_parent[static_cast<std::size_t>(r.parent)];
  for (Rule& r : rules) {
    r.baseline_prob = 1.0 / per_parent[static_cast<std::size_t>(r.parent)];
    g.add_rule(std::move(r));
  }
  return g;
}

std::vector<int> random_sentence(std::mt19937_64& rng, const Grammar& g, int n) {
  std::uniform_int_distribution<int> pick(0, g.symbols.terminals.size() - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int& w : out) w = pick(rng);
  return out;
}

void scale_grammar(Grammar& g, double c) {
  const double lc = std::log(c);
  for (std::size_t r = 0; r < g.num_rules(); ++r)
    for (double& lw : g.mutable_rule(static_cast<int>(r)).weight.mutable_log_weights()) lw += lc;
}

namespace {

double rel_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

void record(VerifyCheck& c, double err) {
  ++c.instances;
  c.max_error = std::max(c.max_error, err);
  if (!(err <= c.tolerance)) c.passed = false;
}

}  // namespace

std::vector<VerifyCheck> run_verify(std::uint64_t seed, int instances) {
  VerifyCheck weight{"sentence weight equals enumeration", true, 0, 0.0, 1e-8};
  VerifyCheck post{"anchored posteriors equal enumeration", true, 0, 0.0, 1e-8};
  VerifyCheck gold{"tree weight equals gold-constrained inside", true, 0, 0.0, 1e-10};
  VerifyCheck sums{"posterior sum rules", true, 0, 0.0, 1e-6};
  VerifyCheck decode{"max-rule decode equals brute-force argmax", true, 0, 0.0, 1e-9};
  VerifyCheck grad{"analytic gradient equals finite differences", true, 0, 0.0, 1e-3};

  std::mt19937_64 rng(seed);
  const PruneConfig off = PruneConfig::disabled();
  for (int inst = 0; inst < instances; ++inst) {
    Grammar g = random_grammar(rng, {});
    std::vector<int> words;
    std::vector<EnumeratedParse> parses;
    for (int attempt = 0; attempt < 50 && parses.empty(); ++attempt) {
      words = random_sentence(rng, g, std::uniform_int_distribution<int>(1, 5)(rng));
      if (count_parses(g, words) > kMaxEnumeratedParses) continue;
      parses = enumerate_parses(g, words);
    }
    if (parses.empty()) continue;
    const int n = static_cast<int>(words.size());
    ParseChart chart = inside(g, words, ConstituentMask::all(n, g.num_nonterminals()), off);
    outside(g, chart, off);
    record(weight, std::abs(std::expm1(sentence_weight(chart) - log_total_weight(parses))));

    const AnchoredPosterior q = rule_posteriors(g, chart);
    const AnchoredPosterior bf = brute_force_posteriors(g, parses, n);
    double perr = 0.0;
    for (const auto& e : bf.binary) perr = std::max(perr, std::abs(e.q - q.q_binary(e.rule, e.i, e.k, e.j)));
    for (const auto& e : q.binary) perr = std::max(perr, std::abs(e.q - bf.q_binary(e.rule, e.i, e.k, e.j)));
    for (const auto& e : bf.unary) perr = std::max(perr, std::abs(e.q - q.q_unary(e.rule, e.i, e.j)));
    for (const auto& e : q.unary) perr = std::max(perr, std::abs(e.q - bf.q_unary(e.rule, e.i, e.j)));
    for (const auto& e : bf.lexical) perr = std::max(perr, std::abs(e.q - q.q_lexical(e.rule, e.i)));
    for (const auto& e : q.lexical) perr = std::max(perr, std::abs(e.q - bf.q_lexical(e.rule, e.i)));
    record(post, perr);

    double gerr = 0.0;
    for (std::size_t p = 0; p < std::min<std::size_t>(parses.size(), 5); ++p)
      gerr = std::max(gerr, std::abs(std::expm1(gold_pass(g, parses[p].tree, off, false).log_weight -
                                                parses[p].log_weight)));
    record(gold, gerr);

    double bin = 0.0;
    std::vector<double> lex(static_cast<std::size_t>(n), 0.0);
    for (const auto& e : q.binary) bin += e.q;
    for (const auto& e : q.lexical) lex[static_cast<std::size_t>(e.i - 1)] += e.q;
    double serr = std::abs(bin - (n - 1));
    for (double l : lex) serr = std::max(serr, std::abs(l - 1.0));
    record(sums, serr);

    double best = kLogZero, second = kLogZero;
    const Tree* best_tree = nullptr;
    for (const auto& p : parses) {
      const double s = log_rule_product(g, q, p.tree);
      if (s > best) {
        second = best;
        best = s;
        best_tree = &p.tree;
      } else if (s > second) {
        second = s;
      }
    }
    const Tree decoded = max_rule_parse(g, q);
    const double ds = log_rule_product(g, q, decoded);
    double derr = std::abs(ds - best) / std::max(1.0, std::abs(best));
    if (best - second > 1e-9 && !(decoded == *best_tree)) derr = 1.0;
    record(decode, derr);

    if (inst % 4 == 0 && n <= 4) {
      std::vector<Example> batch{{words, parses[std::uniform_int_distribution<std::size_t>(
                                                0, parses.size() - 1)(rng)].tree}};
      ParseObjective obj(g, batch, off, 0.0);
      const std::vector<GaussianMixture*> w = obj.weights();
      const std::vector<const GaussianMixture*> cw(w.begin(), w.end());
      const ParamLayout layout(cw, g.spherical);
      const std::size_t idx[] = {0};
      const BatchResult br = batch_gradient(obj, layout, idx, 1);
      const std::vector<double> fd = fd_gradient(obj, 1e-4);
      double err = 0.0;
      for (std::size_t i = 0; i < fd.size(); ++i)
        if (std::max(std::abs(fd[i]), std::abs(br.gradient[i])) > 1e-8)
          err = std::max(err, rel_error(br.gradient[i], fd[i]));
      record(grad, err);
    }
  }
  return {weight, post, gold, sums, decode, grad};
}

}  // namespace lveg
