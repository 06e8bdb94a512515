// Acceptance checks: one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "lveg/corpus.hpp"
#include "lveg/error.hpp"
#include "lveg/oracle.hpp"
#include "lveg/pipeline.hpp"

using namespace lveg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const PruneConfig kOff = PruneConfig::disabled();

struct Instance {
  Grammar g;
  std::vector<int> words;
  std::vector<EnumeratedParse> parses;
};

// Draws grammars until one has a parse for a sentence of length in [lo, hi].
Instance draw(std::mt19937_64& rng, const RandomGrammarSpec& spec, int lo, int hi) {
  for (;;) {
    Instance x{random_grammar(rng, spec), {}, {}};
    for (int attempt = 0; attempt < 50 && x.parses.empty(); ++attempt) {
      x.words = random_sentence(rng, x.g, std::uniform_int_distribution<int>(lo, hi)(rng));
      if (count_parses(x.g, x.words) > kMaxEnumeratedParses) continue;
      x.parses = enumerate_parses(x.g, x.words);
    }
    if (!x.parses.empty()) return x;
  }
}

ParseChart chart_of(const Grammar& g, const std::vector<int>& words) {
  ParseChart c = inside(g, words, ConstituentMask::all(static_cast<int>(words.size()), g.num_nonterminals()), kOff);
  outside(g, c, kOff);
  return c;
}

double posterior_gap(const AnchoredPosterior& a, const AnchoredPosterior& b) {
  double e = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    const AnchoredPosterior& x = pass ? b : a;
    const AnchoredPosterior& y = pass ? a : b;
    for (const auto& r : x.binary) e = std::max(e, std::abs(r.q - y.q_binary(r.rule, r.i, r.k, r.j)));
    for (const auto& r : x.unary) e = std::max(e, std::abs(r.q - y.q_unary(r.rule, r.i, r.j)));
    for (const auto& r : x.lexical) e = std::max(e, std::abs(r.q - y.q_lexical(r.rule, r.i)));
  }
  return e;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  double werr = 0.0, perr = 0.0;
  const int count = 200;
  for (int i = 0; i < count; ++i) {
    const Instance x = draw(rng, {}, 1, 5);
    const ParseChart c = chart_of(x.g, x.words);
    werr = std::max(werr, std::abs(std::expm1(sentence_weight(c) - log_total_weight(x.parses))));
    perr = std::max(perr, posterior_gap(rule_posteriors(x.g, c),
                                        brute_force_posteriors(x.g, x.parses, static_cast<int>(x.words.size()))));
  }
  return {werr <= 1e-8 && perr <= 1e-8,
          fmt("%d instances, weight rel err %.2e, posterior err %.2e (tol 1e-8)", count, werr, perr)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(77);
  double err = 0.0;
  std::size_t entries = 0;
  const int count = 60;
  for (int i = 0; i < count; ++i) {
    RandomGrammarSpec spec;
    spec.spherical = i % 4 == 3;
    Instance x = draw(rng, spec, 1, 5);
    const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, x.parses.size() - 1)(rng);
    const std::vector<Example> batch{{x.words, x.parses[pick].tree}};
    ParseObjective obj(x.g, batch, kOff, 0.0);
    const auto w = obj.weights();
    const std::vector<const GaussianMixture*> cw(w.begin(), w.end());
    const ParamLayout layout(cw, x.g.spherical);
    const std::size_t idx[] = {0};
    const BatchResult br = batch_gradient(obj, layout, idx, 1);
    const std::vector<double> fd = fd_gradient(obj, 1e-4);
    for (std::size_t k = 0; k < fd.size(); ++k) {
      const double a = br.gradient[k], b = fd[k];
      if (std::max(std::abs(a), std::abs(b)) <= 1e-8) continue;
      ++entries;
      err = std::max(err, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
    }
  }
  return {err <= 1e-3, fmt("%d instances, %zu entries, max rel err %.2e (tol 1e-3)", count, entries, err)};
}

Outcome sum_rules() {
  std::mt19937_64 rng(31);
  RandomGrammarSpec cnf;
  cnf.cnf = true;
  double err = 0.0;
  int count = 0;
  for (int n = 2; n <= 6; ++n) {
    for (int i = 0; i < 20; ++i, ++count) {
      const Instance x = draw(rng, cnf, n, n);
      const AnchoredPosterior q = rule_posteriors(x.g, chart_of(x.g, x.words));
      double bin = 0.0;
      std::vector<double> lex(static_cast<std::size_t>(n), 0.0);
      for (const auto& e : q.binary) bin += e.q;
      for (const auto& e : q.lexical) lex[static_cast<std::size_t>(e.i - 1)] += e.q;
      err = std::max(err, std::abs(bin - (n - 1)));
      for (double l : lex) err = std::max(err, std::abs(l - 1.0));
    }
  }
  return {err <= 1e-6, fmt("%d CNF sentences, n = 2..6, max err %.2e (tol 1e-6)", count, err)};
}

Outcome scaling_invariance() {
  std::mt19937_64 rng(55);
  RandomGrammarSpec cnf;
  cnf.cnf = true;
  double err = 0.0;
  int changed = 0;
  const int count = 100;
  for (int i = 0; i < count; ++i) {
    Instance x = draw(rng, cnf, 1, 5);
    const AnchoredPosterior before = rule_posteriors(x.g, chart_of(x.g, x.words));
    const Tree t0 = max_rule_parse(x.g, before);
    scale_grammar(x.g, 10.0);
    const AnchoredPosterior after = rule_posteriors(x.g, chart_of(x.g, x.words));
    err = std::max(err, posterior_gap(before, after));
    changed += !(max_rule_parse(x.g, after) == t0);
  }
  return {err <= 1e-9 && changed == 0,
          fmt("%d instances, c = 10, posterior change %.2e (tol 1e-9), %d decodes changed", count, err, changed)};
}

Outcome max_rule_decode() {
  std::mt19937_64 rng(99);
  int count = 0, bad = 0, ties = 0;
  for (int i = 0; i < 200; ++i, ++count) {
    const Instance x = draw(rng, {}, 1, 5);
    const AnchoredPosterior q = rule_posteriors(x.g, chart_of(x.g, x.words));
    double best = -INFINITY, second = -INFINITY;
    const Tree* best_tree = nullptr;
    for (const auto& p : x.parses) {
      const double s = log_rule_product(x.g, q, p.tree);
      if (s > best) {
        second = best;
        best = s;
        best_tree = &p.tree;
      } else if (s > second) {
        second = s;
      }
    }
    const Tree t = max_rule_parse(x.g, q);
    const double s = log_rule_product(x.g, q, t);
    const bool tied = best - second <= 1e-9 * std::max(1.0, std::abs(best));
    ties += tied;
    if (std::abs(s - best) > 1e-9 * std::max(1.0, std::abs(best)) || (!tied && !(t == *best_tree))) ++bad;
  }
  return {bad == 0, fmt("%d instances, %d mismatches, %d tied optima", count, bad, ties)};
}

Outcome pruning_arithmetic() {
  struct Case {
    std::size_t kc, k_min, k_max;
    double theta;
    std::size_t expect;
  };
  const Case cases[] = {{30, 40, 50, 0.35, 30}, {100, 20, 50, 0.35, 25}, {1000000, 20, 50, 0.35, 50}};
  bool ok = true;
  std::string detail;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (const Case& c : cases) {
    const PruneConfig cfg = PruneConfig::kmin_kmax(c.k_min, c.k_max, c.theta);
    const std::size_t k = allowed_components(c.kc, cfg);
    // The pruned mixture must have exactly that many components.
    GaussianMixture f({{"x", 1}});
    f.reserve(c.kc);
    for (std::size_t i = 0; i < c.kc; ++i) {
      const double m[] = {normal(rng)}, v[] = {1.0};
      f.add_component(normal(rng), m, v);
    }
    const std::size_t kept = prune_components(f, cfg).size();
    ok = ok && k == c.expect && kept == c.expect;
    detail += fmt("%zu->%zu ", c.kc, kept);
  }
  return {ok, detail + "(expected 30->30 100->25 1000000->50)"};
}

struct Hmm {
  static constexpr int T = 4, V = 12;
  std::array<double, T> pi{0.4, 0.3, 0.2, 0.1};
  // Last column is the stop probability.
  std::array<std::array<double, T + 1>, T> A{{{0.1, 0.5, 0.2, 0.1, 0.1},
                                              {0.2, 0.1, 0.4, 0.2, 0.1},
                                              {0.3, 0.2, 0.1, 0.3, 0.1},
                                              {0.25, 0.25, 0.25, 0.1, 0.15}}};
  std::array<std::array<double, V>, T> B{};

  Hmm() {
    auto normalize = [](std::array<double, V>& row) {
      double z = 0.0;
      for (double x : row) z += x;
      for (double& x : row) x /= z;
    };
    for (int s = 0; s < T; ++s) {
      B[s].fill(0.02);
      for (int k = 0; k < 3; ++k) B[s][(3 * s + k) % V] += 0.3;
      normalize(B[s]);
      B[s][(3 * s + 3) % V] += 0.15;
      normalize(B[s]);
    }
  }

  template <std::size_t N>
  static int pick(std::mt19937_64& rng, const std::array<double, N>& p, std::size_t n = N) {
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      c += p[i];
      if (r < c) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);
  }

  // Words are "w0".."w11", tags "T0".."T3"; sentences are capped at 40 tokens.
  std::vector<std::pair<std::vector<int>, std::vector<int>>> sample(std::mt19937_64& rng, int count) const {
    std::vector<std::pair<std::vector<int>, std::vector<int>>> out;
    for (int i = 0; i < count; ++i) {
      std::vector<int> w, t;
      int s = pick(rng, pi);
      for (;;) {
        t.push_back(s);
        w.push_back(pick(rng, B[s]));
        const int next = pick(rng, A[s]);
        if (next == T || t.size() >= 40) break;
        s = next;
      }
      out.emplace_back(std::move(w), std::move(t));
    }
    return out;
  }

  std::vector<int> posterior_decode(const std::vector<int>& w) const {
    const std::size_t n = w.size();
    std::vector<std::array<double, T>> al(n), be(n);
    for (int a = 0; a < T; ++a) al[0][a] = pi[a] * B[a][w[0]];
    for (std::size_t t = 1; t < n; ++t)
      for (int b = 0; b < T; ++b) {
        double x = 0.0;
        for (int a = 0; a < T; ++a) x += al[t - 1][a] * A[a][b];
        al[t][b] = x * B[b][w[t]];
      }
    for (int a = 0; a < T; ++a) be[n - 1][a] = A[a][T];
    for (std::size_t t = n - 1; t-- > 0;)
      for (int a = 0; a < T; ++a) {
        double x = 0.0;
        for (int b = 0; b < T; ++b) x += A[a][b] * B[b][w[t + 1]] * be[t + 1][b];
        be[t][a] = x;
      }
    std::vector<int> out;
    for (std::size_t t = 0; t < n; ++t) {
      int best = 0;
      for (int a = 1; a < T; ++a)
        if (al[t][a] * be[t][a] > al[t][best] * be[t][best]) best = a;
      out.push_back(best);
    }
    return out;
  }
};

std::vector<TaggedSentence> intern_tagged(
    const std::vector<std::pair<std::vector<int>, std::vector<int>>>& raw, SymbolTable& sym) {
  std::vector<TaggedSentence> out;
  for (const auto& [w, t] : raw) {
    TaggedSentence s;
    for (int x : w) s.words.push_back(sym.terminals.intern("w" + std::to_string(x)));
    for (int x : t) s.tags.push_back(sym.nonterminals.intern("T" + std::to_string(x)));
    out.push_back(std::move(s));
  }
  return out;
}

struct ToyRun {
  ParserModel model;
  std::string json;
  std::vector<std::string> output;
  double f1 = 0.0;
};

ToyRun toy_parse_run(const std::string& text, const RunConfig& cfg) {
  SymbolTable sym;
  const auto trees = read_penn(text, sym);
  ToyRun r{train_parser(trees, {}, sym, cfg), {}, {}, 0.0};
  r.json = save_grammar_json(r.model.grammar);
  std::vector<std::vector<std::string>> words;
  for (const auto& t : trees) words.push_back(tree_words(t, sym));
  const ParsedCorpus pc = parse_corpus(r.model.grammar, words, cfg);
  SymbolTable gsym = r.model.grammar.symbols;
  const auto gold = read_penn(text, gsym);
  r.f1 = score_brackets(gold, pc.trees).f1;
  for (std::size_t i = 0; i < pc.trees.size(); ++i)
    r.output.push_back(to_penn(pc.trees[i], gsym, words[i]));
  return r;
}

RunConfig toy_config() {
  RunConfig cfg;
  cfg.d = 3;
  cfg.K = 4;
  cfg.alpha = 8.0;
  cfg.epochs = 15;
  cfg.lr = 0.05;
  cfg.batch_size = 8;
  return cfg;
}

std::string g_data;
std::string g_toy_json;

Outcome toy_training() {
  const std::string text = read_file(g_data + "/toy50.mrg");
  const ToyRun r = toy_parse_run(text, toy_config());
  g_toy_json = r.json;
  const double drop = 1.0 - r.model.final_nll / r.model.initial_nll;
  return {drop >= 0.30 && r.f1 >= 95.0,
          fmt("NLL %.3f -> %.3f (drop %.1f%%, need >= 30%%), train F1 %.2f (need >= 95)",
              r.model.initial_nll, r.model.final_nll, 100 * drop, r.f1)};
}

Outcome toy_tagging() {
  const Hmm hmm;
  std::mt19937_64 rng(11);
  const auto train_raw = hmm.sample(rng, 5000);
  const auto test_raw = hmm.sample(rng, 1000);
  SymbolTable sym;
  for (int t = 0; t < Hmm::T; ++t) sym.nonterminals.intern("T" + std::to_string(t));
  const auto train = intern_tagged(train_raw, sym);
  RunConfig cfg;
  cfg.epochs = 3;
  const TaggerModel tm = train_tagger(train, {}, sym, cfg);

  std::map<int, std::size_t> freq;
  for (const auto& [w, t] : train_raw)
    for (int x : t) ++freq[x];
  const int majority = std::max_element(freq.begin(), freq.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;

  std::vector<std::vector<int>> gold, model_pred, hmm_pred, base_pred;
  for (const auto& [w, t] : test_raw) {
    gold.push_back(t);
    std::vector<std::string> words;
    for (int x : w) words.push_back("w" + std::to_string(x));
    std::vector<int> p;
    for (int id : decode(tm.model, tm.model.map_sentence(words), cfg.parse_prune()))
      p.push_back(std::stoi(tm.model.symbols.nonterminal(id).substr(1)));
    model_pred.push_back(std::move(p));
    hmm_pred.push_back(hmm.posterior_decode(w));
    base_pred.push_back(std::vector<int>(t.size(), majority));
  }
  const double acc = 100 * accuracy(gold, model_pred).token;
  const double ref = 100 * accuracy(gold, hmm_pred).token;
  const double base = 100 * accuracy(gold, base_pred).token;
  return {std::abs(acc - ref) <= 2.0 && acc > base,
          fmt("accuracy %.2f, generating HMM %.2f (gap %.2f, tol 2), majority %.2f", acc, ref, ref - acc, base)};
}

Outcome determinism() {
  const std::string text = read_file(g_data + "/toy50.mrg");
  RunConfig cfg = toy_config();
  cfg.epochs = 4;
  cfg.jobs = 2;
  const ToyRun a = toy_parse_run(text, cfg);
  const ToyRun b = toy_parse_run(text, cfg);

  const Hmm hmm;
  auto tag_run = [&] {
    std::mt19937_64 rng(5);
    SymbolTable sym;
    const auto data = intern_tagged(hmm.sample(rng, 300), sym);
    RunConfig tc;
    tc.epochs = 2;
    tc.jobs = 2;
    const TaggerModel tm = train_tagger(data, data, sym, tc);
    std::vector<std::vector<std::string>> words;
    for (const auto& s : data) {
      words.emplace_back();
      for (int w : s.words) words.back().push_back(sym.terminal(w));
    }
    return std::make_pair(save_sequence_model_json(tm.model), tag_corpus(tm.model, words, tc));
  };
  const auto ta = tag_run();
  const auto tb = tag_run();
  const bool parse_same = a.json == b.json && a.output == b.output;
  const bool tag_same = ta == tb;
  return {parse_same && tag_same, fmt("parser model+output identical: %s, tagger model+output identical: %s",
                                      parse_same ? "yes" : "no", tag_same ? "yes" : "no")};
}

Outcome serialization() {
  bool ok = true;
  int models = 0;
  auto check = [&](const std::string& a, const std::string& b) {
    ok = ok && a == b;
    ++models;
  };
  if (!g_toy_json.empty()) check(save_grammar_json(load_grammar_json(g_toy_json)), g_toy_json);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    RandomGrammarSpec spec;
    spec.spherical = i % 2 == 1;
    const std::string a = save_grammar_json(random_grammar(rng, spec));
    check(save_grammar_json(load_grammar_json(a)), a);
  }
  const Hmm hmm;
  SymbolTable sym;
  const auto data = intern_tagged(hmm.sample(rng, 50), sym);
  RunConfig cfg;
  cfg.epochs = 1;
  const std::string s = save_sequence_model_json(train_tagger(data, {}, sym, cfg).model);
  check(save_sequence_model_json(load_sequence_model_json(s)), s);
  return {ok, fmt("%d models round-tripped byte-identically: %s", models, ok ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  g_data = "data";
  app.add_option("--data", g_data, "directory holding toy50.mrg");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"oracle equivalence", 120, oracle_equivalence},
      {"gradient check", 300, gradient_check},
      {"posterior sum rules", 0, sum_rules},
      {"scaling invariance", 0, scaling_invariance},
      {"max-rule decode", 0, max_rule_decode},
      {"pruning arithmetic", 0, pruning_arithmetic},
      {"toy training", 900, toy_training},
      {"toy tagging", 900, toy_tagging},
      {"determinism", 0, determinism},
      {"serialization", 0, serialization},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.pass = false;
      o.detail += fmt("; over the %.0f s limit", c.limit_seconds);
    }
    failed += !o.pass;
    std::printf("%s  %-22s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed, std::size(criteria));
  return failed == 0 ? 0 : 1;
}
