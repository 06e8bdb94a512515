#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "lveg/corpus.hpp"
#include "lveg/error.hpp"
#include "lveg/learning.hpp"
#include "lveg/oracle.hpp"
#include "toy_grammars.hpp"

using namespace lveg;

namespace {

struct Bank {
  SymbolTable sym;
  Grammar g;
  std::vector<Example> examples;
};

Bank toy_bank(int K = 2, std::uint64_t seed = 1) {
  Bank b;
  const std::string text =
      "(S (NP (NN kim)) (VP (VBD saw) (NP (NN lee)) (PP (IN with) (NP (NN binoculars)))))\n"
      "(S (NP (NN kim)) (VP (VBD saw) (NP (NP (NN lee)) (PP (IN with) (NP (NN hat))))))\n"
      "(S (NP (NN lee)) (VP (VBD saw) (NP (NN kim)) (PP (IN with) (NP (NN binoculars)))))\n"
      "(S (NP (NN lee)) (VP (VBD saw) (NP (NP (NN kim)) (PP (IN with) (NP (NN hat))))))\n";
  const auto raw = read_penn(text, b.sym);
  std::vector<std::vector<std::string>> sents;
  for (const auto& t : raw) sents.push_back(tree_words(t, b.sym));
  const auto trees = prepare_treebank(raw, build_vocab(sents, 0), b.sym);
  InitConfig cfg;
  cfg.K = K;
  cfg.d = 2;
  cfg.seed = seed;
  b.g = init_gm_lveg(estimate_pcfg(trees, b.sym), cfg);
  for (const auto& t : trees) b.examples.push_back({yield(t), t});
  return b;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::max(std::abs(a[i]), std::abs(b[i])) > 1e-8) e = std::max(e, testing::rel_err(a[i], b[i]));
  return e;
}

}  // namespace

TEST_CASE("parameter layout and round trip") {
  std::mt19937_64 rng(1);
  const GaussianMixture a = testing::random_mixture(rng, {{"p", 2}, {"c", 2}}, 3);
  const GaussianMixture b = testing::random_mixture(rng, {{"p", 1}}, 2);
  const GaussianMixture* ws[] = {&a, &b};
  const ParamLayout full(ws, false);
  CHECK(full.size() == 3 * (1 + 4 + 4) + 2 * (1 + 1 + 1));
  CHECK(full.offset(1) == 27);
  const ParamLayout sph(ws, true);
  CHECK(sph.size() == 3 * (1 + 4 + 1) + 2 * (1 + 1 + 1));

  const std::vector<double> p = get_params(ws, full);
  CHECK(p[0] == doctest::Approx(a.log_weight(0)));
  CHECK(p[1] == doctest::Approx(a.mean(0)[0]));
  CHECK(p[5] == doctest::Approx(std::log(a.variance(0)[0])));
  GaussianMixture a2 = a, b2 = b;
  GaussianMixture* mws[] = {&a2, &b2};
  std::vector<double> q = p;
  q[1] += 1.0;
  set_params(mws, full, q);
  CHECK(a2.mean(0)[0] == doctest::Approx(a.mean(0)[0] + 1.0));
  set_params(mws, full, p);
  CHECK(get_params(ws, full) == get_params(std::span<const GaussianMixture* const>(mws, 2), full));
}

TEST_CASE("clip_inf_norm") {
  std::vector<double> g{1.0, -10.0, 3.0};
  CHECK(clip_inf_norm(g, 5.0) == 10.0);
  CHECK(g == std::vector<double>{0.5, -5.0, 1.5});
  std::vector<double> small{1.0, -2.0};
  CHECK(clip_inf_norm(small, 5.0) == 2.0);
  CHECK(small == std::vector<double>{1.0, -2.0});
  std::vector<double> odd{std::numeric_limits<double>::quiet_NaN(), 20.0};
  clip_inf_norm(odd, 5.0);
  CHECK(odd[1] == 5.0);
}

TEST_CASE("adam") {
  AdamState s(3);
  std::vector<double> p{0.0, 1.0, -1.0};
  const std::vector<double> g{0.5, -2.0, 0.0};
  adam_step(s, {0.1}, p, g);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(1.1).epsilon(1e-6));
  CHECK(p[2] == -1.0);
  CHECK(s.step == 1);
  // Minimizes a quadratic.
  AdamState q(1);
  std::vector<double> x{3.0};
  for (int i = 0; i < 2000; ++i) {
    const double grad[] = {2.0 * (x[0] - 1.0)};
    adam_step(q, {0.05}, x, grad);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  const std::vector<double> wrong(2, 0.0);
  CHECK_THROWS_AS(adam_step(s, {}, p, wrong), DimensionError);
  std::vector<double> bad{std::numeric_limits<double>::infinity(), 1.0, 1.0};
  const std::vector<double> before = p;
  adam_step(s, {0.1}, p, bad);
  CHECK(p[0] == before[0]);
  CHECK(s.skipped == 1);
}

TEST_CASE("training mask keeps gold constituents") {
  Bank b = toy_bank();
  for (const auto& ex : b.examples) {
    const ConstituentMask m = training_mask(b.g, ex, 0.999);
    for (const auto& c : constituents(ex.gold)) CHECK(m.allowed(c.begin, c.end, c.label));
  }
}

TEST_CASE("expected counts") {
  Bank b = toy_bank();
  const auto ws = weight_functions(std::as_const(b.g));
  for (const auto& ex : b.examples) {
    const int n = static_cast<int>(ex.words.size());
    const SentenceOuters o =
        expected_outers(b.g, ex, PruneConfig::disabled(), ConstituentMask::all(n, b.g.num_nonterminals()));
    CHECK(o.nll() >= -1e-12);
    // Under the gold tree every rule is used exactly as often as it appears.
    std::vector<double> uses(b.g.num_rules(), 0.0);
    for (int r : tree_rules(b.g, ex.gold)) uses[static_cast<std::size_t>(r)] += 1.0;
    double lexical = 0.0;
    for (std::size_t r = 0; r < b.g.num_rules(); ++r) {
      CHECK(expected_count(o.gold, static_cast<int>(r), *ws[r]) ==
            doctest::Approx(uses[r]).epsilon(1e-9));
      if (b.g.rule(static_cast<int>(r)).kind == RuleKind::lexical)
        lexical += expected_count(o.unconstrained, static_cast<int>(r), *ws[r]);
    }
    CHECK(lexical == doctest::Approx(n).epsilon(1e-9));
  }
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(21);
  int checked = 0;
  for (int inst = 0; inst < 12; ++inst) {
    RandomGrammarSpec spec;
    spec.spherical = inst % 3 == 0;
    Grammar g = random_grammar(rng, spec);
    std::vector<int> words;
    std::vector<EnumeratedParse> parses;
    for (int attempt = 0; attempt < 50 && parses.empty(); ++attempt) {
      words = random_sentence(rng, g, std::uniform_int_distribution<int>(1, 4)(rng));
      if (count_parses(g, words) > kMaxEnumeratedParses) continue;
      parses = enumerate_parses(g, words);
    }
    if (parses.empty()) continue;
    const std::vector<Example> batch{{words, parses.back().tree}};
    ParseObjective obj(g, batch, PruneConfig::disabled(), 0.0);
    const auto w = obj.weights();
    const std::vector<const GaussianMixture*> cw(w.begin(), w.end());
    const ParamLayout layout(cw, g.spherical);
    const std::size_t idx[] = {0};
    const BatchResult br = batch_gradient(obj, layout, idx, 1);
    CHECK(br.nll == doctest::Approx(obj.nll(0)));
    CHECK(max_rel(br.gradient, fd_gradient(obj, 1e-5)) < 1e-3);
    ++checked;
  }
  CHECK(checked >= 8);

  Bank b = toy_bank();
  ParseObjective obj(b.g, b.examples, PruneConfig::disabled(), 0.0);
  const auto w = obj.weights();
  const std::vector<const GaussianMixture*> cw(w.begin(), w.end());
  const ParamLayout layout(cw, false);
  const std::size_t all[] = {0, 1, 2, 3};
  CHECK(max_rel(batch_gradient(obj, layout, all, 1).gradient, fd_gradient(obj, 1e-5)) < 1e-3);
}

TEST_CASE("batch gradients do not depend on the thread count") {
  Bank b = toy_bank();
  ParseObjective obj(b.g, b.examples, PruneConfig::kmin_kmax(40, 50, 0.35), 1e-5);
  const auto w = obj.weights();
  const std::vector<const GaussianMixture*> cw(w.begin(), w.end());
  const ParamLayout layout(cw, false);
  const std::size_t all[] = {3, 0, 2, 1};
  const BatchResult one = batch_gradient(obj, layout, all, 1);
  const BatchResult four = batch_gradient(obj, layout, all, 4);
  CHECK(one.gradient == four.gradient);
  CHECK(one.nll == four.nll);
  CHECK(one.sentences == 4);
  CHECK(one.failed == 0);
}

TEST_CASE("training lowers the objective and is reproducible") {
  auto run = [](int jobs) {
    Bank b = toy_bank();
    ParseObjective obj(b.g, b.examples, PruneConfig::disabled(), 0.0);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 2;
    cfg.adam.lr = 0.05;
    cfg.jobs = jobs;
    const double before = nll(b.g, b.examples);
    const TrainResult r = train(obj, cfg);
    CHECK(r.epochs.size() == 20);
    CHECK(r.best_epoch == 0);
    CHECK(before > 1.0);
    CHECK(nll(b.g, b.examples) < 0.7 * before);
    return save_grammar_json(b.g);
  };
  CHECK(run(1) == run(2));
}

TEST_CASE("dev selection restores the best epoch") {
  Bank b = toy_bank();
  ParseObjective obj(b.g, b.examples, PruneConfig::disabled(), 0.0);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 4;
  cfg.adam.lr = 0.05;
  const double scores[] = {1.0, 3.0, 2.0, 0.5};
  int call = 0;
  std::string at_best;
  std::vector<int> seen;
  const TrainResult r = train(
      obj, cfg, [&] { return scores[call++]; },
      [&](const EpochMetrics& m) {
        seen.push_back(m.epoch);
        if (m.best && m.epoch == 2) at_best = save_grammar_json(b.g);
      });
  CHECK(r.best_epoch == 2);
  CHECK(seen == std::vector<int>{1, 2, 3, 4});
  CHECK(r.epochs[1].best);
  CHECK(!r.epochs[2].best);
  CHECK(save_grammar_json(b.g) == at_best);
}

TEST_CASE("training configuration errors") {
  Bank b = toy_bank();
  ParseObjective obj(b.g, b.examples, PruneConfig::disabled(), 0.0);
  TrainConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(obj, cfg), ConfigError);
  cfg.batch_size = 1;
  cfg.adam.lr = 0.0;
  CHECK_THROWS_AS(train(obj, cfg), ConfigError);
}

TEST_CASE("sentences that cannot be parsed are skipped") {
  Bank b = toy_bank();
  std::vector<Example> bad = b.examples;
  // A gold tree whose rules are missing from the grammar.
  SymbolTable& sym = b.g.symbols;
  const int w = bad[0].words[0];
  bad.push_back({{w}, Tree::preterminal(sym.nonterminals.find("S"), w, 1)});
  ParseObjective obj(b.g, bad, PruneConfig::disabled(), 0.0);
  const auto ws = obj.weights();
  const std::vector<const GaussianMixture*> cw(ws.begin(), ws.end());
  const ParamLayout layout(cw, false);
  const std::size_t idx[] = {0, 4};
  const BatchResult br = batch_gradient(obj, layout, idx, 1);
  CHECK(br.sentences == 2);
  CHECK(br.failed == 1);
}
