#include <doctest.h>

#include "lveg/error.hpp"
#include "lveg/pipeline.hpp"

using namespace lveg;

namespace {

const char* kBank =
    "(S (NP (NN kim)) (VP (VBD saw) (NP (NN lee)) (PP (IN with) (NP (NN binoculars)))))\n"
    "(S (NP (NN kim)) (VP (VBD saw) (NP (NP (NN lee)) (PP (IN with) (NP (NN hat))))))\n"
    "(S (NP (NN lee)) (VP (VBD saw) (NP (NN kim)) (PP (IN with) (NP (NN binoculars)))))\n"
    "(S (NP (NN lee)) (VP (VBD saw) (NP (NP (NN kim)) (PP (IN with) (NP (NN hat))))))\n"
    "(S (NP (NN kim)) (VP (VBD ran)))\n";

RunConfig small() {
  RunConfig cfg;
  cfg.d = 2;
  cfg.K = 2;
  cfg.epochs = 6;
  cfg.batch_size = 2;
  cfg.lr = 0.05;
  cfg.unk_threshold = 0;
  return cfg;
}

}  // namespace

TEST_CASE("run configuration validation") {
  RunConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.d = 0; });
  bad([](RunConfig& c) { c.alpha = 1.0; });
  bad([](RunConfig& c) { c.lr = 0; });
  bad([](RunConfig& c) { c.k_max = 10; });
  bad([](RunConfig& c) { c.theta = 1.5; });
  bad([](RunConfig& c) { c.p_min = 1.0; });
  bad([](RunConfig& c) { c.jobs = 0; });
  CHECK(ok.train_prune().k_min == 40);
  CHECK(ok.parse_prune().k_min == 20);
  CHECK(ok.parse_prune().k_max == 50);
  RunConfig hard;
  hard.k_hard = 7;
  CHECK(hard.train_prune().mode == PruneConfig::Mode::hard);
  CHECK(hard.parse_prune().k_hard == 7);
}

TEST_CASE("train and parse a tiny treebank") {
  SymbolTable sym;
  const auto trees = read_penn(kBank, sym);
  std::vector<int> epochs;
  const ParserModel pm = train_parser(trees, trees, sym, small(), [&](const EpochMetrics& m) { epochs.push_back(m.epoch); });
  CHECK(epochs.size() == 6);
  CHECK(pm.result.best_epoch >= 1);
  CHECK(pm.final_nll < pm.initial_nll);

  std::vector<std::vector<std::string>> sents;
  for (const auto& t : trees) sents.push_back(tree_words(t, sym));
  sents.push_back({"kim", "saw", "zzz"});
  RunConfig cfg = small();
  const ParsedCorpus one = parse_corpus(pm.grammar, sents, cfg);
  cfg.jobs = 3;
  const ParsedCorpus three = parse_corpus(pm.grammar, sents, cfg);
  REQUIRE(one.trees.size() == sents.size());
  CHECK(one.trees == three.trees);
  CHECK(one.fallback == 1);
  for (std::size_t i = 0; i < sents.size(); ++i) {
    CHECK(one.trees[i].begin == 1);
    CHECK(one.trees[i].end == static_cast<int>(sents[i].size()));
  }
  // The last sentence has an uncovered word; scoring needs the rest only.
  std::vector<Tree> gold(trees.begin(), trees.end());
  std::vector<Tree> pred(one.trees.begin(), one.trees.end() - 1);
  const BracketScore s = score_brackets(gold, pred);
  CHECK(s.f1 > 50.0);
}

TEST_CASE("train and tag") {
  const char* text =
      "the\tDT\ndog\tNN\nruns\tVB\n\n"
      "a\tDT\ncat\tNN\nsees\tVB\nthe\tDT\ndog\tNN\n\n"
      "dogs\tNN\nrun\tVB\n\n";
  SymbolTable sym;
  const auto data = read_two_column(text, sym);
  RunConfig cfg = small();
  cfg.epochs = 10;
  const TaggerModel tm = train_tagger(data, data, sym, cfg);
  CHECK(tm.final_nll <= tm.initial_nll);
  const auto tags = tag_corpus(tm.model, {{"the", "dog", "runs"}, {"a", "zebra"}}, cfg);
  REQUIRE(tags.size() == 2);
  CHECK(tags[0] == std::vector<std::string>{"DT", "NN", "VB"});
  CHECK(tags[1].size() == 2);
}

TEST_CASE("empty training data is a data error") {
  SymbolTable sym;
  CHECK_THROWS_AS(train_parser({}, {}, sym, small()), InputError);
}
