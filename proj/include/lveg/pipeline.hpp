#pragma once

// End-to-end drivers shared by the command line and the Python module.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lveg/corpus.hpp"
#include "lveg/eval.hpp"
#include "lveg/grammar.hpp"
#include "lveg/learning.hpp"
#include "lveg/tagger.hpp"

namespace lveg {

struct RunConfig {
  int d = 3;
  int K = 4;
  bool spherical = false;
  double alpha = 8.0;
  std::uint64_t seed = 1;
  int epochs = 15;
  int batch_size = 32;
  double lr = 1e-3;
  int k_min_train = 40;
  int k_min_parse = 20;
  int k_max = 50;
  double theta = 0.35;
  int k_hard = 0;  // > 0 selects hard pruning
  double p_min = 1e-5;
  int unk_threshold = 1;
  UnknownMode unk_mode = UnknownMode::berkeley;
  int jobs = 1;

  // Throws ConfigError naming the first out-of-range field.
  void validate() const;
  PruneConfig train_prune() const;
  PruneConfig parse_prune() const;
  InitConfig init() const;
  TrainConfig train_config() const;
};

struct ParserModel {
  Grammar grammar;
  TrainResult result;
  double initial_nll = 0.0;  // summed over sentences usable before training
  double final_nll = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Vocabulary, binarization, baseline PCFG, informed initialization and
// discriminative training. With dev trees the best dev F1 epoch is kept.
ParserModel train_parser(const std::vector<Tree>& train, const std::vector<Tree>& dev,
                         SymbolTable symbols, const RunConfig& cfg,
                         const EpochCallback& on_epoch = {});

struct ParsedCorpus {
  std::vector<Tree> trees;  // debinarized, ROOT stripped
  std::size_t viterbi = 0;
  std::size_t fallback = 0;
};

// Sentences are surface words. Unknown words the grammar cannot cover fall
// through to the flat tree. Output order follows input order for any jobs.
ParsedCorpus parse_corpus(const Grammar& g, const std::vector<std::vector<std::string>>& sentences,
                          const RunConfig& cfg,
                          const std::vector<ConstituentMask>* masks = nullptr);

struct TaggerModel {
  SequenceModel model;
  TrainResult result;
  double initial_nll = 0.0;
  double final_nll = 0.0;
};

// Sentences carry ids in `symbols`.
TaggerModel train_tagger(const std::vector<TaggedSentence>& train,
                         const std::vector<TaggedSentence>& dev, SymbolTable symbols,
                         const RunConfig& cfg, const EpochCallback& on_epoch = {});

// Tag names per sentence.
std::vector<std::vector<std::string>> tag_corpus(
    const SequenceModel& m, const std::vector<std::vector<std::string>>& sentences,
    const RunConfig& cfg);

}  // namespace lveg
