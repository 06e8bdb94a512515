#pragma once

// GM-LVeG over a regular grammar (an HMM with latent vector refinements):
// forward/backward mixtures, per-token posterior decoding and training
// through the shared learning module.

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lveg/corpus.hpp"
#include "lveg/gm.hpp"
#include "lveg/grammar.hpp"
#include "lveg/learning.hpp"
#include "lveg/symbols.hpp"

namespace lveg {

struct Emission {
  int tag = -1;
  int terminal = -1;
  double baseline_prob = 0.0;
  GaussianMixture weight;  // slot "tag"
};

class SequenceModel {
 public:
  SymbolTable symbols;  // nonterminals are the tags
  int d = 3;
  int K = 4;
  bool spherical = false;
  UnknownMode unknown_mode = UnknownMode::berkeley;

  // Per tag, slot "tag".
  std::vector<GaussianMixture> start;
  std::vector<GaussianMixture> stop;
  std::vector<double> start_prob;
  std::vector<double> stop_prob;
  // num_tags^2, row-major (from, to), slots "from" and "to"; empty = absent.
  std::vector<GaussianMixture> transitions;
  std::vector<double> transition_prob;
  std::vector<Emission> emissions;

  int num_tags() const { return symbols.nonterminals.size(); }
  const GaussianMixture& transition(int from, int to) const {
    return transitions[static_cast<std::size_t>(from * num_tags() + to)];
  }
  GaussianMixture& transition(int from, int to) {
    return transitions[static_cast<std::size_t>(from * num_tags() + to)];
  }

  // Rebuilds the terminal -> emission index; call after editing `emissions`.
  void reindex();
  // Emission ids for a terminal, ascending by tag.
  std::span<const int> emissions_for(int terminal) const;
  int find_emission(int tag, int terminal) const;

  // Word, then its signature, then UNK; CoverageError otherwise.
  int map_word(std::string_view word) const;
  std::vector<int> map_sentence(const std::vector<std::string>& words) const;

 private:
  std::vector<std::vector<int>> by_terminal_;
};

// Relative frequencies over tagged sentences whose words are already
// vocabulary-mapped. Start, stop and transition counts get add-`smoothing`
// over all tags; every tag also emits every signature class (and UNK) with
// add-`smoothing` counts. Throws InputError on empty data.
SequenceModel estimate_sequence_model(const std::vector<TaggedSentence>& data,
                                      const SymbolTable& symbols, UnknownMode mode,
                                      double smoothing = 0.1);
void init_sequence_model(SequenceModel& m, const InitConfig& cfg);

// Replaces rare words by their signatures, re-interning into `symbols`.
std::vector<TaggedSentence> apply_vocab(const std::vector<TaggedSentence>& data,
                                        const Vocabulary& vocab, SymbolTable& symbols);

struct SequenceChart {
  int n = 0;
  int tags = 0;
  std::vector<int> words;
  std::vector<int> emission;          // n * tags, emission id or -1
  std::vector<GaussianMixture> pre;    // start weight at t = 1, else the incoming sum
  std::vector<GaussianMixture> alpha;  // pre times emission
  std::vector<GaussianMixture> beta;   // excludes the emission at t
  double log_z = 0.0;

  std::size_t at(int t, int a) const { return static_cast<std::size_t>((t - 1) * tags + a); }
};

// Positions are 1-based. With gold_tags only that path is allowed. Throws
// CoverageError on an unknown terminal id and NoParseError when Z = 0.
SequenceChart seq_inside_outside(const SequenceModel& m, std::span<const int> words,
                                 std::span<const int> gold_tags = {},
                                 const PruneConfig& prune = PruneConfig::disabled());

// q[t-1][A] = int alpha_t^A beta_t^A / Z.
std::vector<std::vector<double>> tag_posteriors(const SequenceChart& c);

// Per-token argmax of the posterior, ties to the smallest tag id.
std::vector<int> decode(const SequenceModel& m, std::span<const int> words,
                        const PruneConfig& prune = PruneConfig::disabled());

struct TagAccuracy {
  double token = 0.0;
  double sentence = 0.0;
  std::size_t tokens = 0;
  std::size_t sentences = 0;
};

// Throws InputError when the corpora are misaligned.
TagAccuracy accuracy(const std::vector<std::vector<int>>& gold,
                     const std::vector<std::vector<int>>& predicted);

// Parameter order: start, stop, present transitions (row-major), emissions.
std::vector<GaussianMixture*> sequence_weights(SequenceModel& m);

SentenceOuters sequence_outers(const SequenceModel& m, const TaggedSentence& ex,
                               const PruneConfig& prune = PruneConfig::disabled());

class SequenceObjective : public Objective {
 public:
  SequenceObjective(SequenceModel& m, const std::vector<TaggedSentence>& examples,
                    const PruneConfig& prune = PruneConfig::disabled())
      : m_(m), examples_(examples), prune_(prune) {}

  std::size_t num_examples() const override { return examples_.size(); }
  std::vector<GaussianMixture*> weights() override { return sequence_weights(m_); }
  bool spherical() const override { return m_.spherical; }
  SentenceOuters outers(std::size_t example) const override;
  double nll(std::size_t example) const override;

 private:
  SequenceModel& m_;
  const std::vector<TaggedSentence>& examples_;
  PruneConfig prune_;
};

std::string save_sequence_model_json(const SequenceModel& m);
SequenceModel load_sequence_model_json(std::string_view json);

}  // namespace lveg
