#pragma once

// Decoding pipeline with fallbacks and labeled-bracket scoring.

#include <span>
#include <vector>

#include "lveg/grammar.hpp"
#include "lveg/inference.hpp"
#include "lveg/tree.hpp"

namespace lveg {

// Spans of length > 1 plus the root, preterminals excluded; sorted.
std::vector<LabeledSpan> brackets(const Tree& t);

struct BracketScore {
  double precision = 0.0;  // percentages
  double recall = 0.0;
  double f1 = 0.0;
  double exact = 0.0;
  std::size_t sentences = 0;
  std::size_t gold_brackets = 0;
  std::size_t predicted_brackets = 0;
  std::size_t matched = 0;
};

// Multiset matching of labeled brackets. Labels are compared by id, so both
// corpora must share a symbol table. Throws InputError on misaligned input.
BracketScore score_brackets(const std::vector<Tree>& gold, const std::vector<Tree>& predicted);

// Drops a single-child ROOT wrapper.
Tree strip_root(const Tree& t, const SymbolTable& symbols);
// Debinarize and strip ROOT: the form that is printed and scored.
Tree finalize_tree(const Tree& t, const SymbolTable& symbols);

// Right-branching tree under the start symbol. Each word takes its most
// probable lexical tag, or the start symbol when it has none (terminal -1).
Tree fallback_tree(const Grammar& g, std::span<const int> words);

enum class ParseSource { max_rule, viterbi, fallback };

struct ParseOutcome {
  Tree tree;  // binarized
  ParseSource source = ParseSource::max_rule;
};

struct ParseOptions {
  PruneConfig prune = PruneConfig::kmin_kmax(20, 50, 0.35);
  double p_min = 1e-4;
};

// Max-rule-product under the mask, then baseline Viterbi, then the fallback
// tree. `mask` overrides the baseline posterior mask when non-null.
ParseOutcome parse_sentence(const Grammar& g, std::span<const int> words,
                            const ParseOptions& opts, const ConstituentMask* mask = nullptr);

}  // namespace lveg
