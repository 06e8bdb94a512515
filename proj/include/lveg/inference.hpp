#pragma once

// Chart inference for GM-LVeGs: inside/outside mixture recursions with a
// single unary layer per span, anchored rule posteriors, max-rule decoding
// and constituent masks.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lveg/gm.hpp"
#include "lveg/grammar.hpp"
#include "lveg/tree.hpp"

namespace lveg {

// Allowed nonterminals per span (i, j), 1 <= i <= j <= n.
class ConstituentMask {
 public:
  ConstituentMask() = default;
  ConstituentMask(int n, int num_nonterminals, bool allow);

  static ConstituentMask all(int n, int num_nonterminals) {
    return {n, num_nonterminals, true};
  }
  static ConstituentMask none(int n, int num_nonterminals) {
    return {n, num_nonterminals, false};
  }

  int length() const { return n_; }
  int num_nonterminals() const { return nt_; }
  bool allowed(int i, int j, int a) const { return bits_[index(i, j, a)] != 0; }
  void set(int i, int j, int a, bool allow) { bits_[index(i, j, a)] = allow ? 1 : 0; }
  std::size_t count_allowed() const;

 private:
  std::size_t index(int i, int j, int a) const;

  int n_ = 0;
  int nt_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct ChartCell {
  GaussianMixture inside_pre;
  GaussianMixture inside_post;
  GaussianMixture outside_pre;
  GaussianMixture outside_post;
  // The root's outside is the constant function 1, which has no mixture form.
  bool outside_pre_unit = false;
  bool outside_post_unit = false;

  bool has_outside_pre() const { return outside_pre_unit || !outside_pre.empty(); }
  bool has_outside_post() const { return outside_post_unit || !outside_post.empty(); }
  SlotFactor outside_pre_factor() const {
    return outside_pre_unit ? SlotFactor::unit() : SlotFactor::of(outside_pre);
  }
  SlotFactor outside_post_factor() const {
    return outside_post_unit ? SlotFactor::unit() : SlotFactor::of(outside_post);
  }
};

class ParseChart {
 public:
  ParseChart() = default;
  ParseChart(std::vector<int> words, ConstituentMask mask);

  int length() const { return static_cast<int>(words_.size()); }
  int num_nonterminals() const { return mask_.num_nonterminals(); }
  const std::vector<int>& words() const { return words_; }
  const ConstituentMask& mask() const { return mask_; }
  int start() const { return start_; }

  const ChartCell& cell(int i, int j, int a) const { return cells_[index(i, j, a)]; }
  ChartCell& cell(int i, int j, int a) { return cells_[index(i, j, a)]; }

  // Nonterminals with a non-empty inside score at (i, j), ascending.
  const std::vector<int>& active_pre(int i, int j) const { return active_pre_[span(i, j)]; }
  const std::vector<int>& active_post(int i, int j) const { return active_post_[span(i, j)]; }

  bool inside_done() const { return inside_done_; }
  bool outside_done() const { return outside_done_; }

 private:
  friend ParseChart inside(const Grammar&, std::span<const int>, const ConstituentMask&,
                           const PruneConfig&);
  friend void outside(const Grammar&, ParseChart&, const PruneConfig&);

  std::size_t span(int i, int j) const;
  std::size_t index(int i, int j, int a) const;

  std::vector<int> words_;
  ConstituentMask mask_;
  std::vector<ChartCell> cells_;
  std::vector<std::vector<int>> active_pre_;
  std::vector<std::vector<int>> active_post_;
  int start_ = -1;
  bool inside_done_ = false;
  bool outside_done_ = false;
};

// Throws CoverageError when a word has no lexical rule.
ParseChart inside(const Grammar& g, std::span<const int> words, const ConstituentMask& mask,
                  const PruneConfig& prune);
// Throws StateError when the inside pass has not run.
void outside(const Grammar& g, ParseChart& chart, const PruneConfig& prune);

// log of the root inside mass. Throws NoParseError when it is zero.
double sentence_weight(const ParseChart& chart);

// log sum_A int inside_post * outside_post over one span (-inf when empty).
double log_span_mass(const ParseChart& chart, int i, int j);

// One anchored rule occurrence: the rule, its span (i, k, j) and the factors
// of the anchored score excluding the rule weight, in the rule's slot order.
// For unary and lexical anchors k = -1; lexical anchors have i = j.
struct Anchor {
  int rule;
  int i;
  int k;
  int j;
  std::span<const SlotFactor> factors;
};

// Visits every anchor with non-zero outside and inside factors in a fixed
// order: spans by increasing length then start, binary before unary.
void for_each_anchor(const Grammar& g, const ParseChart& chart,
                     const std::function<void(const Anchor&)>& visit);

struct AnchoredPosterior {
  struct Binary {
    int rule;
    int i;
    int k;
    int j;
    double q;
  };
  struct Single {
    int rule;
    int i;
    int j;
    double q;
  };

  int n = 0;
  std::vector<Binary> binary;
  std::vector<Single> unary;
  std::vector<Single> lexical;

  // 0 for anchors that were never visited.
  double q_binary(int rule, int i, int k, int j) const;
  double q_unary(int rule, int i, int j) const;
  double q_lexical(int rule, int i) const;
};

AnchoredPosterior rule_posteriors(const Grammar& g, const ParseChart& chart);

// Max-rule-product tree over log q; the result is still binarized. Ties keep
// the smallest (rule id, split), and a span without a unary wins over one with.
// Throws NoParseError when no tree has all-positive q.
Tree max_rule_parse(const Grammar& g, const AnchoredPosterior& posteriors);

// Sum over anchors of log q for a (binarized) tree; -inf if any anchor is absent.
double log_rule_product(const Grammar& g, const AnchoredPosterior& posteriors, const Tree& t);

// Scalar inside-outside under the baseline PCFG; keeps (span, A) whose
// posterior is >= p_min and always (1, n, start). Allows everything when
// the sentence has no baseline parse.
ConstituentMask pcfg_mask(const Grammar& g, std::span<const int> words, double p_min);

// Union of the labeled spans of the supplied (binarized) trees. Throws
// InputError on a length mismatch.
ConstituentMask kbest_mask(const std::vector<Tree>& trees, int n, int num_nonterminals);

// Viterbi tree under baseline probabilities. Throws NoParseError.
Tree pcfg_viterbi(const Grammar& g, std::span<const int> words, const ConstituentMask& mask);

// Rule id of every node of a binarized tree, in pre-order. Throws
// CoverageError naming the first rule missing from the grammar.
std::vector<int> tree_rules(const Grammar& g, const Tree& t);

// Inside/outside on a single fixed tree. Node order is pre-order.
struct GoldPass {
  struct Node {
    int rule = -1;
    int left = -1;   // child node indices
    int right = -1;
    int begin = 0;
    int end = 0;
    GaussianMixture inside;
    GaussianMixture outside;
    bool outside_unit = false;

    SlotFactor outside_factor() const {
      return outside_unit ? SlotFactor::unit() : SlotFactor::of(outside);
    }
  };
  std::vector<Node> nodes;
  double log_weight = 0.0;
};

GoldPass gold_pass(const Grammar& g, const Tree& t, const PruneConfig& prune, bool with_outside);

}  // namespace lveg
