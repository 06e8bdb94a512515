#pragma once

// Symbol inventory and rule store of a Gaussian-mixture latent vector grammar.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lveg/corpus.hpp"
#include "lveg/gm.hpp"
#include "lveg/symbols.hpp"
#include "lveg/tree.hpp"

namespace lveg {

enum class RuleKind { binary, unary, lexical };

std::string_view to_string(RuleKind k);
RuleKind parse_rule_kind(std::string_view s);

// Slot layout of a rule's weight function for a latent dimension d.
std::vector<Slot> rule_slots(RuleKind kind, int d);

struct Rule {
  int id = -1;
  RuleKind kind = RuleKind::lexical;
  int parent = -1;
  int left = -1;   // binary left child, or the unary child
  int right = -1;  // binary right child
  int terminal = -1;
  double baseline_prob = 0.0;
  GaussianMixture weight;

  int child() const { return left; }
};

class Grammar {
 public:
  SymbolTable symbols;
  int d = 3;
  int K = 4;
  bool spherical = false;
  UnknownMode unknown_mode = UnknownMode::berkeley;

  const std::vector<Rule>& rules() const { return rules_; }
  const Rule& rule(int id) const { return rules_.at(static_cast<std::size_t>(id)); }
  Rule& mutable_rule(int id) { return rules_.at(static_cast<std::size_t>(id)); }
  std::size_t num_rules() const { return rules_.size(); }
  int num_nonterminals() const { return symbols.nonterminals.size(); }
  int start() const { return symbols.start_id; }

  // Appends a rule and indexes it; returns its id. Throws InputError on a
  // duplicate or malformed rule.
  int add_rule(Rule r);

  // All lookups return rule ids in ascending order. Unknown ids throw LookupError.
  std::span<const int> rules_for_parent(int parent) const;
  std::span<const int> rules_for_children(int left, int right) const;
  std::span<const int> binary_rules_for_left(int left) const;
  std::span<const int> unary_rules_for_child(int child) const;
  std::span<const int> rules_for_terminal(int terminal) const;
  // Empty for words the grammar has never seen.
  std::span<const int> rules_for_word(std::string_view word) const;

  int find_binary(int parent, int left, int right) const;
  int find_unary(int parent, int child) const;
  int find_lexical(int parent, int terminal) const;

  // Terminal id used for a surface word: the word itself when it has lexical
  // rules, otherwise its unknown signature, otherwise the generic UNK class.
  // Throws CoverageError when none of these are covered.
  int map_word(std::string_view word) const;
  std::vector<int> map_sentence(const std::vector<std::string>& words) const;

 private:
  void check_nonterminal(int id) const;
  const std::vector<int>& bucket(const std::vector<std::vector<int>>& idx, int id) const;

  std::vector<Rule> rules_;
  std::vector<std::vector<int>> by_parent_;
  std::vector<std::vector<int>> binary_by_left_;
  std::vector<std::vector<int>> unary_by_child_;
  std::vector<std::vector<int>> by_terminal_;
  std::unordered_map<std::uint64_t, std::vector<int>> by_children_;
  std::unordered_map<std::uint64_t, int> by_key_;
};

// Relative-frequency PCFG of binarized trees. Rules carry baseline
// probabilities and empty weight functions. The start symbol is the common
// root label of the trees. Throws InputError on an empty treebank, a node
// with more than two children, or mixed root labels.
Grammar estimate_pcfg(const std::vector<Tree>& treebank, const SymbolTable& symbols);

struct InitConfig {
  int K = 4;
  int d = 3;
  double alpha = 8.0;
  std::uint64_t seed = 1;
  bool spherical = false;
};

// rho_{r,k} = alpha * P(r), identity covariances, means ~ U[-0.05, 0.05].
Grammar init_gm_lveg(const Grammar& pcfg, const InitConfig& cfg);
// Replaces the components of `weight` (keeping its slots) with the informed
// initialization for a rule of probability `prob`.
void init_weight(GaussianMixture& weight, double prob, const InitConfig& cfg, std::mt19937_64& rng);

// The corpus preprocessing used for training: vocabulary substitution,
// right binarization and unary-chain collapse. Wraps trees in ROOT when
// their root labels differ. Sets symbols.start_id.
std::vector<Tree> prepare_treebank(const std::vector<Tree>& trees, const Vocabulary& vocab,
                                   SymbolTable& symbols);

// Versioned JSON model document. Numbers carry 17 significant digits, so
// save -> load is lossless and save -> load -> save is byte-identical.
std::string save_grammar_json(const Grammar& g);
Grammar load_grammar_json(std::string_view json);

}  // namespace lveg
