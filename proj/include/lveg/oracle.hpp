#pragma once

// Brute-force reference computations: exhaustive parse enumeration, tree
// weights by direct message passing, enumeration posteriors, finite
// differences, random small grammars, and the property suite behind
// `lveg verify`.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lveg/grammar.hpp"
#include "lveg/inference.hpp"
#include "lveg/learning.hpp"
#include "lveg/tree.hpp"

namespace lveg {

inline constexpr int kMaxEnumerationLength = 8;
// Random instances with more derivations than this are redrawn.
inline constexpr double kMaxEnumeratedParses = 20000;

struct EnumeratedParse {
  Tree tree;
  double log_weight = 0.0;
};

// Every derivation (binary, at most one unary per span, lexical) of the
// sentence from the start symbol. Throws InputError beyond kMaxEnumerationLength.
std::vector<EnumeratedParse> enumerate_parses(const Grammar& g, std::span<const int> words);

// Number of derivations enumerate_parses would return, counted without building them.
double count_parses(const Grammar& g, std::span<const int> words);

// log of the integral of the product of the tree's rule weights, computed
// leaf to root with product() and marginalize(). Throws CoverageError.
double tree_weight(const Grammar& g, const Tree& t);

// log sum of the parse weights (-inf when there are none).
double log_total_weight(const std::vector<EnumeratedParse>& parses);

// Weight share of the parses that contain each anchored rule.
AnchoredPosterior brute_force_posteriors(const Grammar& g,
                                         const std::vector<EnumeratedParse>& parses, int n);

// Central differences of the summed nll in unconstrained coordinates.
std::vector<double> fd_gradient(Objective& obj, double step);
// Same with pruning disabled and all-allow masks.
std::vector<double> fd_gradient(Grammar& g, const std::vector<Example>& batch, double step);

struct RandomGrammarSpec {
  int min_nonterminals = 2;
  int max_nonterminals = 4;
  int max_K = 2;
  int max_d = 2;
  int num_terminals = 3;
  double binary_p = 0.2;
  double unary_p = 0.15;
  double lexical_p = 0.5;
  bool cnf = false;  // no unary rules
  bool spherical = false;
};

// Start symbol N0; every terminal has a lexical rule and N0 has a binary rule.
// Baseline probabilities are uniform per parent.
Grammar random_grammar(std::mt19937_64& rng, const RandomGrammarSpec& spec);
std::vector<int> random_sentence(std::mt19937_64& rng, const Grammar& g, int n);

// Multiplies every rule weight by c.
void scale_grammar(Grammar& g, double c);

struct VerifyCheck {
  std::string name;
  bool passed = true;
  std::size_t instances = 0;
  double max_error = 0.0;
  double tolerance = 0.0;
};

// Oracle equivalence, tree weights, posteriors, sum rules, max-rule decoding
// and finite-difference gradients on `instances` random grammars.
std::vector<VerifyCheck> run_verify(std::uint64_t seed, int instances);

}  // namespace lveg
