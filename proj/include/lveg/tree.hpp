#pragma once

#include <span>
#include <string>
#include <vector>

#include "lveg/symbols.hpp"

namespace lveg {

// An unrefined parse. Spans are 1-based and inclusive; a node without
// children is a preterminal over the terminal `word`.
struct Tree {
  int label = -1;
  int begin = 0;
  int end = 0;
  int word = -1;
  std::vector<Tree> children;

  bool is_preterminal() const { return children.empty(); }
  int length() const { return end - begin + 1; }

  static Tree preterminal(int label, int word, int position) {
    return Tree{label, position, position, word, {}};
  }
  static Tree node(int label, std::vector<Tree> children);

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct LabeledSpan {
  int label;
  int begin;
  int end;
  friend auto operator<=>(const LabeledSpan&, const LabeledSpan&) = default;
};

// Recomputes spans left to right starting at `first`; returns one past the last word.
int assign_spans(Tree& t, int first = 1);

std::vector<int> yield(const Tree& t);

// Every labeled node, preterminals included, in pre-order.
std::vector<LabeledSpan> constituents(const Tree& t);

std::size_t count_nodes(const Tree& t);

// Penn bracketing. When `words` is non-empty, leaf i prints words[i-1]
// instead of the terminal symbol.
std::string to_penn(const Tree& t, const SymbolTable& symbols,
                    std::span<const std::string> words = {});

}  // namespace lveg
