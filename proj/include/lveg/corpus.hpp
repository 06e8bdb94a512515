#pragma once

// Treebank and tagging-data ingestion.

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lveg/symbols.hpp"
#include "lveg/tree.hpp"

namespace lveg {

// Reads Penn-bracketed trees, interning labels and words into `symbols`.
// Strips TOP/ROOT/empty-label wrappers, -NONE- elements and functional tags.
// Throws ParseError (with byte offset) on unbalanced input.
std::vector<Tree> read_penn(std::string_view text, SymbolTable& symbols);

std::string strip_functional_tags(std::string_view label);

// (X c1 ... cm) with m > 2 becomes (X c1 (@X c2 (@X ... cm))).
Tree binarize_right(const Tree& t, SymbolTable& symbols);
// Splices every @-labelled node into its parent.
Tree debinarize(const Tree& t, const SymbolTable& symbols);

// Removes unary self-loops X -> X and shortens unary chains X -> Y -> Z to
// X -> Z so that every span carries at most one unary rule.
Tree collapse_unary_chains(const Tree& t);

// Binarize, then collapse unary chains.
Tree prepare_tree(const Tree& t, SymbolTable& symbols);

enum class UnknownMode { berkeley, simple };

UnknownMode parse_unknown_mode(std::string_view s);
std::string_view to_string(UnknownMode m);

// Deterministic unknown-word class of a surface form.
std::string unknown_signature(std::string_view word, UnknownMode mode);

struct Vocabulary {
  int threshold = 1;
  UnknownMode mode = UnknownMode::berkeley;
  std::unordered_map<std::string, int> counts;

  bool is_rare(std::string_view word) const;
  // The word itself when frequent, otherwise its signature.
  std::string map(std::string_view word) const;
};

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int threshold,
                       UnknownMode mode = UnknownMode::berkeley);

// Surface words of a tree.
std::vector<std::string> tree_words(const Tree& t, const SymbolTable& symbols);

// Replaces each leaf's word by vocab.map(word), re-interning.
Tree apply_vocab(const Tree& t, const Vocabulary& vocab, SymbolTable& symbols);

struct TaggedSentence {
  std::vector<int> words;
  std::vector<int> tags;
};

// CoNLL-U: FORM and UPOS columns; comments, multiword ranges and empty
// nodes are skipped. Throws ParseError with the line number on short rows.
std::vector<TaggedSentence> read_conllu(std::string_view text, SymbolTable& symbols);

// Two-column "word<TAB>tag" blocks separated by blank lines.
std::vector<TaggedSentence> read_two_column(std::string_view text, SymbolTable& symbols);
std::string write_two_column(const std::vector<std::vector<std::string>>& words,
                             const std::vector<std::vector<std::string>>& tags);

// Splits into lines, tolerating CRLF.
std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string> split_ws(std::string_view line);

std::string read_file(const std::string& path);

}  // namespace lveg
