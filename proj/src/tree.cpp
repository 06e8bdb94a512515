#include "lveg/tree.hpp"

#include "lveg/error.hpp"

namespace lveg {

int Interner::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

int Interner::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  return it == ids_.end() ? -1 : it->second;
}

const std::string& Interner::name(int id) const {
  if (id < 0 || id >= size()) throw LookupError("symbol id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

Tree Tree::node(int label, std::vector<Tree> children) {
  Tree t;
  t.label = label;
  t.children = std::move(children);
  if (!t.children.empty()) {
    t.begin = t.children.front().begin;
    t.end = t.children.back().end;
  }
  return t;
}

int assign_spans(Tree& t, int first) {
  t.begin = first;
  if (t.is_preterminal()) {
    t.end = first;
    return first + 1;
  }
  int next = first;
  for (auto& c : t.children) next = assign_spans(c, next);
  t.end = next - 1;
  return next;
}

namespace {

void collect_yield(const Tree& t, std::vector<int>& out) {
  if (t.is_preterminal()) {
    out.push_back(t.word);
    return;
  }
  for (const auto& c : t.children) collect_yield(c, out);
}

void collect_constituents(const Tree& t, std::vector<LabeledSpan>& out) {
  out.push_back({t.label, t.begin, t.end});
  for (const auto& c : t.children) collect_constituents(c, out);
}

void write_penn(const Tree& t, const SymbolTable& symbols, std::span<const std::string> words,
                std::string& out) {
  out += '(';
  out += symbols.nonterminal(t.label);
  if (t.is_preterminal()) {
    out += ' ';
    if (!words.empty())
      out += words[static_cast<std::size_t>(t.begin - 1)];
    else
      out += symbols.terminal(t.word);
  } else {
    for (const auto& c : t.children) {
      out += ' ';
      write_penn(c, symbols, words, out);
    }
  }
  out += ')';
}

}  // namespace

std::vector<int> yield(const Tree& t) {
  std::vector<int> out;
  collect_yield(t, out);
  return out;
}

std::vector<LabeledSpan> constituents(const Tree& t) {
  std::vector<LabeledSpan> out;
  collect_constituents(t, out);
  return out;
}

std::size_t count_nodes(const Tree& t) {
  std::size_t n = 1;
  for (const auto& c : t.children) n += count_nodes(c);
  return n;
}

std::string to_penn(const Tree& t, const SymbolTable& symbols, std::span<const std::string> words) {
  std::string out;
  write_penn(t, symbols, words, out);
  return out;
}

}  // namespace lveg
