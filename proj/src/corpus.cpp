#include "lveg/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "lveg/error.hpp"

namespace lveg {

namespace {

struct RawNode {
  std::string label;
  std::string word;
  bool leaf = false;
  std::vector<RawNode> children;
};

class PennReader {
 public:
  explicit PennReader(std::string_view text) : text_(text) {}

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  RawNode read_node() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '(') fail("expected '('");
    const std::size_t open = pos_++;
    RawNode node;
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] != '(' && text_[pos_] != ')') node.label = read_atom();
    std::vector<std::string> atoms;
    for (;;) {
      skip_ws();
      if (pos_ >= text_.size()) fail_at(open, "unbalanced '(' opened");
      const char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        node.children.push_back(read_node());
      } else {
        atoms.push_back(read_atom());
      }
    }
    if (!atoms.empty()) {
      if (atoms.size() != 1 || !node.children.empty())
        fail_at(open, "preterminal must have exactly one word");
      node.leaf = true;
      node.word = std::move(atoms.front());
    }
    return node;
  }

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }
  [[noreturn]] static void fail_at(std::size_t offset, const std::string& what) {
    throw ParseError("penn: " + what + " at byte offset " + std::to_string(offset));
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string read_atom() {
    const std::size_t start = pos_;
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || std::isspace(static_cast<unsigned char>(c))) break;
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::optional<Tree> convert(const RawNode& raw, SymbolTable& symbols) {
  if (raw.label == "-NONE-") return std::nullopt;
  const int label = symbols.nonterminals.intern(strip_functional_tags(raw.label));
  if (raw.leaf) return Tree::preterminal(label, symbols.terminals.intern(raw.word), 0);
  std::vector<Tree> kids;
  for (const auto& c : raw.children)
    if (auto t = convert(c, symbols)) kids.push_back(std::move(*t));
  if (kids.empty()) return std::nullopt;
  return Tree::node(label, std::move(kids));
}

bool is_wrapper(const RawNode& n) {
  return !n.leaf && n.children.size() == 1 &&
         (n.label.empty() || n.label == "TOP" || n.label == "ROOT");
}

void collect_words(const Tree& t, const SymbolTable& symbols, std::vector<std::string>& out) {
  if (t.is_preterminal()) {
    out.push_back(symbols.terminal(t.word));
    return;
  }
  for (const auto& c : t.children) collect_words(c, symbols, out);
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string strip_functional_tags(std::string_view label) {
  // Labels such as -LRB- and -NONE- start with a dash and are kept whole.
  if (label.empty() || label.front() == '-') return std::string(label);
  const std::size_t cut = label.find_first_of("-=");
  return std::string(label.substr(0, cut));
}

std::vector<Tree> read_penn(std::string_view text, SymbolTable& symbols) {
  PennReader reader(text);
  std::vector<Tree> out;
  while (!reader.at_end()) {
    RawNode raw = reader.read_node();
    while (is_wrapper(raw)) {
      RawNode child = std::move(raw.children.front());
      raw = std::move(child);
    }
    if (auto t = convert(raw, symbols)) {
      assign_spans(*t);
      out.push_back(std::move(*t));
    }
  }
  return out;
}

Tree binarize_right(const Tree& t, SymbolTable& symbols) {
  if (t.is_preterminal()) return t;
  std::vector<Tree> kids;
  kids.reserve(t.children.size());
  for (const auto& c : t.children) kids.push_back(binarize_right(c, symbols));
  if (kids.size() <= 2) {
    Tree out = Tree::node(t.label, std::move(kids));
    return out;
  }
  std::string base = symbols.nonterminal(t.label);
  if (!base.empty() && base.front() == '@') base.erase(0, 1);
  const int inter = symbols.nonterminals.intern("@" + base);
  // Build the right spine bottom-up.
  Tree spine = Tree::node(inter, {std::move(kids[kids.size() - 2]), std::move(kids.back())});
  for (std::size_t i = kids.size() - 2; i-- > 1;)
    spine = Tree::node(inter, {std::move(kids[i]), std::move(spine)});
  return Tree::node(t.label, {std::move(kids.front()), std::move(spine)});
}

namespace {

void splice_children(const Tree& t, const SymbolTable& symbols, std::vector<Tree>& out) {
  for (const auto& c : t.children) {
    if (!c.is_preterminal() && symbols.is_intermediate(c.label)) {
      splice_children(c, symbols, out);
    } else {
      out.push_back(debinarize(c, symbols));
    }
  }
}

}  // namespace

Tree debinarize(const Tree& t, const SymbolTable& symbols) {
  if (t.is_preterminal()) return t;
  std::vector<Tree> kids;
  splice_children(t, symbols, kids);
  return Tree::node(t.label, std::move(kids));
}

Tree collapse_unary_chains(const Tree& t) {
  if (t.is_preterminal()) return t;
  Tree node;
  node.label = t.label;
  node.begin = t.begin;
  node.end = t.end;
  for (const auto& c : t.children) node.children.push_back(collapse_unary_chains(c));
  while (node.children.size() == 1) {
    Tree child = std::move(node.children.front());
    if (child.label == node.label) {
      node = std::move(child);
      continue;
    }
    if (!child.is_preterminal() && child.children.size() == 1) {
      node.children = std::move(child.children);
      continue;
    }
    node.children.front() = std::move(child);
    break;
  }
  return node;
}

Tree prepare_tree(const Tree& t, SymbolTable& symbols) {
  return collapse_unary_chains(binarize_right(t, symbols));
}

UnknownMode parse_unknown_mode(std::string_view s) {
  if (s == "berkeley60" || s == "berkeley") return UnknownMode::berkeley;
  if (s == "simple") return UnknownMode::simple;
  throw ConfigError("unknown-word mode must be berkeley60 or simple, got '" + std::string(s) + "'");
}

std::string_view to_string(UnknownMode m) {
  return m == UnknownMode::simple ? "simple" : "berkeley60";
}

std::string unknown_signature(std::string_view word, UnknownMode mode) {
  if (mode == UnknownMode::simple || word.empty()) return "UNK";
  bool all_digits = true;
  bool has_digit = false;
  bool has_dash = false;
  for (char ch : word) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isdigit(c)) {
      has_digit = true;
    } else {
      all_digits = false;
    }
    if (ch == '-') has_dash = true;
  }
  if (all_digits) return "UNK-NUM";
  std::string sig = "UNK";
  if (std::isupper(static_cast<unsigned char>(word.front()))) sig += "-CAPS";
  if (has_digit) sig += "-DIG";
  if (has_dash) sig += "-DASH";
  if (!has_digit && word.size() >= 3) {
    std::string lower(word);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    static constexpr std::string_view kSuffixes[] = {"ing", "ion", "ity", "est", "ed",
                                                     "er",  "ly",  "al",  "s",   "y"};
    for (auto suf : kSuffixes) {
      if (lower.size() > suf.size() && ends_with(lower, suf)) {
        sig += "-";
        sig += suf;
        break;
      }
    }
  }
  return sig;
}

bool Vocabulary::is_rare(std::string_view word) const {
  auto it = counts.find(std::string(word));
  return it == counts.end() || it->second <= threshold;
}

std::string Vocabulary::map(std::string_view word) const {
  return is_rare(word) ? unknown_signature(word, mode) : std::string(word);
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& sentences, int threshold,
                       UnknownMode mode) {
  if (threshold < 0) throw ConfigError("unknown-word threshold must be >= 0");
  Vocabulary v;
  v.threshold = threshold;
  v.mode = mode;
  for (const auto& s : sentences)
    for (const auto& w : s) ++v.counts[w];
  return v;
}

std::vector<std::string> tree_words(const Tree& t, const SymbolTable& symbols) {
  std::vector<std::string> out;
  collect_words(t, symbols, out);
  return out;
}

Tree apply_vocab(const Tree& t, const Vocabulary& vocab, SymbolTable& symbols) {
  Tree out = t;
  if (out.is_preterminal()) {
    out.word = symbols.terminals.intern(vocab.map(symbols.terminal(t.word)));
    return out;
  }
  for (auto& c : out.children) c = apply_vocab(c, vocab, symbols);
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == text.size()) break;
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? line.npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

std::vector<TaggedSentence> read_conllu(std::string_view text, SymbolTable& symbols) {
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) {
      if (!current.words.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    if (line.front() == '#') continue;
    auto cols = split_tabs(line);
    if (cols.size() < 4)
      throw ParseError("conllu: fewer than 4 columns on line " + std::to_string(line_no));
    if (cols[0].find_first_of("-.") != std::string_view::npos) continue;
    current.words.push_back(symbols.terminals.intern(cols[1]));
    current.tags.push_back(symbols.nonterminals.intern(cols[3]));
  }
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<TaggedSentence> read_two_column(std::string_view text, SymbolTable& symbols) {
  std::vector<TaggedSentence> out;
  TaggedSentence current;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) {
      if (!current.words.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() < 2)
      throw ParseError("tagged: expected word<TAB>tag on line " + std::to_string(line_no));
    current.words.push_back(symbols.terminals.intern(cols[0]));
    current.tags.push_back(symbols.nonterminals.intern(cols[1]));
  }
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

std::string write_two_column(const std::vector<std::vector<std::string>>& words,
                             const std::vector<std::vector<std::string>>& tags) {
  std::ostringstream os;
  for (std::size_t s = 0; s < words.size(); ++s) {
    for (std::size_t i = 0; i < words[s].size(); ++i) os << words[s][i] << '\t' << tags[s][i] << '\n';
    os << '\n';
  }
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace lveg
