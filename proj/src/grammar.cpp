#include "lveg/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "lveg/error.hpp"
#include "model_io.hpp"

namespace lveg {

namespace {

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

// kind (2 bits) | parent (20 bits) | a (21 bits) | b (21 bits)
std::uint64_t rule_key(RuleKind kind, int parent, int a, int b) {
  return (static_cast<std::uint64_t>(kind) << 62) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(parent) & 0xFFFFF) << 42) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a) & 0x1FFFFF) << 21) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(b) & 0x1FFFFF));
}

void grow(std::vector<std::vector<int>>& idx, int id) {
  if (id >= static_cast<int>(idx.size())) idx.resize(static_cast<std::size_t>(id) + 1);
}

const std::vector<int> kNoRules;

}  // namespace

std::string_view to_string(RuleKind k) {
  switch (k) {
    case RuleKind::binary: return "binary";
    case RuleKind::unary: return "unary";
    case RuleKind::lexical: return "lexical";
  }
  return "?";
}

RuleKind parse_rule_kind(std::string_view s) {
  if (s == "binary") return RuleKind::binary;
  if (s == "unary") return RuleKind::unary;
  if (s == "lexical") return RuleKind::lexical;
  throw InputError("unknown rule kind '" + std::string(s) + "'");
}

std::vector<Slot> rule_slots(RuleKind kind, int d) {
  switch (kind) {
    case RuleKind::binary: return {{"parent", d}, {"left", d}, {"right", d}};
    case RuleKind::unary: return {{"parent", d}, {"child", d}};
    case RuleKind::lexical: return {{"parent", d}};
  }
  return {};
}

int Grammar::add_rule(Rule r) {
  check_nonterminal(r.parent);
  std::uint64_t key = 0;
  switch (r.kind) {
    case RuleKind::binary:
      check_nonterminal(r.left);
      check_nonterminal(r.right);
      key = rule_key(r.kind, r.parent, r.left, r.right);
      break;
    case RuleKind::unary:
      check_nonterminal(r.left);
      if (r.left == r.parent) throw InputError("unary self-loop rules are not allowed");
      key = rule_key(r.kind, r.parent, r.left, 0);
      break;
    case RuleKind::lexical:
      if (r.terminal < 0 || r.terminal >= symbols.terminals.size())
        throw LookupError("terminal id out of range");
      key = rule_key(r.kind, r.parent, r.terminal, 0);
      break;
  }
  if (by_key_.contains(key)) throw InputError("duplicate rule");
  const int id = static_cast<int>(rules_.size());
  r.id = id;
  by_key_.emplace(key, id);
  grow(by_parent_, r.parent);
  by_parent_[static_cast<std::size_t>(r.parent)].push_back(id);
  switch (r.kind) {
    case RuleKind::binary:
      grow(binary_by_left_, r.left);
      binary_by_left_[static_cast<std::size_t>(r.left)].push_back(id);
      by_children_[pair_key(r.left, r.right)].push_back(id);
      break;
    case RuleKind::unary:
      grow(unary_by_child_, r.left);
      unary_by_child_[static_cast<std::size_t>(r.left)].push_back(id);
      break;
    case RuleKind::lexical:
      grow(by_terminal_, r.terminal);
      by_terminal_[static_cast<std::size_t>(r.terminal)].push_back(id);
      break;
  }
  rules_.push_back(std::move(r));
  return id;
}

void Grammar::check_nonterminal(int id) const {
  if (id < 0 || id >= symbols.nonterminals.size())
    throw LookupError("nonterminal id " + std::to_string(id) + " out of range");
}

const std::vector<int>& Grammar::bucket(const std::vector<std::vector<int>>& idx, int id) const {
  if (id < static_cast<int>(idx.size())) return idx[static_cast<std::size_t>(id)];
  return kNoRules;
}

std::span<const int> Grammar::rules_for_parent(int parent) const {
  check_nonterminal(parent);
  return bucket(by_parent_, parent);
}

std::span<const int> Grammar::rules_for_children(int left, int right) const {
  check_nonterminal(left);
  check_nonterminal(right);
  auto it = by_children_.find(pair_key(left, right));
  if (it == by_children_.end()) return {};
  return it->second;
}

std::span<const int> Grammar::binary_rules_for_left(int left) const {
  check_nonterminal(left);
  return bucket(binary_by_left_, left);
}

std::span<const int> Grammar::unary_rules_for_child(int child) const {
  check_nonterminal(child);
  return bucket(unary_by_child_, child);
}

std::span<const int> Grammar::rules_for_terminal(int terminal) const {
  if (terminal < 0 || terminal >= symbols.terminals.size())
    throw LookupError("terminal id " + std::to_string(terminal) + " out of range");
  return bucket(by_terminal_, terminal);
}

std::span<const int> Grammar::rules_for_word(std::string_view word) const {
  const int id = symbols.terminals.find(word);
  if (id < 0) return {};
  return bucket(by_terminal_, id);
}

int Grammar::find_binary(int parent, int left, int right) const {
  auto it = by_key_.find(rule_key(RuleKind::binary, parent, left, right));
  return it == by_key_.end() ? -1 : it->second;
}

int Grammar::find_unary(int parent, int child) const {
  auto it = by_key_.find(rule_key(RuleKind::unary, parent, child, 0));
  return it == by_key_.end() ? -1 : it->second;
}

int Grammar::find_lexical(int parent, int terminal) const {
  auto it = by_key_.find(rule_key(RuleKind::lexical, parent, terminal, 0));
  return it == by_key_.end() ? -1 : it->second;
}

int Grammar::map_word(std::string_view word) const {
  for (const std::string& candidate :
       {std::string(word), unknown_signature(word, unknown_mode), std::string("UNK")}) {
    if (!rules_for_word(candidate).empty()) return symbols.terminals.find(candidate);
  }
  throw CoverageError("no lexical rule covers the word '" + std::string(word) + "'");
}

std::vector<int> Grammar::map_sentence(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(map_word(w));
  return out;
}

namespace {

struct RuleCounts {
  // (kind, parent, a, b) -> count, ordered for deterministic rule ids.
  std::map<std::tuple<int, int, int, int>, double> counts;
  std::map<int, double> parent_totals;

  void add(RuleKind kind, int parent, int a, int b) {
    counts[{static_cast<int>(kind), parent, a, b}] += 1.0;
    parent_totals[parent] += 1.0;
  }
};

void count_rules(const Tree& t, RuleCounts& rc) {
  if (t.is_preterminal()) {
    rc.add(RuleKind::lexical, t.label, t.word, -1);
    return;
  }
  if (t.children.size() == 1) {
    if (t.children[0].label != t.label) rc.add(RuleKind::unary, t.label, t.children[0].label, -1);
  } else if (t.children.size() == 2) {
    rc.add(RuleKind::binary, t.label, t.children[0].label, t.children[1].label);
  } else {
    throw InputError("estimate_pcfg: tree is not binarized");
  }
  for (const auto& c : t.children) count_rules(c, rc);
}

}  // namespace

Grammar estimate_pcfg(const std::vector<Tree>& treebank, const SymbolTable& symbols) {
  if (treebank.empty()) throw InputError("estimate_pcfg: empty treebank");
  Grammar g;
  g.symbols = symbols;
  const int root = treebank.front().label;
  for (const auto& t : treebank)
    if (t.label != root) throw InputError("estimate_pcfg: trees have different root labels");
  if (g.symbols.start_id >= 0 && g.symbols.start_id != root)
    throw InputError("estimate_pcfg: root label differs from the start symbol");
  g.symbols.start_id = root;

  RuleCounts rc;
  for (const auto& t : treebank) count_rules(t, rc);
  for (const auto& [key, count] : rc.counts) {
    const auto [kind, parent, a, b] = key;
    Rule r;
    r.kind = static_cast<RuleKind>(kind);
    r.parent = parent;
    if (r.kind == RuleKind::lexical) {
      r.terminal = a;
    } else {
      r.left = a;
      r.right = b;
    }
    r.baseline_prob = count / rc.parent_totals.at(parent);
    r.weight = GaussianMixture(rule_slots(r.kind, g.d));
    g.add_rule(std::move(r));
  }
  return g;
}

void init_weight(GaussianMixture& weight, double prob, const InitConfig& cfg, std::mt19937_64& rng) {
  if (!(cfg.alpha > 1.0)) throw ConfigError("alpha must be > 1");
  if (cfg.K < 1 || cfg.d < 1) throw ConfigError("K and d must be >= 1");
  if (!(prob > 0.0)) throw ConfigError("rule probability must be positive");
  GaussianMixture w(weight.slots());
  std::uniform_real_distribution<double> uni(-0.05, 0.05);
  const double lw = std::log(cfg.alpha * prob);
  std::vector<double> mean(w.dims()), var(w.dims(), 1.0);
  for (int k = 0; k < cfg.K; ++k) {
    for (double& m : mean) m = uni(rng);
    w.add_component(lw, mean, var);
  }
  weight = std::move(w);
}

Grammar init_gm_lveg(const Grammar& pcfg, const InitConfig& cfg) {
  if (!(cfg.alpha > 1.0)) throw ConfigError("alpha must be > 1");
  if (cfg.K < 1 || cfg.d < 1) throw ConfigError("K and d must be >= 1");
  Grammar g = pcfg;
  g.K = cfg.K;
  g.d = cfg.d;
  g.spherical = cfg.spherical;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < g.num_rules(); ++i) {
    Rule& r = g.mutable_rule(static_cast<int>(i));
    r.weight = GaussianMixture(rule_slots(r.kind, cfg.d));
    init_weight(r.weight, r.baseline_prob, cfg, rng);
  }
  return g;
}

std::vector<Tree> prepare_treebank(const std::vector<Tree>& trees, const Vocabulary& vocab,
                                   SymbolTable& symbols) {
  std::vector<Tree> out;
  out.reserve(trees.size());
  bool mixed = false;
  for (const auto& t : trees) mixed |= t.label != trees.front().label;
  const int root = mixed ? symbols.nonterminals.intern("ROOT") : -1;
  for (const auto& t : trees) {
    Tree mapped = apply_vocab(t, vocab, symbols);
    if (mixed) mapped = Tree::node(root, {std::move(mapped)});
    out.push_back(prepare_tree(mapped, symbols));
  }
  if (!out.empty()) symbols.start_id = out.front().label;
  return out;
}

std::string save_grammar_json(const Grammar& g) {
  using namespace detail;
  std::string out;
  out += "{\"format\":\"gm-lveg-grammar\",\"version\":1,\"d\":" + std::to_string(g.d) +
         ",\"K\":" + std::to_string(g.K) + ",\"spherical\":" + (g.spherical ? "true" : "false") +
         ",\"unknown_mode\":";
  json_string(out, to_string(g.unknown_mode));
  out += ",\n\"symbols\":{\"start\":";
  json_string(out, g.start() >= 0 ? g.symbols.nonterminal(g.start()) : std::string());
  out += ",\"nonterminals\":";
  json_strings(out, g.symbols.nonterminals.names());
  out += ",\n\"terminals\":";
  json_strings(out, g.symbols.terminals.names());
  out += "},\n\"rules\":[";
  for (std::size_t i = 0; i < g.num_rules(); ++i) {
    const Rule& r = g.rules()[i];
    out += i ? ",\n" : "\n";
    out += "{\"kind\":";
    json_string(out, to_string(r.kind));
    out += ",\"parent\":";
    json_string(out, g.symbols.nonterminal(r.parent));
    if (r.kind == RuleKind::lexical) {
      out += ",\"terminal\":";
      json_string(out, g.symbols.terminal(r.terminal));
    } else {
      out += ",\"children\":[";
      json_string(out, g.symbols.nonterminal(r.left));
      if (r.kind == RuleKind::binary) {
        out += ',';
        json_string(out, g.symbols.nonterminal(r.right));
      }
      out += ']';
    }
    out += ",\"baseline_prob\":";
    json_number(out, r.baseline_prob);
    out += ",\"components\":";
    write_components(out, r.weight);
    out += '}';
  }
  out += "\n]}\n";
  return out;
}

Grammar load_grammar_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "gm-lveg-grammar") throw InputError("model: not a grammar file");
    if (doc.at("version").get<int>() != 1) throw InputError("model: unsupported version");
    Grammar g;
    g.d = doc.at("d").get<int>();
    g.K = doc.at("K").get<int>();
    g.spherical = doc.at("spherical").get<bool>();
    g.unknown_mode = parse_unknown_mode(doc.at("unknown_mode").get<std::string>());
    const auto& sym = doc.at("symbols");
    for (const auto& n : sym.at("nonterminals")) g.symbols.nonterminals.intern(n.get<std::string>());
    for (const auto& t : sym.at("terminals")) g.symbols.terminals.intern(t.get<std::string>());
    const auto start = sym.at("start").get<std::string>();
    g.symbols.start_id = start.empty() ? -1 : g.symbols.nonterminals.find(start);
    auto nt = [&](const nlohmann::json& j) {
      const int id = g.symbols.nonterminals.find(j.get<std::string>());
      if (id < 0) throw InputError("model: unknown nonterminal " + j.dump());
      return id;
    };
    for (const auto& jr : doc.at("rules")) {
      Rule r;
      r.kind = parse_rule_kind(jr.at("kind").get<std::string>());
      r.parent = nt(jr.at("parent"));
      if (r.kind == RuleKind::lexical) {
        r.terminal = g.symbols.terminals.find(jr.at("terminal").get<std::string>());
        if (r.terminal < 0) throw InputError("model: unknown terminal");
      } else {
        const auto& ch = jr.at("children");
        r.left = nt(ch.at(0));
        if (r.kind == RuleKind::binary) r.right = nt(ch.at(1));
      }
      r.baseline_prob = jr.at("baseline_prob").get<double>();
      r.weight = GaussianMixture(rule_slots(r.kind, g.d));
      detail::read_components(jr.at("components"), r.weight);
      g.add_rule(std::move(r));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

}  // namespace lveg
