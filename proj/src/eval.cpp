#include "lveg/eval.hpp"

#include <algorithm>

#include "lveg/error.hpp"

namespace lveg {

namespace {

void collect(const Tree& t, std::vector<LabeledSpan>& out) {
  if (t.is_preterminal()) return;
  if (t.length() > 1) out.push_back({t.label, t.begin, t.end});
  for (const auto& c : t.children) collect(c, out);
}

double ratio(std::size_t num, std::size_t den, bool vacuous) {
  if (den == 0) return vacuous ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<LabeledSpan> brackets(const Tree& t) {
  std::vector<LabeledSpan> out;
  if (t.is_preterminal()) return out;
  if (t.length() == 1) out.push_back({t.label, t.begin, t.end});
  collect(t, out);
  std::sort(out.begin(), out.end());
  return out;
}

BracketScore score_brackets(const std::vector<Tree>& gold, const std::vector<Tree>& predicted) {
  if (gold.size() != predicted.size())
    throw InputError("score_brackets: " + std::to_string(gold.size()) + " gold trees vs " +
                     std::to_string(predicted.size()) + " predicted");
  BracketScore s;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].begin != predicted[i].begin || gold[i].end != predicted[i].end)
      throw InputError("score_brackets: sentence " + std::to_string(i + 1) +
                       " has different lengths");
    const auto g = brackets(gold[i]);
    const auto p = brackets(predicted[i]);
    std::vector<LabeledSpan> common;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(common));
    s.gold_brackets += g.size();
    s.predicted_brackets += p.size();
    s.matched += common.size();
    exact += g == p;
  }
  s.sentences = gold.size();
  const bool empty = s.gold_brackets == 0 && s.predicted_brackets == 0;
  s.precision = ratio(s.matched, s.predicted_brackets, empty);
  s.recall = ratio(s.matched, s.gold_brackets, empty);
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  s.exact = ratio(exact, s.sentences, true);
  return s;
}

Tree strip_root(const Tree& t, const SymbolTable& symbols) {
  if (!t.is_preterminal() && t.children.size() == 1 && symbols.nonterminal(t.label) == "ROOT")
    return t.children.front();
  return t;
}

Tree finalize_tree(const Tree& t, const SymbolTable& symbols) {
  return strip_root(debinarize(t, symbols), symbols);
}

Tree fallback_tree(const Grammar& g, std::span<const int> words) {
  const int n = static_cast<int>(words.size());
  if (n == 0) throw InputError("empty sentence");
  if (g.start() < 0) throw StateError("grammar has no start symbol");
  std::vector<Tree> leaves;
  for (int i = 0; i < n; ++i) {
    const int w = words[static_cast<std::size_t>(i)];
    int tag = g.start();
    double best = -1.0;
    if (w >= 0 && w < g.symbols.terminals.size())
      for (int r : g.rules_for_terminal(w))
        if (g.rule(r).baseline_prob > best) {
          best = g.rule(r).baseline_prob;
          tag = g.rule(r).parent;
        }
    leaves.push_back(Tree::preterminal(tag, w, i + 1));
  }
  Tree t = std::move(leaves.back());
  if (n == 1) {
    if (t.label != g.start()) t = Tree::node(g.start(), {std::move(t)});
  } else {
    for (int i = n - 2; i >= 0; --i)
      t = Tree::node(g.start(), {std::move(leaves[static_cast<std::size_t>(i)]), std::move(t)});
  }
  assign_spans(t);
  return t;
}

ParseOutcome parse_sentence(const Grammar& g, std::span<const int> words,
                            const ParseOptions& opts, const ConstituentMask* mask) {
  const int n = static_cast<int>(words.size());
  if (n == 0) throw InputError("empty sentence");
  try {
    const ConstituentMask own = mask ? ConstituentMask(0, 0, false) : pcfg_mask(g, words, opts.p_min);
    ParseChart chart = inside(g, words, mask ? *mask : own, opts.prune);
    sentence_weight(chart);
    outside(g, chart, opts.prune);
    return {max_rule_parse(g, rule_posteriors(g, chart)), ParseSource::max_rule};
  } catch (const NoParseError&) {
  } catch (const CoverageError&) {
  }
  try {
    return {pcfg_viterbi(g, words, ConstituentMask::all(n, g.num_nonterminals())),
            ParseSource::viterbi};
  } catch (const NoParseError&) {
  } catch (const CoverageError&) {
  }
  return {fallback_tree(g, words), ParseSource::fallback};
}

}  // namespace lveg
