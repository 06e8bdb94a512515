#include "lveg/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <random>

#include "lveg/error.hpp"
#include "lveg/numeric.hpp"
#include "model_io.hpp"

namespace lveg {

namespace {

const std::vector<int> kNone;

std::vector<Slot> tag_slot(int d) { return {{"tag", d}}; }
std::vector<Slot> transition_slots(int d) { return {{"from", d}, {"to", d}}; }

bool is_signature(std::string_view terminal) { return terminal.starts_with("UNK"); }

}  // namespace

void SequenceModel::reindex() {
  by_terminal_.assign(static_cast<std::size_t>(symbols.terminals.size()), {});
  std::vector<std::size_t> order(emissions.size());
  for (std::size_t e = 0; e < emissions.size(); ++e) order[e] = e;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return emissions[a].tag < emissions[b].tag;
  });
  for (std::size_t e : order) {
    const Emission& em = emissions[e];
    if (em.terminal < 0 || em.terminal >= symbols.terminals.size())
      throw LookupError("emission terminal out of range");
    by_terminal_[static_cast<std::size_t>(em.terminal)].push_back(static_cast<int>(e));
  }
}

std::span<const int> SequenceModel::emissions_for(int terminal) const {
  if (terminal < 0 || terminal >= static_cast<int>(by_terminal_.size())) return kNone;
  return by_terminal_[static_cast<std::size_t>(terminal)];
}

int SequenceModel::find_emission(int tag, int terminal) const {
  for (int e : emissions_for(terminal))
    if (emissions[static_cast<std::size_t>(e)].tag == tag) return e;
  return -1;
}

int SequenceModel::map_word(std::string_view word) const {
  for (const std::string& candidate :
       {std::string(word), unknown_signature(word, unknown_mode), std::string("UNK")}) {
    const int id = symbols.terminals.find(candidate);
    if (id >= 0 && !emissions_for(id).empty()) return id;
  }
  throw CoverageError("no emission covers the word '" + std::string(word) + "'");
}

std::vector<int> SequenceModel::map_sentence(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(map_word(w));
  return out;
}

SequenceModel estimate_sequence_model(const std::vector<TaggedSentence>& data,
                                      const SymbolTable& symbols, UnknownMode mode,
                                      double smoothing) {
  if (data.empty()) throw InputError("estimate_sequence_model: no training sentences");
  if (!(smoothing > 0.0)) throw ConfigError("smoothing must be positive");
  SequenceModel m;
  m.symbols = symbols;
  m.unknown_mode = mode;
  m.symbols.terminals.intern("UNK");
  const int T = m.num_tags();
  if (T == 0) throw InputError("estimate_sequence_model: no tags");
  const auto TT = static_cast<std::size_t>(T);

  std::vector<double> first(TT, 0.0), last(TT, 0.0), count(TT, 0.0), trans(TT * TT, 0.0);
  std::map<std::pair<int, int>, double> emit;  // (tag, terminal)
  for (const TaggedSentence& s : data) {
    if (s.words.size() != s.tags.size() || s.words.empty())
      throw InputError("estimate_sequence_model: malformed sentence");
    first[static_cast<std::size_t>(s.tags.front())] += 1.0;
    last[static_cast<std::size_t>(s.tags.back())] += 1.0;
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
      const auto a = static_cast<std::size_t>(s.tags[i]);
      count[a] += 1.0;
      emit[{s.tags[i], s.words[i]}] += 1.0;
      if (i + 1 < s.tags.size()) trans[a * TT + static_cast<std::size_t>(s.tags[i + 1])] += 1.0;
    }
  }
  std::vector<int> signatures;
  for (int t = 0; t < m.symbols.terminals.size(); ++t)
    if (is_signature(m.symbols.terminal(t))) signatures.push_back(t);
  for (int a = 0; a < T; ++a)
    for (int s : signatures) emit.try_emplace({a, s}, 0.0);

  const double n = static_cast<double>(data.size());
  m.start.assign(TT, GaussianMixture(tag_slot(m.d)));
  m.stop.assign(TT, GaussianMixture(tag_slot(m.d)));
  m.transitions.assign(TT * TT, GaussianMixture(transition_slots(m.d)));
  m.start_prob.resize(TT);
  m.stop_prob.resize(TT);
  m.transition_prob.resize(TT * TT);
  for (std::size_t a = 0; a < TT; ++a) {
    m.start_prob[a] = (first[a] + smoothing) / (n + smoothing * T);
    const double denom = count[a] + smoothing * (T + 1);
    m.stop_prob[a] = (last[a] + smoothing) / denom;
    for (std::size_t b = 0; b < TT; ++b)
      m.transition_prob[a * TT + b] = (trans[a * TT + b] + smoothing) / denom;
  }
  const double sig = static_cast<double>(signatures.size());
  for (const auto& [key, c] : emit) {
    const auto [tag, terminal] = key;
    const bool smoothed = is_signature(m.symbols.terminal(terminal));
    Emission e;
    e.tag = tag;
    e.terminal = terminal;
    e.baseline_prob =
        (c + (smoothed ? smoothing : 0.0)) / (count[static_cast<std::size_t>(tag)] + smoothing * sig);
    e.weight = GaussianMixture(tag_slot(m.d));
    m.emissions.push_back(std::move(e));
  }
  m.reindex();
  return m;
}

void init_sequence_model(SequenceModel& m, const InitConfig& cfg) {
  if (!(cfg.alpha > 1.0)) throw ConfigError("alpha must be > 1");
  if (cfg.K < 1 || cfg.d < 1) throw ConfigError("K and d must be >= 1");
  m.d = cfg.d;
  m.K = cfg.K;
  m.spherical = cfg.spherical;
  std::mt19937_64 rng(cfg.seed);
  const int T = m.num_tags();
  for (int a = 0; a < T; ++a) {
    auto& s = m.start[static_cast<std::size_t>(a)];
    s = GaussianMixture(tag_slot(cfg.d));
    init_weight(s, m.start_prob[static_cast<std::size_t>(a)], cfg, rng);
  }
  for (int a = 0; a < T; ++a) {
    auto& s = m.stop[static_cast<std::size_t>(a)];
    s = GaussianMixture(tag_slot(cfg.d));
    init_weight(s, m.stop_prob[static_cast<std::size_t>(a)], cfg, rng);
  }
  for (int a = 0; a < T; ++a)
    for (int b = 0; b < T; ++b) {
      auto& w = m.transition(a, b);
      w = GaussianMixture(transition_slots(cfg.d));
      init_weight(w, m.transition_prob[static_cast<std::size_t>(a * T + b)], cfg, rng);
    }
  for (Emission& e : m.emissions) {
    e.weight = GaussianMixture(tag_slot(cfg.d));
    init_weight(e.weight, e.baseline_prob, cfg, rng);
  }
}

std::vector<TaggedSentence> apply_vocab(const std::vector<TaggedSentence>& data,
                                        const Vocabulary& vocab, SymbolTable& symbols) {
  std::vector<TaggedSentence> out = data;
  for (TaggedSentence& s : out)
    for (int& w : s.words) w = symbols.terminals.intern(vocab.map(symbols.terminal(w)));
  return out;
}

namespace {

SequenceChart run_chart(const SequenceModel& m, std::span<const int> words,
                        std::span<const int> gold, const PruneConfig& prune, bool backward) {
  const int n = static_cast<int>(words.size());
  const int T = m.num_tags();
  if (n == 0) throw InputError("empty sentence");
  if (!gold.empty() && static_cast<int>(gold.size()) != n)
    throw InputError("gold tag sequence length differs from the sentence");
  SequenceChart c;
  c.n = n;
  c.tags = T;
  c.words.assign(words.begin(), words.end());
  const std::size_t cells = static_cast<std::size_t>(n) * T;
  c.emission.assign(cells, -1);
  c.pre.resize(cells);
  c.alpha.resize(cells);
  c.beta.resize(cells);
  for (int t = 1; t <= n; ++t) {
    const int w = words[static_cast<std::size_t>(t - 1)];
    if (m.emissions_for(w).empty())
      throw CoverageError("no emission for the word '" +
                          (w >= 0 && w < m.symbols.terminals.size() ? m.symbols.terminal(w)
                                                                    : std::to_string(w)) +
                          "'");
    for (int e : m.emissions_for(w)) {
      const int a = m.emissions[static_cast<std::size_t>(e)].tag;
      if (!gold.empty() && gold[static_cast<std::size_t>(t - 1)] != a) continue;
      c.emission[c.at(t, a)] = e;
    }
    if (!gold.empty() && c.emission[c.at(t, gold[static_cast<std::size_t>(t - 1)])] < 0)
      throw CoverageError("gold tag '" + m.symbols.nonterminal(gold[static_cast<std::size_t>(t - 1)]) +
                          "' never emits '" + m.symbols.terminal(w) + "'");
  }

  const SlotFactor keep = SlotFactor::keep();
  for (int t = 1; t <= n; ++t) {
    for (int b = 0; b < T; ++b) {
      const int e = c.emission[c.at(t, b)];
      if (e < 0) continue;
      GaussianMixture pre;
      if (t == 1) {
        pre = m.start[static_cast<std::size_t>(b)];
      } else {
        MixtureAccumulator acc(tag_slot(m.d));
        for (int a = 0; a < T; ++a) {
          const GaussianMixture& prev = c.alpha[c.at(t - 1, a)];
          const GaussianMixture& w = m.transition(a, b);
          if (prev.empty() || w.empty()) continue;
          const SlotFactor f[] = {SlotFactor::of(prev), keep};
          contract_into(acc, w, f);
        }
        pre = prune_components(acc.release(), prune);
      }
      if (pre.empty()) continue;
      c.alpha[c.at(t, b)] =
          prune_components(product(m.emissions[static_cast<std::size_t>(e)].weight, pre), prune);
      c.pre[c.at(t, b)] = std::move(pre);
    }
  }
  double log_z = kLogZero;
  for (int a = 0; a < T; ++a) {
    const GaussianMixture& al = c.alpha[c.at(n, a)];
    if (al.empty()) continue;
    const SlotFactor f[] = {SlotFactor::of(al)};
    log_z = log_add(log_z, log_contract(m.stop[static_cast<std::size_t>(a)], f));
  }
  if (log_z == kLogZero) throw NoParseError("no tag sequence has positive weight");
  c.log_z = log_z;
  if (!backward) return c;

  for (int a = 0; a < T; ++a)
    if (c.emission[c.at(n, a)] >= 0) c.beta[c.at(n, a)] = m.stop[static_cast<std::size_t>(a)];
  for (int t = n - 1; t >= 1; --t) {
    std::vector<GaussianMixture> eb(static_cast<std::size_t>(T));
    for (int b = 0; b < T; ++b) {
      const int e = c.emission[c.at(t + 1, b)];
      const GaussianMixture& be = c.beta[c.at(t + 1, b)];
      if (e >= 0 && !be.empty())
        eb[static_cast<std::size_t>(b)] = product(m.emissions[static_cast<std::size_t>(e)].weight, be);
    }
    for (int a = 0; a < T; ++a) {
      if (c.emission[c.at(t, a)] < 0) continue;
      MixtureAccumulator acc(tag_slot(m.d));
      for (int b = 0; b < T; ++b) {
        const GaussianMixture& w = m.transition(a, b);
        if (eb[static_cast<std::size_t>(b)].empty() || w.empty()) continue;
        const SlotFactor f[] = {keep, SlotFactor::of(eb[static_cast<std::size_t>(b)])};
        contract_into(acc, w, f);
      }
      c.beta[c.at(t, a)] = prune_components(acc.release(), prune);
    }
  }
  return c;
}

struct WeightIndex {
  int tags = 0;
  std::vector<int> transition;  // -1 when absent
  int emission0 = 0;

  explicit WeightIndex(const SequenceModel& m) : tags(m.num_tags()) {
    int next = 2 * tags;
    transition.assign(m.transitions.size(), -1);
    for (std::size_t i = 0; i < m.transitions.size(); ++i)
      if (!m.transitions[i].empty()) transition[i] = next++;
    emission0 = next;
  }
};

void add_terms(const SequenceModel& m, const WeightIndex& wi,
               const std::shared_ptr<SequenceChart>& cp, ExpectedOuter& out) {
  const SequenceChart& c = *cp;
  auto store = std::make_shared<std::deque<GaussianMixture>>();
  const int n = c.n;
  const int T = c.tags;
  const double coef = -c.log_z;
  auto term = [&](int weight, SlotFactor f0, SlotFactor f1 = SlotFactor::keep()) {
    OuterTerm t;
    t.weight = weight;
    t.log_coef = coef;
    t.factors[0] = f0;
    t.factors[1] = f1;
    out.terms.push_back(t);
  };
  // emission * beta, per position.
  std::vector<const GaussianMixture*> eb(static_cast<std::size_t>(n) * T, nullptr);
  for (int t = 1; t <= n; ++t)
    for (int a = 0; a < T; ++a) {
      const int e = c.emission[c.at(t, a)];
      const GaussianMixture& be = c.beta[c.at(t, a)];
      if (e < 0 || be.empty()) continue;
      store->push_back(product(m.emissions[static_cast<std::size_t>(e)].weight, be));
      eb[c.at(t, a)] = &store->back();
    }
  for (int a = 0; a < T; ++a)
    if (eb[c.at(1, a)] && !c.pre[c.at(1, a)].empty()) term(a, SlotFactor::of(*eb[c.at(1, a)]));
  for (int t = 1; t <= n; ++t)
    for (int a = 0; a < T; ++a) {
      const int e = c.emission[c.at(t, a)];
      const GaussianMixture& pre = c.pre[c.at(t, a)];
      const GaussianMixture& be = c.beta[c.at(t, a)];
      if (e < 0 || pre.empty() || be.empty()) continue;
      store->push_back(product(pre, be));
      term(wi.emission0 + e, SlotFactor::of(store->back()));
    }
  for (int t = 1; t < n; ++t)
    for (int a = 0; a < T; ++a) {
      const GaussianMixture& al = c.alpha[c.at(t, a)];
      if (al.empty()) continue;
      for (int b = 0; b < T; ++b) {
        const int w = wi.transition[static_cast<std::size_t>(a * T + b)];
        if (w < 0 || !eb[c.at(t + 1, b)]) continue;
        term(w, SlotFactor::of(al), SlotFactor::of(*eb[c.at(t + 1, b)]));
      }
    }
  for (int a = 0; a < T; ++a) {
    const GaussianMixture& al = c.alpha[c.at(n, a)];
    if (!al.empty()) term(T + a, SlotFactor::of(al));
  }
  out.owners.push_back(cp);
  out.owners.push_back(store);
}

}  // namespace

SequenceChart seq_inside_outside(const SequenceModel& m, std::span<const int> words,
                                 std::span<const int> gold_tags, const PruneConfig& prune) {
  return run_chart(m, words, gold_tags, prune, true);
}

std::vector<std::vector<double>> tag_posteriors(const SequenceChart& c) {
  std::vector<std::vector<double>> q(static_cast<std::size_t>(c.n),
                                     std::vector<double>(static_cast<std::size_t>(c.tags), 0.0));
  for (int t = 1; t <= c.n; ++t)
    for (int a = 0; a < c.tags; ++a) {
      const GaussianMixture& al = c.alpha[c.at(t, a)];
      const GaussianMixture& be = c.beta[c.at(t, a)];
      if (al.empty() || be.empty()) continue;
      const SlotFactor f[] = {SlotFactor::of(be)};
      q[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(a)] =
          std::exp(log_contract(al, f) - c.log_z);
    }
  return q;
}

std::vector<int> decode(const SequenceModel& m, std::span<const int> words,
                        const PruneConfig& prune) {
  const auto q = tag_posteriors(seq_inside_outside(m, words, {}, prune));
  std::vector<int> out;
  out.reserve(q.size());
  for (const auto& row : q)
    out.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  return out;
}

TagAccuracy accuracy(const std::vector<std::vector<int>>& gold,
                     const std::vector<std::vector<int>>& predicted) {
  if (gold.size() != predicted.size())
    throw InputError("accuracy: " + std::to_string(gold.size()) + " gold sentences vs " +
                     std::to_string(predicted.size()) + " predicted");
  TagAccuracy acc;
  std::size_t right = 0, whole = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].size() != predicted[s].size())
      throw InputError("accuracy: sentence " + std::to_string(s + 1) + " has mismatched length");
    std::size_t r = 0;
    for (std::size_t i = 0; i < gold[s].size(); ++i) r += gold[s][i] == predicted[s][i];
    right += r;
    acc.tokens += gold[s].size();
    whole += r == gold[s].size();
  }
  acc.sentences = gold.size();
  acc.token = acc.tokens ? static_cast<double>(right) / acc.tokens : 0.0;
  acc.sentence = acc.sentences ? static_cast<double>(whole) / acc.sentences : 0.0;
  return acc;
}

std::vector<GaussianMixture*> sequence_weights(SequenceModel& m) {
  std::vector<GaussianMixture*> out;
  for (auto& s : m.start) out.push_back(&s);
  for (auto& s : m.stop) out.push_back(&s);
  for (auto& t : m.transitions)
    if (!t.empty()) out.push_back(&t);
  for (auto& e : m.emissions) out.push_back(&e.weight);
  return out;
}

SentenceOuters sequence_outers(const SequenceModel& m, const TaggedSentence& ex,
                               const PruneConfig& prune) {
  const WeightIndex wi(m);
  auto free = std::make_shared<SequenceChart>(run_chart(m, ex.words, {}, prune, true));
  auto gold = std::make_shared<SequenceChart>(run_chart(m, ex.words, ex.tags, prune, true));
  SentenceOuters so;
  so.log_z = free->log_z;
  so.log_gold = gold->log_z;
  add_terms(m, wi, free, so.unconstrained);
  add_terms(m, wi, gold, so.gold);
  return so;
}

SentenceOuters SequenceObjective::outers(std::size_t example) const {
  return sequence_outers(m_, examples_.at(example), prune_);
}

double SequenceObjective::nll(std::size_t example) const {
  const TaggedSentence& ex = examples_.at(example);
  return run_chart(m_, ex.words, {}, prune_, false).log_z -
         run_chart(m_, ex.words, ex.tags, prune_, false).log_z;
}

std::string save_sequence_model_json(const SequenceModel& m) {
  using namespace detail;
  std::string out;
  out += "{\"format\":\"gm-lveg-tagger\",\"version\":1,\"d\":" + std::to_string(m.d) +
         ",\"K\":" + std::to_string(m.K) + ",\"spherical\":" + (m.spherical ? "true" : "false") +
         ",\"unknown_mode\":";
  json_string(out, to_string(m.unknown_mode));
  out += ",\n\"tags\":";
  json_strings(out, m.symbols.nonterminals.names());
  out += ",\n\"terminals\":";
  json_strings(out, m.symbols.terminals.names());
  auto per_tag = [&](const char* key, const std::vector<GaussianMixture>& ws,
                     const std::vector<double>& probs) {
    out += ",\n\"";
    out += key;
    out += "\":[";
    for (std::size_t a = 0; a < ws.size(); ++a) {
      out += a ? ",\n" : "\n";
      out += "{\"prob\":";
      json_number(out, probs[a]);
      out += ",\"components\":";
      write_components(out, ws[a]);
      out += '}';
    }
    out += "]";
  };
  per_tag("start", m.start, m.start_prob);
  per_tag("stop", m.stop, m.stop_prob);
  per_tag("transitions", m.transitions, m.transition_prob);
  out += ",\n\"emissions\":[";
  for (std::size_t e = 0; e < m.emissions.size(); ++e) {
    const Emission& em = m.emissions[e];
    out += e ? ",\n" : "\n";
    out += "{\"tag\":";
    json_string(out, m.symbols.nonterminal(em.tag));
    out += ",\"terminal\":";
    json_string(out, m.symbols.terminal(em.terminal));
    out += ",\"prob\":";
    json_number(out, em.baseline_prob);
    out += ",\"components\":";
    write_components(out, em.weight);
    out += '}';
  }
  out += "\n]}\n";
  return out;
}

SequenceModel load_sequence_model_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "gm-lveg-tagger") throw InputError("model: not a tagger file");
    if (doc.at("version").get<int>() != 1) throw InputError("model: unsupported version");
    SequenceModel m;
    m.d = doc.at("d").get<int>();
    m.K = doc.at("K").get<int>();
    m.spherical = doc.at("spherical").get<bool>();
    m.unknown_mode = parse_unknown_mode(doc.at("unknown_mode").get<std::string>());
    for (const auto& t : doc.at("tags")) m.symbols.nonterminals.intern(t.get<std::string>());
    for (const auto& t : doc.at("terminals")) m.symbols.terminals.intern(t.get<std::string>());
    const auto T = static_cast<std::size_t>(m.num_tags());
    auto per_tag = [&](const char* key, std::vector<Slot> slots, std::size_t count,
                       std::vector<GaussianMixture>& ws, std::vector<double>& probs) {
      const auto& arr = doc.at(key);
      if (arr.size() != count) throw InputError(std::string("model: wrong number of ") + key);
      for (const auto& j : arr) {
        probs.push_back(j.at("prob").get<double>());
        ws.emplace_back(slots);
        detail::read_components(j.at("components"), ws.back());
      }
    };
    per_tag("start", tag_slot(m.d), T, m.start, m.start_prob);
    per_tag("stop", tag_slot(m.d), T, m.stop, m.stop_prob);
    per_tag("transitions", transition_slots(m.d), T * T, m.transitions, m.transition_prob);
    for (const auto& j : doc.at("emissions")) {
      Emission e;
      e.tag = m.symbols.nonterminals.find(j.at("tag").get<std::string>());
      e.terminal = m.symbols.terminals.find(j.at("terminal").get<std::string>());
      if (e.tag < 0 || e.terminal < 0) throw InputError("model: unknown emission symbol");
      e.baseline_prob = j.at("prob").get<double>();
      e.weight = GaussianMixture(tag_slot(m.d));
      detail::read_components(j.at("components"), e.weight);
      m.emissions.push_back(std::move(e));
    }
    m.reindex();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model: ") + e.what());
  }
}

}  // namespace lveg
