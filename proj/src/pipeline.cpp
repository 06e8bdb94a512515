#include "lveg/pipeline.hpp"

#include "lveg/error.hpp"
#include "lveg/parallel.hpp"

namespace lveg {

void RunConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(d >= 1, "d must be >= 1");
  require(K >= 1, "K must be >= 1");
  require(alpha > 1.0, "alpha must be > 1");
  require(epochs >= 0, "epochs must be >= 0");
  require(batch_size >= 1, "batch size must be >= 1");
  require(lr > 0.0, "learning rate must be positive");
  require(k_min_train >= 1 && k_min_parse >= 1, "k-min must be >= 1");
  require(k_max >= k_min_train && k_max >= k_min_parse, "k-max must be >= k-min");
  require(theta >= 0.0 && theta <= 1.0, "theta must lie in [0, 1]");
  require(k_hard >= 0, "k-hard must be >= 0");
  require(p_min >= 0.0 && p_min < 1.0, "p-min must lie in [0, 1)");
  require(unk_threshold >= 0, "unk-threshold must be >= 0");
  require(jobs >= 1, "jobs must be >= 1");
}

PruneConfig RunConfig::train_prune() const {
  if (k_hard > 0) return PruneConfig::hard(static_cast<std::size_t>(k_hard));
  return PruneConfig::kmin_kmax(static_cast<std::size_t>(k_min_train),
                                static_cast<std::size_t>(k_max), theta);
}

PruneConfig RunConfig::parse_prune() const {
  if (k_hard > 0) return PruneConfig::hard(static_cast<std::size_t>(k_hard));
  return PruneConfig::kmin_kmax(static_cast<std::size_t>(k_min_parse),
                                static_cast<std::size_t>(k_max), theta);
}

InitConfig RunConfig::init() const { return {K, d, alpha, seed, spherical}; }

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = static_cast<std::size_t>(batch_size);
  t.adam.lr = lr;
  t.seed = seed;
  t.jobs = jobs;
  return t;
}

namespace {

double total_nll(const Objective& obj, int jobs) {
  std::vector<double> per(obj.num_examples(), 0.0);
  parallel_for(per.size(), jobs, [&](std::size_t i) {
    try {
      per[i] = obj.nll(i);
    } catch (const NoParseError&) {
    } catch (const CoverageError&) {
    }
  });
  double s = 0.0;
  for (double x : per) s += x;
  return s;
}

}  // namespace

ParserModel train_parser(const std::vector<Tree>& train, const std::vector<Tree>& dev,
                         SymbolTable symbols, const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw InputError("training treebank is empty");
  std::vector<std::vector<std::string>> sentences;
  for (const Tree& t : train) sentences.push_back(tree_words(t, symbols));
  const Vocabulary vocab = build_vocab(sentences, cfg.unk_threshold, cfg.unk_mode);
  const std::vector<Tree> prepared = prepare_treebank(train, vocab, symbols);

  ParserModel out;
  out.grammar = init_gm_lveg(estimate_pcfg(prepared, symbols), cfg.init());
  out.grammar.unknown_mode = cfg.unk_mode;
  Grammar& g = out.grammar;
  std::vector<Example> examples;
  for (const Tree& t : prepared) examples.push_back({yield(t), t});
  ParseObjective obj(g, examples, cfg.train_prune(), cfg.p_min);

  std::vector<std::vector<std::string>> dev_words;
  for (const Tree& t : dev) dev_words.push_back(tree_words(t, symbols));
  std::function<double()> dev_eval;
  if (!dev.empty())
    dev_eval = [&] { return score_brackets(dev, parse_corpus(g, dev_words, cfg).trees).f1; };

  out.initial_nll = total_nll(obj, cfg.jobs);
  out.result = lveg::train(obj, cfg.train_config(), dev_eval, on_epoch);
  out.final_nll = total_nll(obj, cfg.jobs);
  return out;
}

ParsedCorpus parse_corpus(const Grammar& g, const std::vector<std::vector<std::string>>& sentences,
                          const RunConfig& cfg, const std::vector<ConstituentMask>* masks) {
  if (masks && masks->size() != sentences.size())
    throw InputError("k-best masks do not match the sentences");
  const ParseOptions opts{cfg.parse_prune(), cfg.p_min};
  std::vector<ParseOutcome> outcomes(sentences.size());
  parallel_for(sentences.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<int> words;
    for (const auto& w : sentences[i]) {
      try {
        words.push_back(g.map_word(w));
      } catch (const CoverageError&) {
        words.push_back(-1);
      }
    }
    outcomes[i] = parse_sentence(g, words, opts, masks ? &(*masks)[i] : nullptr);
  });
  ParsedCorpus out;
  for (ParseOutcome& o : outcomes) {
    out.viterbi += o.source == ParseSource::viterbi;
    out.fallback += o.source == ParseSource::fallback;
    out.trees.push_back(finalize_tree(o.tree, g.symbols));
  }
  return out;
}

TaggerModel train_tagger(const std::vector<TaggedSentence>& train,
                         const std::vector<TaggedSentence>& dev, SymbolTable symbols,
                         const RunConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw InputError("training corpus is empty");
  std::vector<std::vector<std::string>> sentences;
  for (const TaggedSentence& s : train) {
    sentences.emplace_back();
    for (int w : s.words) sentences.back().push_back(symbols.terminal(w));
  }
  const Vocabulary vocab = build_vocab(sentences, cfg.unk_threshold, cfg.unk_mode);
  const std::vector<TaggedSentence> mapped = apply_vocab(train, vocab, symbols);

  TaggerModel out;
  out.model = estimate_sequence_model(mapped, symbols, cfg.unk_mode);
  init_sequence_model(out.model, cfg.init());
  SequenceModel& m = out.model;
  SequenceObjective obj(m, mapped, cfg.train_prune());

  std::vector<std::vector<std::string>> dev_words;
  std::vector<std::vector<int>> dev_tags;
  for (const TaggedSentence& s : dev) {
    dev_words.emplace_back();
    for (int w : s.words) dev_words.back().push_back(symbols.terminal(w));
    dev_tags.push_back(s.tags);
  }
  std::function<double()> dev_eval;
  if (!dev.empty())
    dev_eval = [&] {
      std::vector<std::vector<int>> pred(dev_words.size());
      parallel_for(dev_words.size(), cfg.jobs, [&](std::size_t i) {
        pred[i] = decode(m, m.map_sentence(dev_words[i]), cfg.parse_prune());
      });
      return 100.0 * accuracy(dev_tags, pred).token;
    };

  out.initial_nll = total_nll(obj, cfg.jobs);
  out.result = lveg::train(obj, cfg.train_config(), dev_eval, on_epoch);
  out.final_nll = total_nll(obj, cfg.jobs);
  return out;
}

std::vector<std::vector<std::string>> tag_corpus(
    const SequenceModel& m, const std::vector<std::vector<std::string>>& sentences,
    const RunConfig& cfg) {
  std::vector<std::vector<std::string>> out(sentences.size());
  parallel_for(sentences.size(), cfg.jobs, [&](std::size_t i) {
    for (int t : decode(m, m.map_sentence(sentences[i]), cfg.parse_prune()))
      out[i].push_back(m.symbols.nonterminal(t));
  });
  return out;
}

}  // namespace lveg
