// lveg: train, parse, tag, eval and verify from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lveg/error.hpp"
#include "lveg/oracle.hpp"
#include "lveg/pipeline.hpp"

namespace {

using nlohmann::json;
using namespace lveg;

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kVerifyFailed = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw InputError("cannot write '" + path + "'");
}

bool looks_bracketed(std::string_view text) {
  const auto p = text.find_first_not_of(" \t\r\n");
  return p != std::string_view::npos && text[p] == '(';
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<TaggedSentence> read_tagged(const std::string& path, SymbolTable& symbols) {
  const std::string text = read_file(path);
  return ends_with(path, ".conllu") ? read_conllu(text, symbols) : read_two_column(text, symbols);
}

// One sentence per line, whitespace-separated tokens.
std::vector<std::vector<std::string>> read_raw(std::string_view text) {
  std::vector<std::vector<std::string>> out;
  for (std::string_view line : split_lines(text)) {
    auto toks = split_ws(line);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

std::vector<std::vector<std::string>> words_of(const std::vector<TaggedSentence>& data,
                                               const SymbolTable& symbols) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : data) {
    out.emplace_back();
    for (int w : s.words) out.back().push_back(symbols.terminal(w));
  }
  return out;
}

struct Options {
  RunConfig run;
  std::string task = "parse";
  std::string train, dev, test, model, kbest, output, gold, pred;
  std::string unk_mode = "berkeley60";
  int instances = 200;
};

void add_hyper(CLI::App* app, Options& o) {
  app->add_option("--d", o.run.d, "latent dimension");
  app->add_option("--K", o.run.K, "mixture components per rule at initialization");
  app->add_flag("--spherical", o.run.spherical, "spherical covariances");
  app->add_option("--alpha", o.run.alpha, "initial component weight scale (> 1)");
  app->add_option("--seed", o.run.seed);
  app->add_option("--epochs", o.run.epochs);
  app->add_option("--batch-size", o.run.batch_size);
  app->add_option("--lr", o.run.lr, "Adam learning rate");
  app->add_option("--unk-threshold", o.run.unk_threshold, "words seen at most this often are rare");
  app->add_option("--unk-mode", o.unk_mode, "berkeley60 or simple");
}

void add_prune(CLI::App* app, Options& o, int* k_min) {
  app->add_option("--k-min", *k_min);
  app->add_option("--k-max", o.run.k_max);
  app->add_option("--theta", o.run.theta);
  app->add_option("--k-hard", o.run.k_hard, "keep at most this many components (0 = k-min/k-max rule)");
  app->add_option("--p-min", o.run.p_min, "baseline posterior threshold for constituents");
  app->add_option("--jobs", o.run.jobs, "worker threads");
}

// Inserts the keys of a JSON config file in front of the command-line flags
// so that explicit flags, parsed later, take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  std::vector<std::string> out = args;
  std::string path;
  std::size_t at = 0;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(i),
                out.begin() + static_cast<std::ptrdiff_t>(i + 2));
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty() || out.empty()) return out;
  CLI::App* sub = app.get_subcommand_ptr(out.front()).get();
  if (!sub) return out;
  at = 1;
  json cfg;
  try {
    cfg = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    for (char& c : flag)
      if (c == '_') c = '-';
    if (!sub->get_option_no_throw(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_string()) {
      extra.push_back(flag);
      extra.push_back(value.get<std::string>());
    } else if (value.is_number()) {
      extra.push_back(flag);
      extra.push_back(value.dump());
    } else {
      throw ConfigError("config key '" + key + "' must be a scalar");
    }
  }
  out.insert(out.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
  return out;
}

json epoch_json(const EpochMetrics& e, const char* dev_name) {
  json j = {{"epoch", e.epoch},
            {"train_nll", e.train_nll},
            {"sentences", e.sentences},
            {"failed", e.failed},
            {"skipped_updates", e.skipped_updates}};
  if (e.has_dev) {
    j[dev_name] = e.dev_score;
    j["best"] = e.best;
  }
  return j;
}

int cmd_train(Options& o) {
  o.run.unk_mode = parse_unknown_mode(o.unk_mode);
  o.run.validate();
  if (o.train.empty() || o.model.empty()) throw ConfigError("train needs --train and --model");
  const auto t0 = std::chrono::steady_clock::now();
  auto on_epoch = [&](const char* dev_name) {
    return [dev_name](const EpochMetrics& e) {
      std::cout << epoch_json(e, dev_name).dump() << std::endl;
      std::fprintf(stderr, "epoch %d  nll %.4f  failed %zu%s  %.1fs\n", e.epoch, e.train_nll,
                   e.failed, e.has_dev ? (e.best ? "  (best)" : "") : "", e.seconds);
    };
  };
  std::string text;
  double initial = 0.0, final_nll = 0.0;
  int best = 0;
  if (o.task == "parse") {
    SymbolTable symbols;
    const auto train = read_penn(read_file(o.train), symbols);
    const auto dev = o.dev.empty() ? std::vector<Tree>{} : read_penn(read_file(o.dev), symbols);
    ParserModel pm = train_parser(train, dev, symbols, o.run, on_epoch("dev_f1"));
    text = save_grammar_json(pm.grammar);
    initial = pm.initial_nll;
    final_nll = pm.final_nll;
    best = pm.result.best_epoch;
  } else if (o.task == "tag") {
    SymbolTable symbols;
    const auto train = read_tagged(o.train, symbols);
    const auto dev = o.dev.empty() ? std::vector<TaggedSentence>{} : read_tagged(o.dev, symbols);
    TaggerModel tm = train_tagger(train, dev, symbols, o.run, on_epoch("dev_accuracy"));
    text = save_sequence_model_json(tm.model);
    initial = tm.initial_nll;
    final_nll = tm.final_nll;
    best = tm.result.best_epoch;
  } else {
    throw ConfigError("--task must be parse or tag");
  }
  write_file(o.model, text);
  std::cout << json{{"event", "done"}, {"initial_nll", initial}, {"final_nll", final_nll},
                    {"best_epoch", best}}
                   .dump()
            << std::endl;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "trained %s model in %.1fs: nll %.4f -> %.4f, wrote %s\n", o.task.c_str(),
               secs, initial, final_nll, o.model.c_str());
  return 0;
}

// k-best file: blocks of bracketed trees separated by blank lines, one block per sentence.
std::vector<ConstituentMask> read_kbest(const std::string& path, const Grammar& g,
                                        const std::vector<std::vector<std::string>>& sentences) {
  std::vector<std::string> blocks(1);
  for (std::string_view line : split_lines(read_file(path))) {
    if (split_ws(line).empty()) {
      if (!blocks.back().empty()) blocks.emplace_back();
      continue;
    }
    blocks.back() += line;
    blocks.back() += '\n';
  }
  if (blocks.back().empty()) blocks.pop_back();
  if (blocks.size() != sentences.size())
    throw InputError("k-best file has " + std::to_string(blocks.size()) + " blocks for " +
                     std::to_string(sentences.size()) + " sentences");
  std::vector<ConstituentMask> masks;
  SymbolTable symbols = g.symbols;
  const int nt = g.num_nonterminals();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const int n = static_cast<int>(sentences[i].size());
    ConstituentMask m = ConstituentMask::none(n, nt);
    for (const Tree& raw : read_penn(blocks[i], symbols)) {
      if (raw.length() != n) throw InputError("k-best tree " + std::to_string(i + 1) + " has the wrong length");
      Tree t = prepare_tree(raw, symbols);
      if (symbols.nonterminal(t.label) != symbols.nonterminal(g.start()))
        t = Tree::node(g.start(), {t});
      for (const LabeledSpan& c : constituents(t))
        if (c.label < nt) m.set(c.begin, c.end, c.label, true);
    }
    m.set(1, n, g.start(), true);
    masks.push_back(std::move(m));
  }
  return masks;
}

int cmd_parse(Options& o) {
  o.run.validate();
  if (o.model.empty() || o.test.empty()) throw ConfigError("parse needs --model and --test");
  Grammar g = load_grammar_json(read_file(o.model));
  const std::string text = read_file(o.test);
  SymbolTable symbols = g.symbols;
  std::vector<Tree> gold;
  std::vector<std::vector<std::string>> sentences;
  if (looks_bracketed(text)) {
    gold = read_penn(text, symbols);
    for (const Tree& t : gold) sentences.push_back(tree_words(t, symbols));
  } else {
    sentences = read_raw(text);
  }
  std::vector<ConstituentMask> masks;
  if (!o.kbest.empty()) masks = read_kbest(o.kbest, g, sentences);
  const ParsedCorpus pc = parse_corpus(g, sentences, o.run, o.kbest.empty() ? nullptr : &masks);
  std::string out;
  for (std::size_t i = 0; i < pc.trees.size(); ++i) {
    out += to_penn(pc.trees[i], g.symbols, sentences[i]);
    out += '\n';
  }
  if (o.output.empty()) std::cout << out << std::flush;
  else write_file(o.output, out);
  json metrics = {{"sentences", pc.trees.size()}, {"viterbi_fallbacks", pc.viterbi},
                  {"flat_fallbacks", pc.fallback}};
  if (!gold.empty()) {
    // Gold labels were interned after the model's, so ids agree for shared labels.
    const BracketScore s = score_brackets(gold, pc.trees);
    metrics.update({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"exact", s.exact}});
    std::fprintf(stderr, "F1 %.2f  EX %.2f  ", s.f1, s.exact);
  }
  std::cerr << metrics.dump() << '\n';
  std::fprintf(stderr, "parsed %zu sentences (%zu viterbi, %zu flat fallbacks)\n", pc.trees.size(),
               pc.viterbi, pc.fallback);
  return 0;
}

int cmd_tag(Options& o) {
  o.run.validate();
  if (o.model.empty() || o.test.empty()) throw ConfigError("tag needs --model and --test");
  const SequenceModel m = load_sequence_model_json(read_file(o.model));
  const std::string text = read_file(o.test);
  SymbolTable symbols = m.symbols;
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::vector<std::string>> gold;
  if (ends_with(o.test, ".conllu") || text.find('\t') != std::string::npos) {
    const auto data = read_tagged(o.test, symbols);
    sentences = words_of(data, symbols);
    for (const auto& s : data) {
      gold.emplace_back();
      for (int t : s.tags) gold.back().push_back(symbols.nonterminal(t));
    }
  } else {
    sentences = read_raw(text);
  }
  const auto tags = tag_corpus(m, sentences, o.run);
  const std::string out = write_two_column(sentences, tags);
  if (o.output.empty()) std::cout << out << std::flush;
  else write_file(o.output, out);
  json metrics = {{"sentences", sentences.size()}};
  if (!gold.empty()) {
    std::size_t right = 0, tokens = 0, whole = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      std::size_t r = 0;
      for (std::size_t k = 0; k < gold[i].size(); ++k) r += gold[i][k] == tags[i][k];
      right += r;
      tokens += gold[i].size();
      whole += r == gold[i].size();
    }
    const double tok = tokens ? 100.0 * static_cast<double>(right) / static_cast<double>(tokens) : 0.0;
    const double sent = gold.empty() ? 0.0 : 100.0 * static_cast<double>(whole) / static_cast<double>(gold.size());
    metrics.update({{"token_accuracy", tok}, {"sentence_accuracy", sent}});
    std::fprintf(stderr, "token accuracy %.2f  sentence accuracy %.2f\n", tok, sent);
  }
  std::cerr << metrics.dump() << '\n';
  return 0;
}

int cmd_eval(Options& o) {
  if (o.gold.empty() || o.pred.empty()) throw ConfigError("eval needs --gold and --pred");
  SymbolTable symbols;
  json metrics;
  if (o.task == "parse") {
    const auto gold = read_penn(read_file(o.gold), symbols);
    const auto pred = read_penn(read_file(o.pred), symbols);
    const BracketScore s = score_brackets(gold, pred);
    metrics = {{"sentences", s.sentences}, {"precision", s.precision}, {"recall", s.recall},
               {"f1", s.f1}, {"exact", s.exact}};
    std::fprintf(stderr, "P %.2f  R %.2f  F1 %.2f  EX %.2f\n", s.precision, s.recall, s.f1, s.exact);
  } else if (o.task == "tag") {
    const auto gold = read_tagged(o.gold, symbols);
    const auto pred = read_tagged(o.pred, symbols);
    std::vector<std::vector<int>> g, p;
    for (std::size_t i = 0; i < gold.size() && i < pred.size(); ++i)
      if (gold[i].words != pred[i].words)
        throw InputError("sentence " + std::to_string(i + 1) + " has different words");
    for (const auto& s : gold) g.push_back(s.tags);
    for (const auto& s : pred) p.push_back(s.tags);
    const TagAccuracy a = accuracy(g, p);
    metrics = {{"sentences", a.sentences}, {"token_accuracy", 100.0 * a.token},
               {"sentence_accuracy", 100.0 * a.sentence}};
    std::fprintf(stderr, "token accuracy %.2f  sentence accuracy %.2f\n", 100.0 * a.token,
                 100.0 * a.sentence);
  } else {
    throw ConfigError("--task must be parse or tag");
  }
  std::cout << metrics.dump() << std::endl;
  return 0;
}

int cmd_verify(Options& o) {
  if (o.instances < 1) throw ConfigError("instances must be >= 1");
  bool ok = true;
  for (const VerifyCheck& c : run_verify(o.run.seed, o.instances)) {
    ok = ok && c.passed;
    std::cout << json{{"check", c.name}, {"passed", c.passed}, {"instances", c.instances},
                      {"max_error", c.max_error}, {"tolerance", c.tolerance}}
                     .dump()
              << std::endl;
    std::fprintf(stderr, "%s  %-48s max error %.3g (tol %.0e, %zu instances)\n",
                 c.passed ? "PASS" : "FAIL", c.name.c_str(), c.max_error, c.tolerance, c.instances);
  }
  return ok ? 0 : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian mixture latent vector grammars: parsing and tagging", "lveg"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  Options o;

  CLI::App* train = app.add_subcommand("train", "train a parser or tagger");
  train->add_option("--task", o.task, "parse or tag")->check(CLI::IsMember({"parse", "tag"}));
  train->add_option("--train", o.train, "training treebank or tagged corpus")->required();
  train->add_option("--dev", o.dev, "development data for model selection");
  train->add_option("--model", o.model, "output model file")->required();
  add_hyper(train, o);
  add_prune(train, o, &o.run.k_min_train);

  CLI::App* parse = app.add_subcommand("parse", "parse sentences with a trained grammar");
  parse->add_option("--model", o.model)->required();
  parse->add_option("--test", o.test, "bracketed trees or one tokenized sentence per line")->required();
  parse->add_option("--kbest", o.kbest, "k-best trees restricting the constituents");
  parse->add_option("--output", o.output, "write trees here instead of stdout");
  add_prune(parse, o, &o.run.k_min_parse);

  CLI::App* tag = app.add_subcommand("tag", "tag sentences with a trained tagger");
  tag->add_option("--model", o.model)->required();
  tag->add_option("--test", o.test, "tagged corpus or one tokenized sentence per line")->required();
  tag->add_option("--output", o.output, "write tags here instead of stdout");
  add_prune(tag, o, &o.run.k_min_parse);

  CLI::App* eval = app.add_subcommand("eval", "score predictions against gold data");
  eval->add_option("--task", o.task, "parse or tag")->check(CLI::IsMember({"parse", "tag"}));
  eval->add_option("--gold", o.gold)->required();
  eval->add_option("--pred", o.pred)->required();

  CLI::App* verify = app.add_subcommand("verify", "run the oracle property suite");
  verify->add_option("--seed", o.run.seed);
  verify->add_option("--instances", o.instances, "random grammars to check");

  for (CLI::App* sub : {train, parse, tag, eval, verify})
    sub->add_option("--config", "JSON file of flag values; explicit flags win");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(args, app);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }

  try {
    if (*train) return cmd_train(o);
    if (*parse) return cmd_parse(o);
    if (*tag) return cmd_tag(o);
    if (*eval) return cmd_eval(o);
    if (*verify) return cmd_verify(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
