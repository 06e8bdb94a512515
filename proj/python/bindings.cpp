#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lveg/error.hpp"
#include "lveg/oracle.hpp"
#include "lveg/pipeline.hpp"

namespace py = pybind11;
using namespace lveg;

namespace {

py::dict epoch_dict(const EpochMetrics& e) {
  py::dict d;
  d["epoch"] = e.epoch;
  d["train_nll"] = e.train_nll;
  d["sentences"] = e.sentences;
  d["failed"] = e.failed;
  d["skipped_updates"] = e.skipped_updates;
  if (e.has_dev) {
    d["dev_score"] = e.dev_score;
    d["best"] = e.best;
  }
  d["seconds"] = e.seconds;
  return d;
}

// Calls back into Python with the GIL held; training itself runs without it.
EpochCallback wrap(const py::object& on_epoch, py::list& log) {
  return [on_epoch, &log](const EpochMetrics& e) {
    py::gil_scoped_acquire gil;
    py::dict d = epoch_dict(e);
    log.append(d);
    if (!on_epoch.is_none()) on_epoch(d);
  };
}

py::dict train_result(std::string model, double initial, double final_nll, int best, py::list log) {
  py::dict d;
  d["model"] = std::move(model);
  d["initial_nll"] = initial;
  d["final_nll"] = final_nll;
  d["best_epoch"] = best;
  d["epochs"] = log;
  return d;
}

py::dict py_train_parser(const std::string& treebank, const std::string& dev, RunConfig cfg,
                         const py::object& on_epoch) {
  cfg.validate();
  SymbolTable symbols;
  const auto train = read_penn(treebank, symbols);
  const auto dev_trees = read_penn(dev, symbols);
  py::list log;
  ParserModel pm;
  {
    py::gil_scoped_release nogil;
    pm = train_parser(train, dev_trees, symbols, cfg, wrap(on_epoch, log));
  }
  return train_result(save_grammar_json(pm.grammar), pm.initial_nll, pm.final_nll,
                      pm.result.best_epoch, log);
}

std::vector<std::string> py_parse(const std::string& model,
                                  const std::vector<std::vector<std::string>>& sentences,
                                  RunConfig cfg) {
  cfg.validate();
  const Grammar g = load_grammar_json(model);
  ParsedCorpus pc;
  {
    py::gil_scoped_release nogil;
    pc = parse_corpus(g, sentences, cfg);
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pc.trees.size(); ++i)
    out.push_back(to_penn(pc.trees[i], g.symbols, sentences[i]));
  return out;
}

py::dict py_train_tagger(const std::string& corpus, const std::string& dev, RunConfig cfg,
                         const py::object& on_epoch) {
  cfg.validate();
  SymbolTable symbols;
  const auto train = read_two_column(corpus, symbols);
  const auto dev_data = read_two_column(dev, symbols);
  py::list log;
  TaggerModel tm;
  {
    py::gil_scoped_release nogil;
    tm = train_tagger(train, dev_data, symbols, cfg, wrap(on_epoch, log));
  }
  return train_result(save_sequence_model_json(tm.model), tm.initial_nll, tm.final_nll,
                      tm.result.best_epoch, log);
}

std::vector<std::vector<std::string>> py_tag(const std::string& model,
                                             const std::vector<std::vector<std::string>>& sentences,
                                             RunConfig cfg) {
  cfg.validate();
  const SequenceModel m = load_sequence_model_json(model);
  py::gil_scoped_release nogil;
  return tag_corpus(m, sentences, cfg);
}

py::dict py_score_parses(const std::string& gold, const std::string& predicted) {
  SymbolTable symbols;
  const BracketScore s = score_brackets(read_penn(gold, symbols), read_penn(predicted, symbols));
  py::dict d;
  d["sentences"] = s.sentences;
  d["precision"] = s.precision;
  d["recall"] = s.recall;
  d["f1"] = s.f1;
  d["exact"] = s.exact;
  return d;
}

py::dict py_score_tags(const std::vector<std::vector<std::string>>& gold,
                       const std::vector<std::vector<std::string>>& predicted) {
  SymbolTable symbols;
  auto ids = [&](const std::vector<std::vector<std::string>>& tags) {
    std::vector<std::vector<int>> out;
    for (const auto& s : tags) {
      out.emplace_back();
      for (const auto& t : s) out.back().push_back(symbols.nonterminals.intern(t));
    }
    return out;
  };
  const TagAccuracy a = accuracy(ids(gold), ids(predicted));
  py::dict d;
  d["sentences"] = a.sentences;
  d["tokens"] = a.tokens;
  d["token_accuracy"] = 100.0 * a.token;
  d["sentence_accuracy"] = 100.0 * a.sentence;
  return d;
}

py::list py_verify(std::uint64_t seed, int instances) {
  if (instances < 1) throw ConfigError("instances must be >= 1");
  std::vector<VerifyCheck> checks;
  {
    py::gil_scoped_release nogil;
    checks = run_verify(seed, instances);
  }
  py::list out;
  for (const auto& c : checks) {
    py::dict d;
    d["check"] = c.name;
    d["passed"] = c.passed;
    d["instances"] = c.instances;
    d["max_error"] = c.max_error;
    d["tolerance"] = c.tolerance;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gaussian mixture latent vector grammars";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  auto input = py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", input.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<CoverageError>(m, "CoverageError", base.ptr());
  py::register_exception<NoParseError>(m, "NoParseError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("d", &RunConfig::d)
      .def_readwrite("K", &RunConfig::K)
      .def_readwrite("spherical", &RunConfig::spherical)
      .def_readwrite("alpha", &RunConfig::alpha)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("k_min_train", &RunConfig::k_min_train)
      .def_readwrite("k_min_parse", &RunConfig::k_min_parse)
      .def_readwrite("k_max", &RunConfig::k_max)
      .def_readwrite("theta", &RunConfig::theta)
      .def_readwrite("k_hard", &RunConfig::k_hard)
      .def_readwrite("p_min", &RunConfig::p_min)
      .def_readwrite("unk_threshold", &RunConfig::unk_threshold)
      .def_property(
          "unk_mode", [](const RunConfig& c) { return std::string(to_string(c.unk_mode)); },
          [](RunConfig& c, const std::string& s) { c.unk_mode = parse_unknown_mode(s); })
      .def_readwrite("jobs", &RunConfig::jobs)
      .def("validate", &RunConfig::validate);

  m.def("train_parser", &py_train_parser, py::arg("treebank"), py::arg("dev") = "",
        py::arg("config") = RunConfig{}, py::arg("on_epoch") = py::none(),
        "Train on bracketed trees; returns the model JSON and training metrics.");
  m.def("parse", &py_parse, py::arg("model"), py::arg("sentences"), py::arg("config") = RunConfig{},
        "Parse tokenized sentences; returns bracketed trees.");
  m.def("train_tagger", &py_train_tagger, py::arg("corpus"), py::arg("dev") = "",
        py::arg("config") = RunConfig{}, py::arg("on_epoch") = py::none(),
        "Train on a two-column word/tag corpus.");
  m.def("tag", &py_tag, py::arg("model"), py::arg("sentences"), py::arg("config") = RunConfig{});
  m.def("score_parses", &py_score_parses, py::arg("gold"), py::arg("predicted"));
  m.def("score_tags", &py_score_tags, py::arg("gold"), py::arg("predicted"));
  m.def("verify", &py_verify, py::arg("seed") = 1, py::arg("instances") = 200);
  m.def(
      "allowed_components",
      [](std::size_t kc, std::size_t k_min, std::size_t k_max, double theta) {
        return allowed_components(kc, PruneConfig::kmin_kmax(k_min, k_max, theta));
      },
      py::arg("kc"), py::arg("k_min"), py::arg("k_max"), py::arg("theta"));
  m.def(
      "unknown_signature",
      [](const std::string& word, const std::string& mode) {
        return unknown_signature(word, parse_unknown_mode(mode));
      },
      py::arg("word"), py::arg("mode") = "berkeley");
}
