#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "ttlm/checks.hpp"
#include "ttlm/data.hpp"
#include "ttlm/errors.hpp"
#include "ttlm/model.hpp"
#include "ttlm/trainer.hpp"
#include "ttlm/tt_oracle.hpp"

namespace py = pybind11;
using namespace ttlm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

SequenceEncoding seq(const std::vector<std::size_t>& ids) { return {ids}; }

TokenStream stream(const std::vector<std::size_t>& ids) { return {ids}; }

ModelConfig make_config(const std::string& kind, std::size_t vocab, std::size_t hidden, std::size_t embed,
                        bool tie_weights, std::uint64_t seed, const std::optional<std::string>& activation) {
  ModelConfig c;
  c.kind = CellKind::with_default_activation(parse_cell_tag(kind));
  if (activation) c.kind.activation = parse_activation(*activation);
  c.vocab = vocab;
  c.hidden = hidden;
  c.embed = embed;
  c.tie_weights = tie_weights;
  c.seed = seed;
  return c;
}

Tensor& find_param(ModelParams& params, const std::string& name) {
  Tensor* found = nullptr;
  params.for_each([&](std::string_view n, Tensor& t) {
    if (n == name) found = &t;
  });
  if (!found) throw py::key_error("no parameter named " + name);
  return *found;
}

Tensor predict_after(const LanguageModel& m, const std::vector<std::size_t>& prefix) {
  seq(prefix).validate(m.config().vocab);
  HiddenState h = m.init_hidden();
  for (const auto w : prefix) h = m.advance(h, w);
  return m.predict(h);
}

py::dict report_to_dict(const TrainingReport& r) {
  py::list epochs;
  for (const auto& e : r.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["train_nll"] = e.train_nll;
    d["valid_ppl"] = e.valid_ppl;
    d["lr"] = e.lr;
    d["seconds"] = e.seconds;
    epochs.append(d);
  }
  py::dict out;
  out["epochs"] = epochs;
  out["best_epoch"] = r.best_epoch;
  out["best_valid_ppl"] = r.best_valid_ppl;
  out["test_ppl"] = r.test_ppl;
  out["final_lr"] = r.final_lr;
  return out;
}

}  // namespace

PYBIND11_MODULE(_ttlm, m) {
  m.doc() = "Tensor-train language models and their recurrent equivalents.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<CapExceededError>(m, "CapExceededError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  auto numeric = py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", numeric.ptr());

  m.attr("DEFAULT_ENTRY_CAP") = kDefaultEntryCap;
  m.attr("CELL_KINDS") = [] {
    std::vector<std::string> names;
    for (CellTag t : kAllCellTags) names.emplace_back(to_string(t));
    return names;
  }();

  py::class_<TTCores>(m, "TTCores")
      .def_static("untied", [](const Array& first, const Array& mid, const Array& out) {
        return TTCores::untied(from_numpy(first), from_numpy(mid), from_numpy(out));
      }, py::arg("g_first"), py::arg("g_mid"), py::arg("g_out"))
      .def_static("tied", [](const Array& first, const Array& mid) {
        return TTCores::tied(from_numpy(first), from_numpy(mid));
      }, py::arg("g_first"), py::arg("g_mid"))
      .def_static("collapsed", [](const Array& init, const Array& mid, const Array& out) {
        return TTCores::collapsed(from_numpy(init), from_numpy(mid), from_numpy(out));
      }, py::arg("g_init"), py::arg("g_mid"), py::arg("g_out"))
      .def_property_readonly("g_first", [](const TTCores& c) { return to_numpy(c.g_first()); })
      .def_property_readonly("g_mid", [](const TTCores& c) { return to_numpy(c.g_mid()); })
      .def_property_readonly("g_out", [](const TTCores& c) { return to_numpy(c.g_out()); })
      .def_property_readonly("rank", &TTCores::rank)
      .def_property_readonly("vocab_size", &TTCores::vocab_size)
      .def_property_readonly("tied", &TTCores::is_tied)
      .def_property_readonly("collapsed", &TTCores::is_collapsed)
      .def("expanded", &TTCores::expanded);

  m.def("phi_of_sequence", [](const std::vector<std::size_t>& s, std::size_t vocab, std::size_t cap) {
    return to_numpy(phi_of_sequence(seq(s), vocab, cap));
  }, py::arg("sequence"), py::arg("vocab_size"), py::arg("entry_cap") = kDefaultEntryCap);
  m.def("tt_element", [](const TTCores& c, const std::vector<std::size_t>& s) { return tt_element(c, seq(s)); },
        py::arg("cores"), py::arg("sequence"));
  m.def("materialize_A", [](const TTCores& c, std::size_t n, std::size_t cap) {
    return to_numpy(materialize_A(c, n, cap));
  }, py::arg("cores"), py::arg("length"), py::arg("entry_cap") = kDefaultEntryCap);
  m.def("score_bruteforce", [](const TTCores& c, const std::vector<std::size_t>& s, std::size_t cap) {
    return score_bruteforce(c, seq(s), cap);
  }, py::arg("cores"), py::arg("sequence"), py::arg("entry_cap") = kDefaultEntryCap);
  m.def("score_recursive", [](const TTCores& c, const std::vector<std::size_t>& s) {
    return score_recursive(c, seq(s));
  }, py::arg("cores"), py::arg("sequence"));
  m.def("conditional_bruteforce", [](const TTCores& c, const std::vector<std::size_t>& p, std::size_t cap) {
    return to_numpy(conditional_bruteforce(c, seq(p), cap));
  }, py::arg("cores"), py::arg("prefix"), py::arg("entry_cap") = kDefaultEntryCap);
  m.def("conditional_recursive", [](const TTCores& c, const std::vector<std::size_t>& p) {
    return to_numpy(conditional_recursive(c, seq(p)));
  }, py::arg("cores"), py::arg("prefix"));
  m.def("cores_from_hadamard", [](const Array& w_hx, const Array& w_hh) {
    return to_numpy(cores_from_hadamard(from_numpy(w_hx), from_numpy(w_hh)));
  }, py::arg("w_hx"), py::arg("w_hh"));
  m.def("core_from_secondorder", [](const Array& t3) { return to_numpy(core_from_secondorder(from_numpy(t3))); },
        py::arg("t3"));
  m.def("secondorder_from_core", [](const Array& g) { return to_numpy(secondorder_from_core(from_numpy(g))); },
        py::arg("g_mid"));

  py::class_<LanguageModel>(m, "LanguageModel")
      .def(py::init([](const std::string& kind, std::size_t vocab, std::size_t hidden, std::size_t embed,
                       bool tie_weights, std::uint64_t seed, const std::optional<std::string>& activation) {
             return LanguageModel::create(make_config(kind, vocab, hidden, embed, tie_weights, seed, activation));
           }),
           py::arg("kind"), py::arg("vocab"), py::arg("hidden") = 20, py::arg("embed") = 0,
           py::arg("tie_weights") = true, py::arg("seed") = 1, py::arg("activation") = py::none())
      .def_property_readonly("kind", [](const LanguageModel& lm) { return std::string(to_string(lm.config().kind.tag)); })
      .def_property_readonly("activation",
                             [](const LanguageModel& lm) { return std::string(to_string(lm.config().kind.activation)); })
      .def_property_readonly("vocab", [](const LanguageModel& lm) { return lm.config().vocab; })
      .def_property_readonly("hidden", [](const LanguageModel& lm) { return lm.config().hidden; })
      .def_property_readonly("embed", [](const LanguageModel& lm) { return lm.config().resolved().embed; })
      .def_property_readonly("tie_weights", [](const LanguageModel& lm) { return lm.config().tie_weights; })
      .def_property_readonly("parameter_count", &LanguageModel::parameter_count)
      .def("parameters", [](const LanguageModel& lm) {
        py::dict out;
        lm.params().for_each([&](std::string_view name, const Tensor& t) { out[py::str(std::string(name))] = to_numpy(t); });
        return out;
      })
      .def("set_parameter", [](LanguageModel& lm, const std::string& name, const Array& value) {
        Tensor& t = find_param(lm.params(), name);
        Tensor v = from_numpy(value);
        if (v.shape() != t.shape())
          throw ShapeError(name + " expects shape " + shape_to_string(t.shape()) + ", got " + shape_to_string(v.shape()));
        t = std::move(v);
      }, py::arg("name"), py::arg("value"))
      .def("sequence_nll", [](const LanguageModel& lm, const std::vector<std::size_t>& s) {
        const SequenceNll r = lm.sequence_nll(seq(s));
        return py::make_tuple(r.total, r.per_step);
      }, py::arg("sequence"))
      .def("gradients", [](const LanguageModel& lm, const std::vector<std::size_t>& s) {
        ModelParams grads = lm.params().zeros_like();
        lm.sequence_nll(seq(s), grads);
        py::dict out;
        grads.for_each([&](std::string_view name, const Tensor& t) { out[py::str(std::string(name))] = to_numpy(t); });
        return out;
      }, py::arg("sequence"))
      .def("predict", [](const LanguageModel& lm, const std::vector<std::size_t>& prefix) {
        return to_numpy(predict_after(lm, prefix));
      }, py::arg("prefix"))
      .def("to_tt_cores", &LanguageModel::to_tt_cores)
      .def("save", [](const LanguageModel& lm, const std::filesystem::path& path, const std::string& metadata,
                      const std::vector<std::string>& vocab) { save_checkpoint(path, lm, metadata, vocab); },
           py::arg("path"), py::arg("metadata") = "", py::arg("vocab") = std::vector<std::string>{});

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    Checkpoint c = load_checkpoint(path);
    return py::make_tuple(std::move(c.model), c.metadata, c.vocab_tokens);
  }, py::arg("path"));

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init([](std::vector<std::string> tokens) { return Vocabulary::from_tokens(std::move(tokens)); }),
           py::arg("tokens"))
      .def("__len__", &Vocabulary::size)
      .def("__contains__", [](const Vocabulary& v, const std::string& t) { return v.contains(t); })
      .def("index_of", [](const Vocabulary& v, const std::string& t) { return v.index_of(t); }, py::arg("token"))
      .def("token", &Vocabulary::token, py::arg("index"))
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("save", &Vocabulary::save, py::arg("path"))
      .def_static("load", &Vocabulary::load, py::arg("path"));

  m.def("build_vocab", [](const std::string& text, std::optional<std::size_t> max_size, std::size_t min_count) {
    return build_vocab(text, max_size, min_count);
  }, py::arg("text"), py::arg("max_size") = py::none(), py::arg("min_count") = 1);
  m.def("encode", [](const std::string& text, const Vocabulary& v) { return encode(text, v).ids; },
        py::arg("text"), py::arg("vocab"));
  m.def("decode", [](const std::vector<std::size_t>& ids, const Vocabulary& v) { return decode(stream(ids), v); },
        py::arg("ids"), py::arg("vocab"));
  m.def("unigram_entropy_ppl", [](const std::vector<std::size_t>& ids) { return unigram_entropy_ppl(stream(ids)); },
        py::arg("ids"));
  m.def("zipf_corpus", [](std::size_t n_tokens, std::size_t vocab_size, double exponent, std::uint64_t seed,
                          std::size_t line_length) {
    return ZipfBigramSource({vocab_size, exponent, seed, line_length}).generate(n_tokens);
  }, py::arg("n_tokens"), py::arg("vocab_size") = 50, py::arg("exponent") = 1.1, py::arg("seed") = 7,
        py::arg("line_length") = 20);

  m.def("evaluate_ppl", [](const LanguageModel& lm, const std::vector<std::size_t>& ids, std::size_t batch_size,
                           std::size_t bptt_len) {
    const TokenStream s = stream(ids);
    py::gil_scoped_release release;
    return evaluate_ppl(lm, s, batch_size, bptt_len);
  }, py::arg("model"), py::arg("ids"), py::arg("batch_size") = 10, py::arg("bptt_len") = 35);

  m.def("train", [](LanguageModel& lm, const std::vector<std::size_t>& train, const std::vector<std::size_t>& valid,
                    const std::vector<std::size_t>& test, std::size_t epochs, double lr, double anneal_factor,
                    double clip_norm, std::size_t batch_size, std::size_t bptt_len, std::size_t eval_batch_size,
                    std::optional<std::filesystem::path> checkpoint, std::optional<std::filesystem::path> metrics_log) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.anneal_factor = anneal_factor;
    cfg.clip_norm = clip_norm;
    cfg.batch_size = batch_size;
    cfg.bptt_len = bptt_len;
    cfg.eval_batch_size = eval_batch_size;
    TrainingOutputs outputs;
    outputs.checkpoint = std::move(checkpoint);
    outputs.metrics_log = std::move(metrics_log);
    const TokenStream tr = stream(train), va = stream(valid), te = stream(test);
    TrainingReport report;
    {
      py::gil_scoped_release release;
      report = run_training(lm, tr, va, te, cfg, outputs);
    }
    return report_to_dict(report);
  }, py::arg("model"), py::arg("train"), py::arg("valid"), py::arg("test"), py::arg("epochs") = 50,
        py::arg("lr") = 1.0, py::arg("anneal_factor") = 0.25, py::arg("clip_norm") = 0.25, py::arg("batch_size") = 20,
        py::arg("bptt_len") = 35, py::arg("eval_batch_size") = 10, py::arg("checkpoint") = py::none(),
        py::arg("metrics_log") = py::none());

  m.def("run_checks", [](const std::string& scale, std::size_t entry_cap, std::uint64_t seed) {
    CheckOptions opt;
    if (scale == "large") opt.scale = CheckScale::Large;
    else if (scale != "default") throw ConfigError("scale must be 'default' or 'large', got '" + scale + "'");
    opt.entry_cap = entry_cap;
    opt.seed = seed;
    std::vector<SuiteResult> results;
    {
      py::gil_scoped_release release;
      results = run_checks(opt);
    }
    py::list out;
    for (const auto& r : results) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["max_residual"] = r.max_residual;
      d["tolerance"] = r.tolerance;
      d["cases"] = r.cases;
      d["error"] = r.error;
      out.append(d);
    }
    return out;
  }, py::arg("scale") = "default", py::arg("entry_cap") = kDefaultEntryCap, py::arg("seed") = CheckOptions{}.seed);
}
