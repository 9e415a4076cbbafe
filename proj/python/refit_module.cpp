#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "refit/analysis.hpp"
#include "refit/behavior.hpp"
#include "refit/corpus.hpp"
#include "refit/error.hpp"
#include "refit/experiment.hpp"
#include "refit/metrics.hpp"
#include "refit/model.hpp"
#include "refit/numerics.hpp"
#include "refit/update.hpp"

namespace py = pybind11;
using namespace refit;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict flip_dict(const FlipMatrix& fm) {
  py::dict d;
  d["both_correct"] = fm.both_correct;
  d["negative_flips"] = fm.negative_flips;
  d["positive_flips"] = fm.positive_flips;
  d["both_wrong"] = fm.both_wrong;
  d["total"] = fm.total;
  d["nfr"] = negative_flip_rate(fm);
  d["pfr"] = positive_flip_rate(fm);
  return d;
}

}  // namespace

PYBIND11_MODULE(_refit, m) {
  m.doc() = "Regression-aware classifier updates";

  py::register_exception<Error>(m, "RefitError", PyExc_RuntimeError);

  py::class_<LabeledExample>(m, "Example")
      .def(py::init<>())
      .def(py::init([](std::string id, std::string a, std::optional<std::string> b, std::string label) {
             return LabeledExample{std::move(id), std::move(a), std::move(b), std::move(label)};
           }),
           py::arg("id"), py::arg("text_a"), py::arg("text_b"), py::arg("label"))
      .def_readwrite("id", &LabeledExample::id)
      .def_readwrite("text_a", &LabeledExample::text_a)
      .def_readwrite("text_b", &LabeledExample::text_b)
      .def_readwrite("label", &LabeledExample::label);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<std::vector<LabeledExample>, std::vector<std::string>>(), py::arg("examples"),
           py::arg("labels"))
      .def_static("load", &load_corpus)
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { save_corpus(p, c); })
      .def("__len__", &Corpus::size)
      .def("__getitem__", [](const Corpus& c, std::size_t i) {
        if (i >= c.size()) throw py::index_error();
        return c[i];
      })
      .def_property_readonly("labels", &Corpus::label_names)
      .def_property_readonly("ids", &Corpus::ids)
      .def_property_readonly("gold", &Corpus::gold_indices)
      .def("slice", &Corpus::slice);

  m.def("gen_synthetic", &gen_synthetic, py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);
  m.def("split", &split, py::arg("corpus"), py::arg("dev_fraction"), py::arg("seed") = 0);

  py::class_<FeaturizerConfig>(m, "FeaturizerConfig")
      .def(py::init<>())
      .def_readwrite("dim", &FeaturizerConfig::dim)
      .def_readwrite("ngram_max", &FeaturizerConfig::ngram_max)
      .def_readwrite("lowercase", &FeaturizerConfig::lowercase);

  py::class_<UpdateConfig>(m, "UpdateConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &UpdateConfig::alpha)
      .def_readwrite("c", &UpdateConfig::c_constant)
      .def_property(
          "proxy", [](const UpdateConfig& c) { return to_string(c.proxy); },
          [](UpdateConfig& c, const std::string& s) { c.proxy = parse_proxy(s); })
      .def_property(
          "policy", [](const UpdateConfig& c) { return to_string(c.policy); },
          [](UpdateConfig& c, const std::string& s) { c.policy = parse_policy(s); })
      .def_property(
          "projection", [](const UpdateConfig& c) { return to_string(c.projection); },
          [](UpdateConfig& c, const std::string& s) { c.projection = parse_projection(s); })
      .def_readwrite("squared_l2", &UpdateConfig::squared_l2)
      .def_readwrite("epochs", &UpdateConfig::epochs)
      .def_readwrite("batch_size", &UpdateConfig::batch_size)
      .def_readwrite("learning_rate", &UpdateConfig::learning_rate)
      .def_readwrite("momentum", &UpdateConfig::momentum)
      .def_readwrite("seed", &UpdateConfig::seed)
      .def_readwrite("hidden", &UpdateConfig::hidden_dims);

  py::class_<PredictionSet>(m, "PredictionSet")
      .def_static("load", &load_predictions)
      .def("save", [](const PredictionSet& s, const std::filesystem::path& p) { save_predictions(p, s); })
      .def("__len__", &PredictionSet::size)
      .def_property_readonly("ids", &PredictionSet::example_ids)
      .def_property_readonly("labels", &PredictionSet::label_names)
      .def_property_readonly("preds", &PredictionSet::preds)
      .def_property_readonly("probs", [](const PredictionSet& s) { return to_array(s.probs()); });

  py::class_<Classifier>(m, "Classifier")
      .def_static("load", [](const std::filesystem::path& p) { return load_model(p); })
      .def("save", [](const Classifier& c, const std::filesystem::path& p) { save_model(c, p); })
      .def_property_readonly("layer_dims", &Classifier::layer_dims)
      .def_property_readonly("labels", &Classifier::label_names)
      .def_property_readonly("parameter_count", &Classifier::parameter_count)
      .def_property_readonly("checksum", [](const Classifier& c) { return hex64(c.checksum()); })
      .def("predict", [](const Classifier& c, const Corpus& corpus) { return predict(c, corpus); });

  m.def(
      "train",
      [](const UpdateConfig& cfg, const Corpus& corpus, std::optional<FeaturizerConfig> featurizer,
         const Classifier* old_model) {
        py::gil_scoped_release release;
        const FeaturizerConfig f = featurizer ? *featurizer
                                   : old_model ? old_model->featurizer()
                                               : FeaturizerConfig{};
        return train(cfg, corpus, f, old_model).model;
      },
      py::arg("config"), py::arg("corpus"), py::arg("featurizer") = py::none(),
      py::arg("old") = nullptr);

  m.def(
      "flip_matrix",
      [](const std::vector<std::size_t>& old_preds, const std::vector<std::size_t>& new_preds,
         const std::vector<std::size_t>& gold) { return flip_dict(flip_matrix(old_preds, new_preds, gold)); },
      py::arg("old_preds"), py::arg("new_preds"), py::arg("gold"));
  m.def(
      "compare",
      [](const PredictionSet& o, const PredictionSet& n, const Corpus& gold) {
        return flip_dict(flip_matrix(o, n, gold.gold_indices()));
      },
      py::arg("old"), py::arg("new"), py::arg("gold"));
  m.def("kl_divergence", [](const std::vector<double>& p, const std::vector<double>& q) {
    return kl_divergence(p, q);
  });

  m.def(
      "top2_pca",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points) {
        const auto r = top2_pca(to_matrix(points));
        return py::make_tuple(to_array(r.coords), py::make_tuple(r.variances[0], r.variances[1]),
                              to_array(r.components));
      },
      "Returns (coords N x 2, (var1, var2), components 2 x D).");

  m.def(
      "centric_from_matrix",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pairwise) {
        const auto sel = centric_from_matrix(to_matrix(pairwise));
        return py::make_tuple(sel.index, sel.avg_nfr);
      },
      "Returns (index, column averages excluding the diagonal).");

  m.def(
      "run_behavior",
      [](const Classifier& old_model, const Classifier& new_model, std::size_t n, std::uint64_t seed) {
        const auto report = run_behavior_suite(Ensemble(old_model), Ensemble(new_model),
                                               default_suite(), n, seed, old_model.featurizer());
        py::list out;
        for (const auto& r : report.records) {
          py::dict d;
          d["test"] = r.name;
          d["capability"] = r.capability;
          d["n_cases"] = r.n_cases;
          d["old_pass_rate"] = r.old_pass_rate;
          d["new_pass_rate"] = r.new_pass_rate;
          d["nfr"] = r.nfr;
          out.append(d);
        }
        return out;
      },
      py::arg("old"), py::arg("new"), py::arg("n_per_test") = 500, py::arg("seed") = 0);

  m.def(
      "run_experiment",
      [](const std::string& plan_json, const std::filesystem::path& output_dir) {
        auto plan = parse_plan(plan_json);
        plan.output_dir = output_dir;
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(plan);
        }
        py::list rows;
        for (const auto& row : r.rows) {
          py::dict d;
          d["name"] = row.name;
          d["acc_mean"] = row.acc_mean;
          d["nfr_mean"] = row.nfr_mean;
          d["nfrs"] = row.nfrs;
          rows.append(d);
        }
        return rows;
      },
      py::arg("plan_json"), py::arg("output_dir"),
      "Runs a JSON plan, writes its reports and returns one dict per summary row.");
}
