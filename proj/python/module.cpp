#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "caee/commands.hpp"
#include "caee/errors.hpp"

namespace py = pybind11;
using namespace caee;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

LabeledSeries to_series(const Array& values) {
    if (values.ndim() != 2) throw DataError("values must be a 2-D array of shape (observations, dimensions)");
    const auto c = static_cast<std::size_t>(values.shape(0)), d = static_cast<std::size_t>(values.shape(1));
    LabeledSeries s;
    s.values = Tensor({c, d}, std::vector<double>(values.data(), values.data() + c * d));
    s.validate();
    return s;
}

Array to_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

Array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<int> to_labels(const LabelArray& labels) {
    if (labels.ndim() != 1) throw DataError("labels must be a 1-D array");
    return {labels.data(), labels.data() + labels.size()};
}

std::vector<double> to_vector(const Array& scores) {
    if (scores.ndim() != 1) throw DataError("scores must be a 1-D array");
    return {scores.data(), scores.data() + scores.size()};
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    d["pr_auc"] = r.pr_auc;
    d["roc_auc"] = r.roc_auc;
    d["threshold"] = r.threshold;
    d["rule"] = to_string(r.rule);
    d["k_percent"] = r.k_percent ? py::object(py::float_(*r.k_percent)) : py::object(py::none());
    d["tp"] = r.counts.tp;
    d["fp"] = r.counts.fp;
    d["tn"] = r.counts.tn;
    d["fn"] = r.counts.fn;
    return d;
}

// RunConfig from "section.key" -> value pairs; values are passed through str().
RunConfig config_from(const py::dict& settings) {
    RunConfig c;
    for (const auto& [key, value] : settings)
        apply_assignment(c, py::str(key).cast<std::string>() + "=" + py::str(value).cast<std::string>());
    return c;
}

LabeledSeries scaled(const EnsembleState& state, const LabeledSeries& s) {
    return state.scale ? zscore_apply(s, *state.scale) : s;
}

}  // namespace

PYBIND11_MODULE(_caee, m) {
    m.doc() = "Convolutional autoencoder ensembles for time series outlier detection";

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<DataError> data_error(m, "DataError", PyExc_ValueError);
    static py::exception<DivergenceError> divergence_error(m, "DivergenceError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const DataError& e) {
            py::set_error(data_error, e.what());
        } catch (const DivergenceError& e) {
            py::set_error(divergence_error, e.what());
        }
    });

    m.def(
        "synth_generate",
        [](std::uint64_t seed, std::size_t length, std::size_t dims, double contamination, double spike_magnitude,
           double noise_std) {
            SynthConfig c{seed, length, dims, contamination, spike_magnitude, noise_std};
            auto s = synth_generate(c);
            LabelArray labels(static_cast<py::ssize_t>(s.labels->size()));
            std::copy(s.labels->begin(), s.labels->end(), labels.mutable_data());
            return py::make_tuple(to_array(s.values), labels);
        },
        py::arg("seed") = 7, py::arg("length") = 2000, py::arg("dims") = 3, py::arg("contamination") = 0.01,
        py::arg("spike_magnitude") = 4.0, py::arg("noise_std") = 0.1,
        "Labeled multi-sinusoid series with additive spikes, as (values, labels).");

    py::class_<EnsembleState>(m, "Ensemble")
        .def_property_readonly("window", [](const EnsembleState& s) { return s.cae.window; })
        .def_property_readonly("input_dim", [](const EnsembleState& s) { return s.cae.input_dim; })
        .def_property_readonly("models", [](const EnsembleState& s) { return s.models.size(); })
        .def_property_readonly("rescaled", [](const EnsembleState& s) { return s.scale.has_value(); })
        .def_property_readonly("config",
                               [](const EnsembleState& s) {
                                   py::dict d;
                                   d["cae"] = py::module_::import("json").attr("loads")(s.cae.to_json().dump());
                                   d["ensemble"] =
                                       py::module_::import("json").attr("loads")(s.config.to_json().dump());
                                   return d;
                               })
        .def_property_readonly("losses",
                               [](const EnsembleState& s) {
                                   std::vector<std::vector<double>> out;
                                   for (const auto& h : s.history) out.push_back(h.loss);
                                   return out;
                               })
        .def(
            "score",
            [](const EnsembleState& s, const Array& values, bool per_model) {
                auto r = score_series(s, scaled(s, to_series(values)), per_model);
                if (!per_model) return py::object(to_array(r.scores));
                return py::object(py::make_tuple(to_array(r.scores), to_array(*r.per_model)));
            },
            py::arg("values"), py::arg("per_model") = false,
            "Median-of-models outlier score per observation.")
        .def(
            "diversity",
            [](const EnsembleState& s, const Array& values) { return series_diversity(s, scaled(s, to_series(values))); },
            py::arg("values"), "Mean pairwise output distance over all windows.")
        .def(
            "save", [](const EnsembleState& s, const std::filesystem::path& dir) { save_ensemble(dir, s); },
            py::arg("path"))
        .def_static("load", &load_ensemble, py::arg("path"));

    m.def(
        "train",
        [](const Array& values, const py::dict& settings) {
            RunConfig c = config_from(settings);
            LabeledSeries train = to_series(values);
            CaeConfig cae = c.effective_cae();
            EnsembleConfig ens = c.effective_ensemble();
            cae.input_dim = train.dims();
            std::optional<ScaleParams> scale;
            if (!c.ablation.no_rescaling) {
                scale = zscore_fit(train);
                train = zscore_apply(train, *scale);
            }
            EnsembleState state;
            {
                py::gil_scoped_release release;
                state = train_ensemble(train, cae, ens);
            }
            state.scale = scale;
            return state;
        },
        py::arg("values"), py::arg("settings") = py::dict(),
        "Train an ensemble. `settings` maps 'section.key' names (as in INI files) to values.");

    m.def(
        "evaluate",
        [](const Array& scores, const LabelArray& labels, const std::string& rule, std::optional<double> k_percent) {
            const ThresholdRule r = parse_threshold_rule(rule);
            return report_dict(evaluate_scores(to_vector(scores), to_labels(labels), r,
                                               r == ThresholdRule::top_k && !k_percent ? 1.0 : k_percent));
        },
        py::arg("scores"), py::arg("labels"), py::arg("rule") = "best-f1", py::arg("k_percent") = py::none(),
        "Precision, recall, F1, PR-AUC and ROC-AUC under a threshold rule.");
    m.def(
        "roc_auc", [](const Array& s, const LabelArray& y) { return roc_auc(to_vector(s), to_labels(y)); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "pr_auc", [](const Array& s, const LabelArray& y) { return pr_auc(to_vector(s), to_labels(y)); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "topk_threshold", [](const Array& s, double k) { return topk_threshold(to_vector(s), k); }, py::arg("scores"),
        py::arg("k_percent"));
    m.def(
        "mas_scores", [](const Array& values, std::size_t window) { return to_array(mas_scores(to_series(values), window)); },
        py::arg("values"), py::arg("window"), "Moving-average smoothing baseline scores.");

    m.def(
        "run",
        [](const std::string& command, const py::dict& settings, bool quiet) {
            RunConfig c = config_from(settings);
            Log log(c.log, quiet);
            py::gil_scoped_release release;
            if (command == "synth") cmd_synth(c, log);
            else if (command == "tune") cmd_tune(c, log);
            else if (command == "train") cmd_train(c, log);
            else if (command == "score") cmd_score(c, log);
            else if (command == "evaluate") cmd_evaluate(c, log);
            else if (command == "diversity") cmd_diversity(c, log);
            else throw ConfigError("unknown command: " + command);
        },
        py::arg("command"), py::arg("settings") = py::dict(), py::arg("quiet") = true,
        "Run a command-line subcommand with 'section.key' settings; files go to output.dir.");
}
