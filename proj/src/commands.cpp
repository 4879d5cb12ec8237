#include "caee/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <boost/algorithm/string.hpp>

#include "caee/errors.hpp"

namespace caee {
namespace {

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    return out;
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

const std::filesystem::path& require_path(const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what);
    return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
}

LabeledSeries maybe_scale(const LabeledSeries& s, const std::optional<ScaleParams>& scale) {
    return scale ? zscore_apply(s, *scale) : s;
}

// The `score` column of a score file, or its only column.
std::vector<double> read_score_column(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    std::vector<std::string> header;
    boost::split(header, line, boost::is_any_of(","));
    for (auto& h : header) boost::trim(h);
    auto it = std::find(header.begin(), header.end(), "score");
    if (it == header.end() && header.size() != 1) throw DataError(path.string() + ": no `score` column");
    const std::size_t col = it == header.end() ? 0 : static_cast<std::size_t>(it - header.begin());

    std::vector<double> scores;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        boost::trim(line);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        boost::split(cells, line, boost::is_any_of(","));
        double v = 0;
        const std::string cell = col < cells.size() ? boost::trim_copy(cells[col]) : std::string();
        const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cells.size() != header.size() || ec != std::errc() || end != cell.data() + cell.size() || !std::isfinite(v))
            throw DataError(path.string() + ": bad score on row " + std::to_string(row));
        scores.push_back(v);
    }
    return scores;
}

EnsembleState load_for_scoring(const std::filesystem::path& dir, std::size_t workers) {
    EnsembleState state = load_ensemble(dir);
    state.config.workers = std::max<std::size_t>(workers, 1);
    return state;
}

// Explicit settings win over the tuned triple, which wins over defaults.
void apply_hyperparameters(const RunConfig& config, CaeConfig& cae, EnsembleConfig& ens, Log& log) {
    if (config.hyperparameters.empty()) return;
    std::ifstream in(config.hyperparameters);
    if (!in) throw DataError("cannot read " + config.hyperparameters.string());
    nlohmann::json j;
    try {
        in >> j;
        const auto& sel = j.at("selected");
        if (!config.explicit_keys.contains("cae.window")) cae.window = sel.at("window").get<std::size_t>();
        if (!config.explicit_keys.contains("ensemble.beta")) ens.beta = sel.at("beta").get<double>();
        if (!config.explicit_keys.contains("ensemble.lambda") && !config.ablation.no_diversity)
            ens.lambda = sel.at("lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(config.hyperparameters.string() + ": " + e.what());
    }
    log.info("hyperparameters from " + config.hyperparameters.string() + ": w=" + std::to_string(cae.window) +
             " beta=" + format_double(ens.beta) + " lambda=" + format_double(ens.lambda));
}

void write_report_row(std::ostream& out, const EvalReport& r) {
    out << to_string(r.rule) << ',' << (r.k_percent ? format_double(*r.k_percent) : "") << ','
        << format_double(r.threshold) << ',' << format_double(r.precision) << ',' << format_double(r.recall) << ','
        << format_double(r.f1) << ',' << format_double(r.pr_auc) << ',' << format_double(r.roc_auc) << ','
        << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn << ',' << r.counts.fn << '\n';
}

void write_report_table(std::ostream& out, const std::vector<EvalReport>& reports) {
    out << std::left << std::setw(16) << "Rule" << std::right;
    for (const char* h : {"Precision", "Recall", "F1", "PR", "ROC"}) out << std::setw(11) << h;
    out << '\n' << std::fixed << std::setprecision(4);
    for (const auto& r : reports) {
        std::string name = to_string(r.rule);
        if (r.k_percent) name += " (K=" + format_double(*r.k_percent) + "%)";
        out << std::left << std::setw(16) << name << std::right << std::setw(11) << r.precision << std::setw(11)
            << r.recall << std::setw(11) << r.f1 << std::setw(11) << r.pr_auc << std::setw(11) << r.roc_auc << '\n';
    }
}

void write_curve(const std::filesystem::path& path, const std::vector<CurvePoint>& points, const char* x,
                 const char* y) {
    auto out = open_output(path);
    out << "threshold," << x << ',' << y << '\n';
    for (const auto& p : points)
        out << format_double(p.threshold) << ',' << format_double(p.x) << ',' << format_double(p.y) << '\n';
}

}  // namespace

Log::Log(const std::filesystem::path& path, bool quiet) : quiet_(quiet) {
    if (!path.empty()) {
        file_ = std::make_unique<std::ofstream>(path, std::ios::app);
        if (!*file_) throw ConfigError("cannot open log file " + path.string());
    }
}

void Log::info(const std::string& message) {
    if (quiet_) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::lock_guard lock(mutex_);
    std::ostream& out = file_ ? *file_ : std::clog;
    out << std::put_time(&tm, "%Y-%m-%d %H:%M:%S") << " caee: " << message << std::endl;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

LabeledSeries cmd_synth(const RunConfig& config, Log& log) {
    if (!(config.synth_train_fraction > 0.0 && config.synth_train_fraction < 1.0))
        throw ConfigError("synth.train_fraction must lie in (0, 1)");
    LabeledSeries series = synth_generate(config.synth);
    ensure_dir(config.out);
    write_series(config.out / "series.csv", series);

    const std::size_t c = series.length(), d = series.dims();
    const auto cut = static_cast<std::size_t>(std::floor(config.synth_train_fraction * static_cast<double>(c)));
    auto slice = [&](std::size_t from, std::size_t to, const std::string& name) {
        LabeledSeries part;
        part.name = name;
        part.values = Tensor({to - from, d});
        for (std::size_t t = from; t < to; ++t)
            for (std::size_t j = 0; j < d; ++j) part.values(t - from, j) = series.values(t, j);
        part.labels = std::vector<int>(series.labels->begin() + static_cast<std::ptrdiff_t>(from),
                                       series.labels->begin() + static_cast<std::ptrdiff_t>(to));
        return part;
    };
    write_series(config.out / "train.csv", slice(0, cut, "train"));
    write_series(config.out / "test.csv", slice(cut, c, "test"));
    std::size_t outliers = 0;
    for (int l : *series.labels) outliers += static_cast<std::size_t>(l);
    log.info("synthesized " + std::to_string(c) + " observations (" + std::to_string(outliers) + " outliers), split at " +
             std::to_string(cut));
    return series;
}

TuneResult cmd_tune(const RunConfig& config, Log& log) {
    config.grid.validate();
    if (!(config.validation_ratio > 0.0 && config.validation_ratio < 1.0))
        throw ConfigError("tuner.validation_ratio must lie in (0, 1)");
    const LabeledSeries series = load_series(require_path(config.train, "training data (--train)"));
    const std::size_t largest_w = config.grid.windows.back();
    auto [train, validation] = split_train_validation(series, config.validation_ratio, largest_w);
    if (!config.ablation.no_rescaling) {
        const ScaleParams scale = zscore_fit(train);
        train = zscore_apply(train, scale);
        validation = zscore_apply(validation, scale);
    }

    CaeConfig cae = config.effective_cae();
    cae.input_dim = series.dims();
    EnsembleConfig base = config.effective_ensemble();
    const std::size_t workers = std::max<std::size_t>(config.ensemble.workers, 1);
    if (workers > 1) base.workers = 1;  // parallelism goes to concurrent trials

    auto inner = make_ensemble_evaluator(train, validation, cae, base);
    TrialEvaluator evaluate = [&](const HyperTriple& t) {
        const auto start = std::chrono::steady_clock::now();
        const double error = inner(t);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.info("trial w=" + std::to_string(t.window) + " beta=" + format_double(t.beta) +
                 " lambda=" + format_double(t.lambda) + " error=" + format_double(error) +
                 " seconds=" + format_double(secs));
        return error;
    };
    log.info("tuning on " + std::to_string(train.length()) + " train / " + std::to_string(validation.length()) +
             " validation observations, budget " + std::to_string(config.grid.budget));
    TuneResult result = select_hyperparameters(config.grid, evaluate, config.ensemble.seed, workers);

    ensure_dir(config.out);
    {
        auto out = open_output(config.out / "tune_trials.csv");
        out << "stage,w,beta,lambda,validation_error\n";
        for (const auto& t : result.trials)
            out << to_string(t.stage) << ',' << t.config.window << ',' << format_double(t.config.beta) << ','
                << format_double(t.config.lambda) << ',' << format_double(t.error) << '\n';
        out << "selected," << result.selected.window << ',' << format_double(result.selected.beta) << ','
            << format_double(result.selected.lambda) << ",\n";
    }
    auto triple = [](const HyperTriple& t) {
        return nlohmann::json{{"window", t.window}, {"beta", t.beta}, {"lambda", t.lambda}};
    };
    write_json(config.out / "selected.json",
               {{"defaults", triple(result.defaults)}, {"selected", triple(result.selected)}, {"seed", config.ensemble.seed}});
    log.info("selected w=" + std::to_string(result.selected.window) + " beta=" + format_double(result.selected.beta) +
             " lambda=" + format_double(result.selected.lambda));
    return result;
}

EnsembleState cmd_train(const RunConfig& config, Log& log) {
    LabeledSeries train = load_series(require_path(config.train, "training data (--train)"));
    train.labels.reset();
    CaeConfig cae = config.effective_cae();
    EnsembleConfig ens = config.effective_ensemble();
    apply_hyperparameters(config, cae, ens, log);
    cae.input_dim = train.dims();

    std::optional<ScaleParams> scale;
    if (!config.ablation.no_rescaling) {
        scale = zscore_fit(train);
        train = zscore_apply(train, *scale);
    }
    log.info("training " + std::to_string(ens.models) + " models x " + std::to_string(ens.epochs_per_model) +
             " epochs, w=" + std::to_string(cae.window) + " beta=" + format_double(ens.beta) +
             " lambda=" + format_double(ens.lambda) + (ens.transfer ? "" : " (no transfer)") +
             (cae.attention ? "" : " (no attention)"));
    EnsembleState state = train_ensemble(train, cae, ens, [&](std::size_t m, std::size_t e, double loss) {
        log.info("model " + std::to_string(m) + " epoch " + std::to_string(e) + " loss " + format_double(loss));
    });
    state.scale = scale;
    save_ensemble(config.out, state);
    write_json(config.out / "run_config.json", config.to_json());
    log.info("saved ensemble to " + config.out.string());
    return state;
}

ScoreSeries cmd_score(const RunConfig& config, Log& log) {
    const LabeledSeries test = load_series(require_path(config.test, "test data (--test)"));
    ScoreSeries result;
    if (config.mas_window > 0) {
        result.scores = mas_scores(test, config.mas_window);
        log.info("moving-average baseline, window " + std::to_string(config.mas_window));
    } else {
        if (config.checkpoints.size() != 1) throw ConfigError("score needs exactly one checkpoint (--checkpoint)");
        const EnsembleState state = load_for_scoring(config.checkpoints.front(), config.ensemble.workers);
        if (config.explicit_keys.contains("cae.window") && config.cae.window != state.cae.window)
            throw ConfigError("requested window " + std::to_string(config.cae.window) + " but the checkpoint uses " +
                              std::to_string(state.cae.window));
        result = score_series(state, maybe_scale(test, state.scale), config.per_model);
        log.info("scored " + std::to_string(test.length()) + " observations with " +
                 std::to_string(state.models.size()) + " models");
    }
    ensure_dir(config.out);
    auto out = open_output(config.out / "scores.csv");
    out << "index,score";
    const std::size_t m = result.per_model ? result.per_model->dim(0) : 0;
    for (std::size_t i = 0; i < m; ++i) out << ",score_model_" << (i + 1);
    out << '\n';
    for (std::size_t t = 0; t < result.scores.size(); ++t) {
        out << t << ',' << format_double(result.scores[t]);
        for (std::size_t i = 0; i < m; ++i) out << ',' << format_double((*result.per_model)(i, t));
        out << '\n';
    }
    return result;
}

EvaluateOutput cmd_evaluate(const RunConfig& config, Log& log) {
    const LabeledSeries test = load_series(require_path(config.test, "labeled test data (--test)"));
    if (!test.labels) throw DataError(config.test.string() + ": evaluation needs a label column");
    const std::vector<double> scores = read_score_column(require_path(config.scores, "scores (--scores)"));
    if (scores.size() != test.length())
        throw DataError(config.scores.string() + " has " + std::to_string(scores.size()) + " rows but " +
                        config.test.string() + " has " + std::to_string(test.length()));
    const std::vector<int>& labels = *test.labels;
    const auto positives = std::count(labels.begin(), labels.end(), 1);
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size()))
        throw DataError(config.test.string() + ": evaluation needs both outlier and inlier labels");

    EvaluateOutput out;
    out.best_f1 = evaluate_scores(scores, labels, ThresholdRule::best_f1);
    out.top_k = evaluate_scores(scores, labels, ThresholdRule::top_k, config.k_percent);

    ensure_dir(config.out);
    const EvalReport& primary = config.threshold_rule == ThresholdRule::best_f1 ? out.best_f1 : out.top_k;
    const EvalReport& secondary = config.threshold_rule == ThresholdRule::best_f1 ? out.top_k : out.best_f1;
    {
        auto f = open_output(config.out / "report.csv");
        f << "rule,k_percent,threshold,precision,recall,f1,pr_auc,roc_auc,tp,fp,tn,fn\n";
        write_report_row(f, primary);
        write_report_row(f, secondary);
    }
    {
        auto f = open_output(config.out / "report.txt");
        write_report_table(f, {primary, secondary});
    }
    write_curve(config.out / "pr_curve.csv", pr_curve(scores, labels), "recall", "precision");
    write_curve(config.out / "roc_curve.csv", roc_curve(scores, labels), "fpr", "tpr");
    {
        auto f = open_output(config.out / "k_sweep.csv");
        f << "k_percent,threshold,precision,recall,f1\n";
        for (std::size_t k = 1; k <= config.k_sweep_max; ++k) {
            const double eps = topk_threshold(scores, static_cast<double>(k));
            const Prf p = prf_at(scores, labels, eps);
            f << k << ',' << format_double(eps) << ',' << format_double(p.precision) << ',' << format_double(p.recall)
              << ',' << format_double(p.f1) << '\n';
        }
    }
    write_report_table(std::cout, {primary, secondary});
    log.info("evaluation written to " + config.out.string());
    return out;
}

std::vector<double> cmd_diversity(const RunConfig& config, Log& log) {
    if (config.checkpoints.empty() || config.checkpoints.size() > 2)
        throw ConfigError("diversity takes one or two checkpoints");
    const LabeledSeries test = load_series(require_path(config.test, "test data (--test)"));
    std::vector<EnsembleState> states;
    for (const auto& dir : config.checkpoints) states.push_back(load_for_scoring(dir, config.ensemble.workers));
    if (states.size() == 2 && (states[0].cae.window != states[1].cae.window ||
                               states[0].cae.input_dim != states[1].cae.input_dim))
        throw ConfigError("checkpoints differ in window or input dimension and cannot be compared");

    std::vector<double> values;
    ensure_dir(config.out);
    auto out = open_output(config.out / "diversity.csv");
    out << "checkpoint,models,lambda,transfer,diversity\n";
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto& s = states[i];
        const double div = series_diversity(s, maybe_scale(test, s.scale));
        values.push_back(div);
        out << config.checkpoints[i].string() << ',' << s.models.size() << ',' << format_double(s.config.lambda) << ','
            << (s.config.transfer ? "true" : "false") << ',' << format_double(div) << '\n';
        log.info(config.checkpoints[i].string() + ": diversity " + format_double(div));
    }
    return values;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const DivergenceError*>(&e)) return 4;
    return 1;
}

}  // namespace caee
