#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <vector>

#include "caee/config.hpp"

namespace caee {

/// Timestamped progress messages, kept apart from the output directory.
class Log {
public:
    /// Empty path logs to stderr; `quiet` drops everything.
    explicit Log(const std::filesystem::path& path = {}, bool quiet = false);
    void info(const std::string& message);

private:
    std::unique_ptr<std::ofstream> file_;
    std::mutex mutex_;
    bool quiet_;
};

/// Shortest round-trip text for a double.
std::string format_double(double value);

/// Writes series.csv, train.csv and test.csv into `config.out`.
LabeledSeries cmd_synth(const RunConfig& config, Log& log);

/// Writes tune_trials.csv and selected.json into `config.out`.
TuneResult cmd_tune(const RunConfig& config, Log& log);

/// Trains on `config.train` and saves the ensemble directory to `config.out`.
EnsembleState cmd_train(const RunConfig& config, Log& log);

/// Writes scores.csv into `config.out`, one row per test observation.
ScoreSeries cmd_score(const RunConfig& config, Log& log);

struct EvaluateOutput {
    EvalReport best_f1;
    EvalReport top_k;
};

/// Writes report.csv, report.txt, pr_curve.csv, roc_curve.csv and k_sweep.csv.
EvaluateOutput cmd_evaluate(const RunConfig& config, Log& log);

/// Writes diversity.csv with one row per checkpoint.
std::vector<double> cmd_diversity(const RunConfig& config, Log& log);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace caee
