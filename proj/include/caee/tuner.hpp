#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "caee/cae.hpp"
#include "caee/data_io.hpp"
#include "caee/ensemble.hpp"

namespace caee {

struct HyperTriple {
    std::size_t window = 16;
    double beta = 0.5;
    double lambda = 1.0;

    friend bool operator==(const HyperTriple&, const HyperTriple&) = default;
    friend auto operator<=>(const HyperTriple&, const HyperTriple&) = default;
};

struct HyperGrid {
    std::vector<std::size_t> windows{4, 8, 16, 32, 64, 128, 256};
    std::vector<double> betas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<double> lambdas{1, 2, 4, 8, 16, 32, 64};
    std::size_t budget = 9;

    /// Sorted, distinct, nonempty grids and budget <= cardinality.
    void validate() const;
    std::size_t cardinality() const { return windows.size() * betas.size() * lambdas.size(); }
};

enum class TuneStage { random_search, sweep_window, sweep_beta, sweep_lambda };
std::string to_string(TuneStage stage);

struct Trial {
    HyperTriple config;
    double error = 0.0;
    double seconds = 0.0;
    TuneStage stage = TuneStage::random_search;
};

struct TuneResult {
    HyperTriple defaults;
    HyperTriple selected;
    std::vector<Trial> trials;
};

using TrialEvaluator = std::function<double(const HyperTriple&)>;

/// Index of the arg-median: the lower-middle error rank, and among entries
/// sharing that error the one with the smallest key.
template <class Key>
std::size_t arg_median(const std::vector<double>& errors, const std::vector<Key>& keys);

/// Random search over distinct grid triples, then one sweep per hyperparameter
/// with the other two held at the defaults. Each distinct triple is evaluated
/// once; up to `workers` evaluations run concurrently.
TuneResult select_hyperparameters(const HyperGrid& grid, const TrialEvaluator& evaluate, std::uint64_t seed,
                                  std::size_t workers = 1);

/// The `budget` distinct triples the random-search stage evaluates, in order.
std::vector<HyperTriple> sample_triples(const HyperGrid& grid, std::uint64_t seed);

/// Mean per-observation ensemble score on `validation`.
double validation_error(const EnsembleState& state, const LabeledSeries& validation);

/// Trains an ensemble per triple on `train` (labels ignored) with M = 4 and
/// half the epochs of `base`, and scores `validation`.
TrialEvaluator make_ensemble_evaluator(const LabeledSeries& train, const LabeledSeries& validation,
                                       const CaeConfig& cae, const EnsembleConfig& base);

// ---- template definition

template <class Key>
std::size_t arg_median(const std::vector<double>& errors, const std::vector<Key>& keys) {
    if (errors.empty() || errors.size() != keys.size()) throw std::invalid_argument("arg_median: bad input sizes");
    std::vector<double> sorted(errors);
    std::sort(sorted.begin(), sorted.end());
    const double target = sorted[(sorted.size() - 1) / 2];
    std::size_t best = errors.size();
    for (std::size_t i = 0; i < errors.size(); ++i)
        if (errors[i] == target && (best == errors.size() || keys[i] < keys[best])) best = i;
    return best;
}

}  // namespace caee
