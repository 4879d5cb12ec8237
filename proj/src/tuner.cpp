#include "caee/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "caee/errors.hpp"
#include "caee/parallel.hpp"

namespace caee {
namespace {

template <class T>
void check_axis(const std::vector<T>& values, const char* name) {
    if (values.empty()) throw ConfigError(std::string("tuner grid for ") + name + " is empty");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (!(values[i - 1] < values[i]))
            throw ConfigError(std::string("tuner grid for ") + name + " must be strictly increasing");
}

struct Evaluated {
    double error;
    double seconds;
};

// Evaluates each triple not yet in `cache`, concurrently, in a fixed order.
void evaluate_missing(const std::vector<HyperTriple>& triples, const TrialEvaluator& evaluate, std::size_t workers,
                      std::map<HyperTriple, Evaluated>& cache) {
    std::vector<HyperTriple> todo;
    for (const auto& t : triples)
        if (!cache.contains(t) && std::find(todo.begin(), todo.end(), t) == todo.end()) todo.push_back(t);
    std::vector<Evaluated> results(todo.size());
    parallel_for(todo.size(), workers, [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        double error = evaluate(todo[i]);
        const auto stop = std::chrono::steady_clock::now();
        if (!std::isfinite(error))
            throw DivergenceError("validation error is not finite for w=" + std::to_string(todo[i].window) +
                                      " beta=" + std::to_string(todo[i].beta) +
                                      " lambda=" + std::to_string(todo[i].lambda),
                                  0, 0);
        results[i] = {error, std::chrono::duration<double>(stop - start).count()};
    });
    for (std::size_t i = 0; i < todo.size(); ++i) cache.emplace(todo[i], results[i]);
}

template <class T>
T sweep(const std::vector<T>& values, TuneStage stage, const HyperTriple& defaults,
        const std::function<HyperTriple(T)>& make, const TrialEvaluator& evaluate, std::size_t workers,
        std::map<HyperTriple, Evaluated>& cache, std::vector<Trial>& trials) {
    std::vector<HyperTriple> triples;
    for (const T& v : values) triples.push_back(make(v));
    evaluate_missing(triples, evaluate, workers, cache);
    std::vector<double> errors;
    for (const auto& t : triples) {
        const auto& e = cache.at(t);
        errors.push_back(e.error);
        if (!(t == defaults)) trials.push_back({t, e.error, e.seconds, stage});
    }
    return values[arg_median(errors, values)];
}

}  // namespace

void HyperGrid::validate() const {
    check_axis(windows, "w");
    check_axis(betas, "beta");
    check_axis(lambdas, "lambda");
    if (windows.front() < 2) throw ConfigError("tuner window values must be at least 2");
    for (double b : betas)
        if (b < 0.0 || b > 1.0) throw ConfigError("tuner beta values must lie in [0, 1]");
    for (double l : lambdas)
        if (l < 0.0) throw ConfigError("tuner lambda values must be nonnegative");
    if (budget == 0) throw ConfigError("random search budget must be positive");
    if (budget > cardinality())
        throw ConfigError("random search budget " + std::to_string(budget) + " exceeds the " +
                          std::to_string(cardinality()) + " grid triples");
}

std::string to_string(TuneStage stage) {
    switch (stage) {
        case TuneStage::random_search: return "random";
        case TuneStage::sweep_window: return "sweep_w";
        case TuneStage::sweep_beta: return "sweep_beta";
        case TuneStage::sweep_lambda: return "sweep_lambda";
    }
    return "unknown";
}

std::vector<HyperTriple> sample_triples(const HyperGrid& grid, std::uint64_t seed) {
    grid.validate();
    const std::size_t total = grid.cardinality();
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(seed, 0x7475, 0));
    std::vector<HyperTriple> out;
    for (std::size_t i = 0; i < grid.budget; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(idx[i], idx[pick(rng)]);
        std::size_t k = idx[i];
        const std::size_t li = k % grid.lambdas.size();
        k /= grid.lambdas.size();
        const std::size_t bi = k % grid.betas.size();
        k /= grid.betas.size();
        out.push_back({grid.windows[k], grid.betas[bi], grid.lambdas[li]});
    }
    return out;
}

TuneResult select_hyperparameters(const HyperGrid& grid, const TrialEvaluator& evaluate, std::uint64_t seed,
                                  std::size_t workers) {
    const auto triples = sample_triples(grid, seed);
    std::map<HyperTriple, Evaluated> cache;
    evaluate_missing(triples, evaluate, workers, cache);

    TuneResult result;
    std::vector<double> errors;
    for (const auto& t : triples) {
        const auto& e = cache.at(t);
        errors.push_back(e.error);
        result.trials.push_back({t, e.error, e.seconds, TuneStage::random_search});
    }
    result.defaults = triples[arg_median(errors, triples)];
    const HyperTriple d = result.defaults;

    result.selected.window = sweep<std::size_t>(
        grid.windows, TuneStage::sweep_window, d, [&](std::size_t v) { return HyperTriple{v, d.beta, d.lambda}; },
        evaluate, workers, cache, result.trials);
    result.selected.beta = sweep<double>(
        grid.betas, TuneStage::sweep_beta, d, [&](double v) { return HyperTriple{d.window, v, d.lambda}; }, evaluate,
        workers, cache, result.trials);
    result.selected.lambda = sweep<double>(
        grid.lambdas, TuneStage::sweep_lambda, d, [&](double v) { return HyperTriple{d.window, d.beta, v}; }, evaluate,
        workers, cache, result.trials);
    return result;
}

double validation_error(const EnsembleState& state, const LabeledSeries& validation) {
    if (validation.length() < state.cae.window)
        throw DataError(validation.name + ": validation split has " + std::to_string(validation.length()) +
                        " observations, window needs " + std::to_string(state.cae.window));
    const auto scores = score_series(state, validation).scores;
    double total = 0.0;
    for (double s : scores) total += s;
    return total / static_cast<double>(scores.size());
}

TrialEvaluator make_ensemble_evaluator(const LabeledSeries& train, const LabeledSeries& validation,
                                       const CaeConfig& cae, const EnsembleConfig& base) {
    LabeledSeries tr = train, va = validation;
    tr.labels.reset();
    va.labels.reset();
    return [tr = std::move(tr), va = std::move(va), cae, base](const HyperTriple& t) {
        CaeConfig c = cae;
        c.window = t.window;
        EnsembleConfig e = base;
        e.models = 4;
        e.epochs_per_model = std::max<std::size_t>(1, base.epochs_per_model / 2);
        e.beta = t.beta;
        e.lambda = t.lambda;
        const auto state = train_ensemble(tr, c, e);
        return validation_error(state, va);
    };
}

}  // namespace caee
