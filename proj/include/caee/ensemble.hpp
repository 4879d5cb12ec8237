#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caee/adam.hpp"
#include "caee/cae.hpp"
#include "caee/data_io.hpp"

namespace caee {

struct EnsembleConfig {
    std::size_t models = 8;
    std::size_t epochs_per_model = 50;
    double beta = 0.5;
    double lambda = 1.0;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    /// False trains every member from a fresh initialization (no parameter transfer).
    bool transfer = true;
    std::size_t workers = 1;
    AdamOptions adam{};

    void validate() const;
    nlohmann::json to_json() const;
    static EnsembleConfig from_json(const nlohmann::json& j);
};

struct ModelHistory {
    std::vector<double> loss;            // J - lambda K per epoch
    std::vector<double> reconstruction;  // J per epoch
    std::vector<double> diversity;       // K per epoch
    std::vector<std::string> transferred;
};

struct EnsembleState {
    CaeConfig cae;
    EnsembleConfig config;
    ParamSet embedding;
    std::vector<ParamSet> models;
    std::vector<ModelHistory> history;
    /// Rescaling fitted on the training data. Callers apply it before scoring.
    std::optional<ScaleParams> scale;
};

struct ScoreSeries {
    std::vector<double> scores;
    /// M x C stitched per-model errors, when requested.
    std::optional<Tensor> per_model;
};

/// splitmix64-style derivation of independent stream seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct TransferResult {
    ParamSet params;
    std::vector<std::string> copied;
};

/// Each named tensor is copied from `prev` with probability beta, otherwise
/// taken from `fresh`.
TransferResult transfer_params(const ParamSet& prev, const ParamSet& fresh, double beta, std::uint64_t seed);

/// Elementwise mean of model outputs.
Tensor ensemble_average(std::span<const Tensor> outputs);
Tensor ensemble_average(std::span<const ParamSet> models, const Tensor& x, const CaeConfig& config);

/// ||a - b||_2 over all entries.
double diversity_pair(const Tensor& a, const Tensor& b);
/// Mean of diversity_pair over all unordered pairs; needs at least two outputs.
double diversity_ensemble(std::span<const Tensor> outputs);
double diversity_ensemble(std::span<const ParamSet> models, const Tensor& x, const CaeConfig& config);

/// Sum of squared errors over a batch divided by (batch size * w).
double loss_first(std::span<const Tensor> x, std::span<const Tensor> x_hat);
/// J - lambda K with K the squared distance to the frozen ensemble average.
double loss_diverse(std::span<const Tensor> x, std::span<const Tensor> x_hat, std::span<const Tensor> ensemble_avg,
                    double lambda);

/// Graph form of one window's share of the batch loss. `ensemble_avg` is
/// null for the first model. Both `target` and `ensemble_avg` must be constants.
NodeId window_loss(Graph& g, NodeId target, NodeId x_hat, const NodeId* ensemble_avg, double lambda,
                   std::size_t batch_size);

using EpochCallback = std::function<void(std::size_t model, std::size_t epoch, double loss)>;

/// Sequential diversity-driven training. Model 1 trains jointly with the
/// shared embedding; later models start from a beta transfer of their
/// predecessor and see the embedding frozen. Throws DivergenceError on a
/// non-finite loss.
EnsembleState train_ensemble(const LabeledSeries& train, const CaeConfig& cae, const EnsembleConfig& config,
                             const EpochCallback& on_epoch = {});

/// Median with the mean of the two middle values for even counts.
double median(std::vector<double> values);

/// Per-observation errors from per-window errors: window 0 covers positions
/// 0..w-1, window j >= 1 only position j + w - 1.
std::vector<double> stitch_window_errors(const std::vector<std::vector<double>>& per_window);

/// Median-of-models outlier score per observation.
ScoreSeries score_series(const EnsembleState& state, const LabeledSeries& series, bool keep_per_model = false);

/// diversity_ensemble averaged over all windows of `series`.
double series_diversity(const EnsembleState& state, const LabeledSeries& series);

/// Directory with manifest.json, embedding.ckpt, model_<i>.ckpt and losses.csv.
void save_ensemble(const std::filesystem::path& dir, const EnsembleState& state);
EnsembleState load_ensemble(const std::filesystem::path& dir);

}  // namespace caee
