#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "caee/tensor.hpp"

namespace caee {

/// A C x D observation matrix in time order, with optional 0/1 outlier labels.
struct LabeledSeries {
    Tensor values;  // C x D
    std::optional<std::vector<int>> labels;
    std::string name;

    std::size_t length() const { return values.rank() == 2 ? values.dim(0) : 0; }
    std::size_t dims() const { return values.rank() == 2 ? values.dim(1) : 0; }

    /// Throws DataError when the invariants do not hold.
    void validate() const;
};

struct ScaleParams {
    std::vector<double> mean;
    std::vector<double> std;

    static ScaleParams identity(std::size_t dims) {
        return {std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0)};
    }
};

/// Windows of length w cut from a series with stride 1.
struct WindowBatch {
    Tensor windows;  // B x w x D
    std::vector<std::size_t> start_indices;

    std::size_t count() const { return windows.dim(0); }
    std::size_t window() const { return windows.dim(1); }
    std::size_t dims() const { return windows.dim(2); }

    /// Window `j` as a w x D tensor.
    Tensor window_at(std::size_t j) const;
};

/// CSV with a header row, one column per dimension and an optional final `label` column.
LabeledSeries load_series(const std::filesystem::path& path);
LabeledSeries parse_series(std::istream& in, const std::string& name);
void write_series(const std::filesystem::path& path, const LabeledSeries& series);

/// Per-dimension mean and population standard deviation. Constant
/// dimensions get std = 1 and a warning on stderr.
ScaleParams zscore_fit(const LabeledSeries& train);
LabeledSeries zscore_apply(const LabeledSeries& series, const ScaleParams& scale);

WindowBatch make_windows(const LabeledSeries& series, std::size_t w);

/// Contiguous split: the first ceil(C * (1 - ratio)) observations train, the
/// rest validate. Labels are dropped from both sides. Each side must keep at
/// least `min_length` observations.
std::pair<LabeledSeries, LabeledSeries> split_train_validation(const LabeledSeries& series, double ratio,
                                                               std::size_t min_length);

struct SynthConfig {
    std::uint64_t seed = 7;
    std::size_t length = 2000;
    std::size_t dims = 3;
    double contamination = 0.01;
    double spike_magnitude = 4.0;
    double noise_std = 0.1;
};

/// Multi-sinusoid series with Gaussian noise and floor(contamination * C)
/// labeled additive spikes.
LabeledSeries synth_generate(const SynthConfig& config);

}  // namespace caee
