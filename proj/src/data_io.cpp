#include "caee/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "caee/errors.hpp"

namespace caee {

namespace {

std::string trim(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_real(const std::string& text, std::size_t row, const std::string& name) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw DataError(name + ": row " + std::to_string(row) + ": cannot parse '" + text + "' as a finite real");
    }
    return value;
}

}  // namespace

void LabeledSeries::validate() const {
    if (values.rank() != 2 || values.dim(0) < 1 || values.dim(1) < 1) {
        throw DataError(name + ": series needs at least one observation and one dimension");
    }
    if (labels && labels->size() != values.dim(0)) {
        throw DataError(name + ": label count " + std::to_string(labels->size()) + " differs from " +
                        std::to_string(values.dim(0)) + " observations");
    }
    if (!values.all_finite()) throw DataError(name + ": non-finite value in series");
}

Tensor WindowBatch::window_at(std::size_t j) const {
    const std::size_t w = window();
    const std::size_t d = dims();
    auto begin = windows.storage().begin() + static_cast<std::ptrdiff_t>(j * w * d);
    return Tensor({w, d}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(w * d)));
}

LabeledSeries parse_series(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) throw DataError(name + ": empty file");
    auto header = split_csv_line(trim(line));
    bool has_labels = !header.empty() && header.back() == "label";
    const std::size_t value_cols = header.size() - (has_labels ? 1 : 0);
    if (value_cols == 0) throw DataError(name + ": no value columns in header");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(trim(line));
        if (cells.size() != header.size()) {
            throw DataError(name + ": row " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < value_cols; ++c) values.push_back(parse_real(cells[c], line_no, name));
        if (has_labels) {
            const auto& lab = cells.back();
            if (lab != "0" && lab != "1") {
                throw DataError(name + ": row " + std::to_string(line_no) + ": label '" + lab + "' is not 0 or 1");
            }
            labels.push_back(lab == "1" ? 1 : 0);
        }
        ++rows;
    }
    if (rows == 0) throw DataError(name + ": no data rows");

    LabeledSeries series;
    series.values = Tensor({rows, value_cols}, std::move(values));
    if (has_labels) series.labels = std::move(labels);
    series.name = name;
    return series;
}

LabeledSeries load_series(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse_series(in, path.string());
}

void write_series(const std::filesystem::path& path, const LabeledSeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    const std::size_t dims = series.dims();
    for (std::size_t d = 0; d < dims; ++d) out << (d ? "," : "") << "x" << d;
    if (series.labels) out << ",label";
    out << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < series.length(); ++t) {
        for (std::size_t d = 0; d < dims; ++d) out << (d ? "," : "") << series.values(t, d);
        if (series.labels) out << ',' << (*series.labels)[t];
        out << '\n';
    }
}

ScaleParams zscore_fit(const LabeledSeries& train) {
    const std::size_t rows = train.length();
    const std::size_t dims = train.dims();
    if (rows < 2) throw DataError(train.name + ": z-score fit needs at least 2 observations");

    ScaleParams scale{std::vector<double>(dims, 0.0), std::vector<double>(dims, 0.0)};
    for (std::size_t d = 0; d < dims; ++d) {
        double sum = 0.0;
        for (std::size_t t = 0; t < rows; ++t) sum += train.values(t, d);
        const double mean = sum / static_cast<double>(rows);
        double sq = 0.0;
        for (std::size_t t = 0; t < rows; ++t) {
            const double diff = train.values(t, d) - mean;
            sq += diff * diff;
        }
        double sd = std::sqrt(sq / static_cast<double>(rows));
        if (!(sd > 0.0)) {
            std::cerr << "warning: " << train.name << ": dimension " << d << " is constant; using std = 1\n";
            sd = 1.0;
        }
        scale.mean[d] = mean;
        scale.std[d] = sd;
    }
    return scale;
}

LabeledSeries zscore_apply(const LabeledSeries& series, const ScaleParams& scale) {
    const std::size_t dims = series.dims();
    if (scale.mean.size() != dims || scale.std.size() != dims) {
        throw DataError(series.name + ": scale has " + std::to_string(scale.mean.size()) +
                        " dimensions, series has " + std::to_string(dims));
    }
    LabeledSeries out = series;
    for (std::size_t t = 0; t < series.length(); ++t) {
        for (std::size_t d = 0; d < dims; ++d) {
            out.values(t, d) = (series.values(t, d) - scale.mean[d]) / scale.std[d];
        }
    }
    return out;
}

WindowBatch make_windows(const LabeledSeries& series, std::size_t w) {
    const std::size_t rows = series.length();
    const std::size_t dims = series.dims();
    if (w < 2) throw DataError("window size must be at least 2");
    if (rows < w) {
        throw DataError(series.name + ": series of length " + std::to_string(rows) +
                        " is shorter than window " + std::to_string(w));
    }
    const std::size_t count = rows - w + 1;
    WindowBatch batch;
    batch.windows = Tensor({count, w, dims});
    batch.start_indices.resize(count);
    auto src = series.values.data();
    auto dst = batch.windows.data();
    for (std::size_t j = 0; j < count; ++j) {
        batch.start_indices[j] = j;
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(j * dims), w * dims,
                    dst.begin() + static_cast<std::ptrdiff_t>(j * w * dims));
    }
    return batch;
}

std::pair<LabeledSeries, LabeledSeries> split_train_validation(const LabeledSeries& series, double ratio,
                                                               std::size_t min_length) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("validation ratio must lie in (0, 1)");
    const std::size_t rows = series.length();
    const std::size_t dims = series.dims();
    // Round away float noise before the ceiling so that e.g. 100 * 0.7 gives 70.
    const double raw = static_cast<double>(rows) * (1.0 - ratio);
    const auto train_rows = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    const std::size_t valid_rows = rows - train_rows;
    if (train_rows < min_length || valid_rows < min_length) {
        throw DataError(series.name + ": split " + std::to_string(train_rows) + "/" + std::to_string(valid_rows) +
                        " leaves a side shorter than " + std::to_string(min_length));
    }
    auto slice = [&](std::size_t begin, std::size_t count, const std::string& suffix) {
        const auto& buf = series.values.storage();
        auto first = buf.begin() + static_cast<std::ptrdiff_t>(begin * dims);
        LabeledSeries part;
        part.values = Tensor({count, dims}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * dims)));
        part.name = series.name + suffix;
        return part;
    };
    return {slice(0, train_rows, "/train"), slice(train_rows, valid_rows, "/validation")};
}

LabeledSeries synth_generate(const SynthConfig& config) {
    if (!(config.contamination >= 0.0 && config.contamination < 0.5)) {
        throw ConfigError("contamination must lie in [0, 0.5)");
    }
    if (config.length < 1 || config.dims < 1) throw ConfigError("synthetic series needs length and dims >= 1");

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, config.noise_std);

    constexpr int kComponents = 3;
    struct Wave {
        double amplitude, period, phase;
    };
    std::vector<std::vector<Wave>> waves(config.dims);
    for (auto& dim_waves : waves) {
        for (int c = 0; c < kComponents; ++c) {
            dim_waves.push_back({0.3 + 0.7 * unit(rng), 10.0 + 90.0 * unit(rng), 2.0 * M_PI * unit(rng)});
        }
    }

    LabeledSeries series;
    series.name = "synthetic";
    series.values = Tensor({config.length, config.dims});
    for (std::size_t t = 0; t < config.length; ++t) {
        for (std::size_t d = 0; d < config.dims; ++d) {
            double v = 0.0;
            for (const auto& wave : waves[d]) {
                v += wave.amplitude * std::sin(2.0 * M_PI * static_cast<double>(t) / wave.period + wave.phase);
            }
            series.values(t, d) = v + noise(rng);
        }
    }

    const auto outliers = static_cast<std::size_t>(std::floor(config.contamination * static_cast<double>(config.length)));
    std::vector<std::size_t> positions(config.length);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    for (std::size_t i = 0; i < outliers; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, config.length - 1);
        std::swap(positions[i], positions[pick(rng)]);
    }
    std::vector<int> labels(config.length, 0);
    for (std::size_t i = 0; i < outliers; ++i) {
        const std::size_t t = positions[i];
        labels[t] = 1;
        for (std::size_t d = 0; d < config.dims; ++d) {
            const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
            series.values(t, d) += sign * config.spike_magnitude;
        }
    }
    series.labels = std::move(labels);
    return series;
}

}  // namespace caee
