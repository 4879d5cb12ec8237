#pragma once

// Independent oracles shared by the unit and acceptance suites. They work on
// plain loops and never call the code under test.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "caee/tensor.hpp"

namespace testing {

inline caee::Tensor random_tensor(const caee::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    caee::Tensor t(shape);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.storage()) v = u(rng);
    return t;
}

/// Direct 1-D cross-correlation. x [w x cin], kernel [cout x cin x k].
inline caee::Tensor conv_oracle(const caee::Tensor& x, const caee::Tensor& kernel, const caee::Tensor& bias,
                                bool causal) {
    const long w = static_cast<long>(x.dim(0)), cin = static_cast<long>(x.dim(1));
    const long cout = static_cast<long>(kernel.dim(0)), k = static_cast<long>(kernel.dim(2));
    const long offset = causal ? k - 1 : (k - 1) / 2;
    caee::Tensor out({x.dim(0), kernel.dim(0)});
    for (long t = 0; t < w; ++t)
        for (long o = 0; o < cout; ++o) {
            double acc = bias[static_cast<std::size_t>(o)];
            for (long i = 0; i < cin; ++i)
                for (long j = 0; j < k; ++j) {
                    const long src = t + j - offset;
                    if (src < 0 || src >= w) continue;
                    acc += kernel(static_cast<std::size_t>(o), static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                           x(static_cast<std::size_t>(src), static_cast<std::size_t>(i));
                }
            out(static_cast<std::size_t>(t), static_cast<std::size_t>(o)) = acc;
        }
    return out;
}

/// Median by sorting, with the mean of the middle pair for even counts.
inline double median_oracle(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// F1 of predicting `score > eps`.
struct PrfOracle {
    double p, r, f1;
};
inline PrfOracle prf_oracle(const std::vector<double>& s, const std::vector<int>& y, double eps) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const bool pred = s[i] > eps;
        if (pred && y[i]) ++tp;
        if (pred && !y[i]) ++fp;
        if (!pred && y[i]) ++fn;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    return {p, r, p + r > 0 ? 2 * p * r / (p + r) : 0.0};
}

/// Best F1 over every subset reachable by a threshold: flag nothing, or flag
/// all scores >= some observed score.
inline PrfOracle best_f1_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    PrfOracle best = prf_oracle(s, y, *std::max_element(s.begin(), s.end()));
    for (double cut : s) {
        // flag every score >= cut
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool pred = s[i] >= cut;
            if (pred && y[i]) ++tp;
            if (pred && !y[i]) ++fp;
            if (!pred && y[i]) ++fn;
        }
        const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        if (f > best.f1 || (f == best.f1 && p > best.p)) best = {p, r, f};
    }
    return best;
}

/// Pair-counting ROC AUC: ties count one half.
inline double roc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                if (s[i] > s[j]) wins += 1;
                else if (s[i] == s[j]) wins += 0.5;
            }
    return wins / pairs;
}

/// Average precision by evaluating every distinct threshold separately.
inline double pr_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    std::vector<double> cuts(s);
    std::sort(cuts.begin(), cuts.end(), std::greater<>());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double positives = 0;
    for (int v : y) positives += v;
    double area = 0, prev_r = 0;
    for (double cut : cuts) {
        double tp = 0, flagged = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= cut) {
                ++flagged;
                tp += y[i];
            }
        const double r = tp / positives;
        area += (r - prev_r) * (tp / flagged);
        prev_r = r;
    }
    return area;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Fresh directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("caee_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
