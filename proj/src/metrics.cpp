#include "caee/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "caee/errors.hpp"

namespace caee {
namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                                    std::to_string(labels.size()) + ")");
    for (int l : labels)
        if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0 or 1");
}

std::size_t count_positive(std::span<const int> labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

// Indices sorted by descending score.
std::vector<std::size_t> order_desc(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

// Cumulative (tp, fp) after each group of tied scores, highest first.
struct Step {
    double threshold;  // the score of the group; predictions use score >= threshold
    std::size_t tp, fp;
};

std::vector<Step> cumulative_steps(std::span<const double> scores, std::span<const int> labels) {
    auto idx = order_desc(scores);
    std::vector<Step> steps;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (labels[idx[i]] == 1)
            ++tp;
        else
            ++fp;
        if (i + 1 == idx.size() || scores[idx[i + 1]] != scores[idx[i]]) steps.push_back({scores[idx[i]], tp, fp});
    }
    return steps;
}

double below(double x) {
    return std::nextafter(x, -std::numeric_limits<double>::infinity());
}

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_inputs(scores, labels);
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] > threshold;
        if (labels[i] == 1)
            pred ? ++c.tp : ++c.fn;
        else
            pred ? ++c.fp : ++c.tn;
    }
    return c;
}

Prf prf_from(const Confusion& c) {
    Prf r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

Prf prf_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
    return prf_from(confusion_at(scores, labels, threshold));
}

EvalReport best_f1(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t pos = count_positive(labels);
    if (pos == 0) throw std::invalid_argument("best_f1 needs at least one positive label");
    const std::size_t n = scores.size();

    // Candidate thresholds: every distinct score (flags strictly greater ones)
    // and one just below the minimum (flags everything).
    auto steps = cumulative_steps(scores, labels);
    EvalReport best;
    bool have = false;
    auto consider = [&](double eps, std::size_t tp, std::size_t fp) {
        Confusion c{tp, fp, (n - pos) - fp, pos - tp};
        Prf p = prf_from(c);
        bool better = !have || p.f1 > best.f1 || (p.f1 == best.f1 && p.precision > best.precision);
        if (better) {
            best.precision = p.precision;
            best.recall = p.recall;
            best.f1 = p.f1;
            best.threshold = eps;
            best.counts = c;
            have = true;
        }
    };
    // Threshold at the top score flags nothing.
    consider(steps.front().threshold, 0, 0);
    for (std::size_t g = 0; g < steps.size(); ++g) {
        double eps = g + 1 < steps.size() ? steps[g + 1].threshold : below(steps[g].threshold);
        consider(eps, steps[g].tp, steps[g].fp);
    }
    best.rule = ThresholdRule::best_f1;
    return best;
}

double topk_threshold(std::span<const double> scores, double k_percent) {
    if (!(k_percent > 0.0 && k_percent <= 100.0))
        throw std::invalid_argument("k_percent must be in (0, 100], got " + std::to_string(k_percent));
    if (scores.empty()) throw std::invalid_argument("topk_threshold on empty scores");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // Guard against 0.3 * 10 landing just under 3.
    const auto flagged =
        static_cast<std::size_t>(std::floor(k_percent / 100.0 * static_cast<double>(sorted.size()) + 1e-9));
    if (flagged >= sorted.size()) return below(sorted.back());
    return sorted[flagged];
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t pos = count_positive(labels);
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc needs both classes");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (labels[idx[t]] == 1) rank_sum += midrank;
        i = j;
    }
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t pos = count_positive(labels);
    if (pos == 0) throw std::invalid_argument("pr_auc needs at least one positive label");
    double area = 0.0, prev_recall = 0.0;
    for (const auto& s : cumulative_steps(scores, labels)) {
        double recall = static_cast<double>(s.tp) / static_cast<double>(pos);
        double precision = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t pos = count_positive(labels);
    if (pos == 0) throw std::invalid_argument("pr_curve needs at least one positive label");
    std::vector<CurvePoint> out;
    for (const auto& s : cumulative_steps(scores, labels))
        out.push_back({s.threshold, static_cast<double>(s.tp) / static_cast<double>(pos),
                       static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp)});
    return out;
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels);
    const std::size_t pos = count_positive(labels);
    const std::size_t neg = labels.size() - pos;
    if (pos == 0 || neg == 0) throw std::invalid_argument("roc_curve needs both classes");
    std::vector<CurvePoint> out;
    out.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (const auto& s : cumulative_steps(scores, labels))
        out.push_back({s.threshold, static_cast<double>(s.fp) / static_cast<double>(neg),
                       static_cast<double>(s.tp) / static_cast<double>(pos)});
    return out;
}

EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, ThresholdRule rule,
                           std::optional<double> k_percent) {
    EvalReport r;
    if (rule == ThresholdRule::best_f1) {
        r = best_f1(scores, labels);
    } else {
        if (!k_percent) throw ConfigError("top-k threshold rule needs k_percent");
        r.threshold = topk_threshold(scores, *k_percent);
        r.counts = confusion_at(scores, labels, r.threshold);
        Prf p = prf_from(r.counts);
        r.precision = p.precision;
        r.recall = p.recall;
        r.f1 = p.f1;
        r.rule = ThresholdRule::top_k;
        r.k_percent = k_percent;
    }
    r.pr_auc = pr_auc(scores, labels);
    r.roc_auc = roc_auc(scores, labels);
    return r;
}

std::vector<double> mas_scores(const LabeledSeries& series, std::size_t window) {
    if (window == 0) throw std::invalid_argument("moving-average window must be at least 1");
    const std::size_t c = series.length(), d = series.dims();
    const Tensor& v = series.values;
    std::vector<double> out(c, 0.0);
    std::vector<double> sum(d, 0.0);
    for (std::size_t t = 0; t < c; ++t) {
        const std::size_t n = std::min(t, window);
        if (n > 0) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double diff = v(t, j) - sum[j] / static_cast<double>(n);
                s += diff * diff;
            }
            out[t] = s;
        }
        for (std::size_t j = 0; j < d; ++j) {
            sum[j] += v(t, j);
            if (t >= window) sum[j] -= v(t - window, j);
        }
    }
    return out;
}

}  // namespace caee
