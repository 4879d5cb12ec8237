#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "caee/data_io.hpp"

namespace caee {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct Prf {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

enum class ThresholdRule { best_f1, top_k };

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double pr_auc = 0.0;
    double roc_auc = 0.0;
    double threshold = 0.0;
    ThresholdRule rule = ThresholdRule::best_f1;
    std::optional<double> k_percent;
    Confusion counts;
};

/// Prediction is `score > threshold`.
Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Empty denominators give 0, and F1 is 0 when P = R = 0.
Prf prf_from(const Confusion& c);
Prf prf_at(std::span<const double> scores, std::span<const int> labels, double threshold);

/// Best F1 over every distinct score as threshold plus one below the minimum
/// (flag everything). Ties go to the higher precision, then the higher threshold.
/// Fills precision/recall/f1/threshold/counts; AUC fields are left at 0.
EvalReport best_f1(std::span<const double> scores, std::span<const int> labels);

/// Threshold flagging the floor(k% * C) highest scores. With ties at the cut
/// fewer may exceed it.
double topk_threshold(std::span<const double> scores, double k_percent);

/// Mann-Whitney form with midranks for ties.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Step-interpolated area: sum over distinct thresholds of (R_i - R_{i-1}) P_i.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct CurvePoint {
    double threshold;
    double x;  // recall for PR, false positive rate for ROC
    double y;  // precision for PR, true positive rate for ROC
};

/// Points at each distinct score, from the highest threshold down.
std::vector<CurvePoint> pr_curve(std::span<const double> scores, std::span<const int> labels);
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Full report under a threshold rule. `k_percent` is required for top_k.
EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels, ThresholdRule rule,
                           std::optional<double> k_percent = std::nullopt);

/// Moving-average smoothing baseline: squared distance of each observation
/// to the mean of the previous `window` observations (or the whole prefix
/// while fewer are available). The first observation scores 0.
std::vector<double> mas_scores(const LabeledSeries& series, std::size_t window);

}  // namespace caee
