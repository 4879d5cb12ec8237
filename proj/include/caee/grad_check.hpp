#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "caee/graph.hpp"

namespace caee {

/// Builds a scalar loss from the current values of the checked parameter
/// sets. `sinks` is null for plain forward evaluations; otherwise it holds one
/// gradient buffer per parameter set, in the order given to grad_check().
using LossBuilder = std::function<NodeId(Graph&, std::vector<GradBuffer>* sinks)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Coordinates sampled per tensor; 0 checks every coordinate.
    std::size_t samples_per_tensor = 0;
    std::uint64_t seed = 0;
    /// Denominator floor for the relative error of near-zero gradients.
    double abs_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    bool passed = true;
    /// Max relative error per tensor, as "set#/name".
    std::vector<std::pair<std::string, double>> per_tensor;
};

/// Compares reverse-mode gradients against central finite differences.
/// Parameter values are perturbed in place and restored.
GradCheckReport grad_check(const LossBuilder& build, const std::vector<ParamSet*>& sets,
                           const GradCheckOptions& options = {});

}  // namespace caee
