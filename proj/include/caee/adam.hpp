#pragma once

#include <cstdint>
#include <vector>

#include "caee/graph.hpp"

namespace caee {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam_state(const ParamSet& params, const AdamOptions& options = {});

/// One bias-corrected Adam update from the gradients stored in `params`.
/// Gradients are left untouched.
void adam_step(ParamSet& params, AdamState& state);

}  // namespace caee
