#include "caee/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace caee {

namespace {

double evaluate(const LossBuilder& build) {
    Graph graph;
    return graph.value(build(graph, nullptr)).item();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, const std::vector<ParamSet*>& sets,
                           const GradCheckOptions& options) {
    std::vector<GradBuffer> analytic;
    for (auto* set : sets) analytic.push_back(set->make_grad_buffer());
    {
        Graph graph;
        NodeId loss = build(graph, &analytic);
        graph.backward(loss);
    }

    std::mt19937_64 rng(options.seed);
    GradCheckReport report;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        ParamSet& set = *sets[s];
        for (std::size_t p = 0; p < set.size(); ++p) {
            auto values = set[p].value.data();
            std::vector<std::size_t> coords(values.size());
            std::iota(coords.begin(), coords.end(), std::size_t{0});
            if (options.samples_per_tensor > 0 && coords.size() > options.samples_per_tensor) {
                std::shuffle(coords.begin(), coords.end(), rng);
                coords.resize(options.samples_per_tensor);
            }
            double tensor_max = 0.0;
            for (std::size_t idx : coords) {
                const double original = values[idx];
                values[idx] = original + options.step;
                const double plus = evaluate(build);
                values[idx] = original - options.step;
                const double minus = evaluate(build);
                values[idx] = original;

                const double numeric = (plus - minus) / (2.0 * options.step);
                const double exact = analytic[s][p][idx];
                const double denom = std::max({std::abs(numeric), std::abs(exact), options.abs_floor});
                const double rel = std::abs(numeric - exact) / denom;
                ++report.checked;
                tensor_max = std::max(tensor_max, rel);
                if (report.worst_tensor.empty() || rel > report.max_rel_error) {
                    report.max_rel_error = rel;
                    report.worst_tensor = std::to_string(s) + "/" + set.name(p);
                    report.worst_index = idx;
                }
            }
            report.per_tensor.emplace_back(std::to_string(s) + "/" + set.name(p), tensor_max);
        }
    }
    report.passed = report.max_rel_error < options.tolerance;
    return report;
}

}  // namespace caee
