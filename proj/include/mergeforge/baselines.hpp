#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mergeforge/data.hpp"
#include "mergeforge/nn.hpp"
#include "mergeforge/task_vector.hpp"

namespace mergeforge {

// theta_p + lambda * sum_i tau_i
ParameterSet merge_task_arithmetic(const ParameterSet& pretrained,
                                   std::span<const TaskVector> task_vectors, double lambda);

// Drop each entry with probability p, rescale survivors by 1/(1-p). The mask
// is keyed by (seed, task_index, layer name, element index), so the result is
// independent of evaluation order.
TaskVector dare_sparsify(const TaskVector& tv, double drop_prob, uint64_t seed, uint64_t task_index);

ParameterSet merge_dare(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                        double drop_prob, double lambda, uint64_t seed);

enum class TrimScope { global, per_layer };

// Zero everything but the top ceil(density * len) entries by magnitude.
TaskVector ties_trim(const TaskVector& tv, double density, TrimScope scope);

// Trim each vector, then per coordinate average the surviving positives and
// the surviving negatives separately and keep the signed average with the
// larger magnitude (ties go to the positive side; no survivors gives 0).
TaskVector ties_merge_vector(std::span<const TaskVector> task_vectors, double density,
                             TrimScope scope = TrimScope::global);

ParameterSet merge_ties(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                        double density, double lambda, TrimScope scope = TrimScope::global);

struct LambdaCurvePoint {
    double lambda = 0.0;
    double mean_accuracy = 0.0;
    std::vector<double> per_task_accuracy;
};

struct GridSearchResult {
    double best_lambda = 0.0;
    std::vector<LambdaCurvePoint> curve; // one entry per grid point, grid order
};

// Tasks evaluated during the sweep: name + validation examples.
struct ValidationTask {
    std::string task_name;
    const std::vector<Example>* examples = nullptr;
};

// Mean validation accuracy across tasks for each lambda; argmax wins, ties go
// to the smaller lambda.
GridSearchResult grid_search_lambda(const std::function<ParameterSet(double)>& merge_at,
                                    std::span<const double> grid, const ModelSpec& spec,
                                    std::span<const ValidationTask> validation);

// Selection rule factored out so the argmax invariance is testable on its own.
double pick_best_lambda(const std::vector<LambdaCurvePoint>& curve);

} // namespace mergeforge
