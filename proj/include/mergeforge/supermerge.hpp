#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mergeforge/data.hpp"
#include "mergeforge/nn.hpp"
#include "mergeforge/task_vector.hpp"

namespace mergeforge {

// Trainable merge weights: one scalar per (model, layer). Raw values are
// unbounded; only tanh(w) enters the merge, so effective coefficients stay in
// (-1, 1).
struct MergeWeights {
    std::vector<std::string> model_ids;   // k task names, row order
    std::vector<std::string> layer_names; // n spec layer names, column order
    std::vector<float> values;            // k x n, row-major

    size_t k() const { return model_ids.size(); }
    size_t n() const { return layer_names.size(); }
    float at(size_t model, size_t layer) const { return values[model * n() + layer]; }
    float& at(size_t model, size_t layer) { return values[model * n() + layer]; }

    static MergeWeights filled(std::vector<std::string> model_ids,
                               std::vector<std::string> layer_names, float init_value);

    bool operator==(const MergeWeights&) const = default;
};

size_t merge_weight_count(size_t num_models, size_t num_layers);

// theta_m(j) = theta_p(j) + sum_i g(w(i,j)) * tau(i,j), g = tanh or identity.
ParameterSet materialize(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                         const MergeWeights& weights, bool use_tanh = true);

// d(mean batch loss)/dw for every entry: one backward pass through the
// materialized model, then per-layer inner products with the task vectors,
// scaled by the gate derivative.
std::vector<double> grad_w(const ModelSpec& spec, const ParameterSet& pretrained,
                           std::span<const TaskVector> task_vectors, const MergeWeights& weights,
                           const Batch& batch, bool use_tanh = true);

enum class TaskBalance { uniform_examples, uniform_tasks };

struct FitConfig {
    int epochs = 300;
    int batch_size = 32;
    OptimizerConfig opt{OptimizerKind::adamw, 2e-2, 0.0, 0.9, 0.999, 1e-8};
    double init_value = 0.0;
    bool use_tanh = true;
    TaskBalance balance = TaskBalance::uniform_examples;
    uint64_t seed = 0;
};

struct FitTask {
    std::string task_name;
    std::vector<Example> validation;
};

struct NamedModel {
    std::string task_name;
    ParameterSet params;
};

struct FitResult {
    MergeWeights weights;
    ParameterSet merged;
    std::vector<double> validation_loss; // [0] = before any update, then one per epoch
};

// Learn W by mini-batch gradient descent on the validation union; the
// pretrained model and task vectors stay frozen. Deterministic per seed.
FitResult fit(const ModelSpec& spec, const ParameterSet& pretrained,
              std::span<const NamedModel> fine_tuned, std::span<const FitTask> validation,
              const FitConfig& cfg);

} // namespace mergeforge
