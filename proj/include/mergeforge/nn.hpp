#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mergeforge/data.hpp"
#include "mergeforge/model.hpp"

namespace mergeforge {

struct LossValue {
    double mean_loss = 0.0;
    size_t correct_count = 0;
};

struct ForwardResult {
    LossValue loss;
    std::vector<double> logits; // batch_size x num_classes, row-major
};

// Per-layer gradients of the mean batch loss, aligned with spec layer order.
// Accumulation and storage are double; parameters themselves stay float32.
struct Gradients {
    std::vector<std::vector<double>> layers;
};

// Mean cross-entropy (softmax with max subtraction) plus per-example logits.
ForwardResult forward(const ModelSpec& spec, const ParameterSet& params, const Batch& batch);

Gradients backward(const ModelSpec& spec, const ParameterSet& params, const Batch& batch);

// Forward and backward in one pass; used by train/fit loops to avoid
// recomputing activations.
ForwardResult forward_backward(const ModelSpec& spec, const ParameterSet& params,
                               const Batch& batch, Gradients& grads_out);

// Same operations over double-precision parameter arrays (spec layer order).
// The merge-weight gradient path runs on these so its loss surface is smooth
// at finite-difference scale; float32 stays the storage format.
using DoubleLayers = std::vector<std::vector<double>>;
ForwardResult forward(const ModelSpec& spec, const DoubleLayers& layers, const Batch& batch);
ForwardResult forward_backward(const ModelSpec& spec, const DoubleLayers& layers,
                               const Batch& batch, Gradients& grads_out);

enum class OptimizerKind { sgd, adamw };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

OptimizerKind optimizer_kind_from_string(const std::string& s);

// Moment-tracking update rule over a flat parameter view. AdamW keeps two
// moments per tracked parameter; SGD keeps none.
class Optimizer {
  public:
    Optimizer(OptimizerConfig cfg, size_t param_count);

    void step(std::span<float> params, std::span<const double> grads);
    void step(std::span<double> params, std::span<const double> grads);
    // one update over all layers; moments indexed by flat parameter offset
    void step(ParameterSet& params, const Gradients& grads);

    uint64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return cfg_; }
    const std::vector<double>& first_moment() const { return m_; }
    const std::vector<double>& second_moment() const { return v_; }

  private:
    template <typename T>
    void step_impl(std::span<T> params, std::span<const double> grads, size_t offset);

    OptimizerConfig cfg_;
    uint64_t step_count_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

struct TrainConfig {
    OptimizerConfig opt;
    int epochs = 20;
    int batch_size = 32;
    uint64_t seed = 0;
};

struct TrainResult {
    ParameterSet params;
    std::vector<double> epoch_loss; // mean train loss per epoch
};

// Mini-batch training; deterministic given (seed, config, data order).
// Throws TrainError with the epoch index if the loss turns non-finite.
TrainResult train(const ModelSpec& spec, const ParameterSet& init,
                  const std::vector<Example>& train_examples, const TrainConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    size_t example_count = 0;
};

EvalResult evaluate(const ModelSpec& spec, const ParameterSet& params,
                    const std::vector<Example>& examples);

} // namespace mergeforge
