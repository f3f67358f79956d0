#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "mergeforge/hierarchy.hpp"

namespace mergeforge {

// Inputs to the analytic resource model. Counts are model-wide totals; the
// per-task task-vector size usually equals n_para for full-delta merging.
struct CostInput {
    uint64_t n_para = 0;        // total model parameters
    uint64_t n_trainable = 0;   // parameters the optimizer updates
    uint64_t n_task_vector = 0; // task vector entries per task
    uint64_t k = 1;             // number of tasks held simultaneously
    bool is_merging = false;
    uint64_t n_samples = 0;     // examples per epoch
};

// FLOPs coefficients. The forward cost is fwd_coeff per parameter per sample;
// training adds train_coeff per trainable-path parameter; a merge fit's
// backward pass spans the full model but skips weight-gradient
// materialization, priced by merge_backward_coeff. global_scale was
// calibrated once against published per-epoch costs of a 3B-parameter model
// and lives in config so it can be re-run, not trusted.
struct CostConfig {
    double fwd_coeff = 2.0;
    double train_coeff = 4.0;
    double merge_backward_coeff = 1.514;
    double global_scale = 12.0;
};

// bytes = 4*n_para (weights) + 4*n_trainable (gradients)
//       + 8*n_trainable (AdamW moments) + [is_merging] 4*k*n_task_vector
// Exact integer arithmetic; throws on overflow.
uint64_t peak_memory_bytes(const CostInput& c);

enum class FlopsMode { training, merge_fit, inference };

FlopsMode flops_mode_from_string(const std::string& s);

double flops_per_epoch(const CostInput& c, FlopsMode mode, const CostConfig& cfg = {});

double bytes_to_gb(uint64_t bytes);  // decimal, 1e9
double bytes_to_gib(uint64_t bytes); // binary, 2^30

struct PeakMeasurement {
    int peak_concurrent_models = 0;   // widest node's children + the model being formed
    int concurrent_task_vectors = 0;  // widest node's children
    uint64_t modeled_bytes = 0;       // formula with k := concurrent_task_vectors
};

// Bridge an executed merge plan to the analytic formula: deltas for the
// models under the widest node occupy the task-vector term, the model being
// formed occupies the weights term.
PeakMeasurement measure_peak_models(std::span<const NodeReport> trace, const CostInput& base);

} // namespace mergeforge
