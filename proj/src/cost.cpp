#include "mergeforge/cost.hpp"

#include <algorithm>

#include "mergeforge/errors.hpp"

namespace mergeforge {

namespace {

uint64_t checked_mul(uint64_t a, uint64_t b) {
    uint64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw NumericError("peak memory computation overflowed");
    return r;
}

uint64_t checked_add(uint64_t a, uint64_t b) {
    uint64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw NumericError("peak memory computation overflowed");
    return r;
}

} // namespace

uint64_t peak_memory_bytes(const CostInput& c) {
    if (c.is_merging && c.k < 1) throw ConfigError("k must be >= 1 when merging");
    uint64_t weights = checked_mul(4, c.n_para);
    uint64_t gradients = checked_mul(4, c.n_trainable);
    uint64_t optimizer_state = checked_mul(8, c.n_trainable);
    uint64_t total = checked_add(checked_add(weights, gradients), optimizer_state);
    if (c.is_merging)
        total = checked_add(total, checked_mul(4, checked_mul(c.k, c.n_task_vector)));
    return total;
}

FlopsMode flops_mode_from_string(const std::string& s) {
    if (s == "training") return FlopsMode::training;
    if (s == "merge_fit") return FlopsMode::merge_fit;
    if (s == "inference") return FlopsMode::inference;
    throw ConfigError("unknown flops mode '" + s + "'");
}

double flops_per_epoch(const CostInput& c, FlopsMode mode, const CostConfig& cfg) {
    if (!(cfg.fwd_coeff > 0.0 && cfg.train_coeff > 0.0 && cfg.merge_backward_coeff > 0.0 &&
          cfg.global_scale > 0.0))
        throw ConfigError("flops coefficients must be positive");
    double per_sample = cfg.fwd_coeff * static_cast<double>(c.n_para);
    switch (mode) {
        case FlopsMode::training:
            per_sample += cfg.train_coeff * static_cast<double>(c.n_trainable);
            break;
        case FlopsMode::merge_fit:
            per_sample += cfg.merge_backward_coeff * static_cast<double>(c.n_para);
            break;
        case FlopsMode::inference:
            break;
    }
    return cfg.global_scale * per_sample * static_cast<double>(c.n_samples);
}

double bytes_to_gb(uint64_t bytes) {
    return static_cast<double>(bytes) / 1e9;
}

double bytes_to_gib(uint64_t bytes) {
    return static_cast<double>(bytes) / static_cast<double>(1ull << 30);
}

PeakMeasurement measure_peak_models(std::span<const NodeReport> trace, const CostInput& base) {
    if (trace.empty()) throw StructuralError("empty execution trace");
    int widest = 0;
    for (const auto& r : trace) widest = std::max(widest, r.child_count);
    PeakMeasurement m;
    m.concurrent_task_vectors = widest;
    m.peak_concurrent_models = widest + 1;
    CostInput adjusted = base;
    adjusted.is_merging = true;
    adjusted.k = static_cast<uint64_t>(std::max(widest, 1));
    m.modeled_bytes = peak_memory_bytes(adjusted);
    return m;
}

} // namespace mergeforge
