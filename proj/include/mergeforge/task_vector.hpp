#pragma once

#include <string>
#include <vector>

#include "mergeforge/model.hpp"

namespace mergeforge {

// Per-layer delta between a fine-tuned model and the shared pretrained model.
// Values are double: the exact difference of two float32 parameter sets needs
// more than 24 significand bits, and merge identities (scale-1 recovery)
// depend on keeping all of them.
struct TaskVector {
    SpecHash spec_hash{};
    std::string source_task;
    std::vector<NamedArrayD> layers;

    bool operator==(const TaskVector&) const = default;
};

void check_congruent(const ModelSpec& spec, const TaskVector& tv);

TaskVector compute_task_vector(const ParameterSet& fine_tuned, const ParameterSet& pretrained,
                               const std::string& source_task = "");

// pretrained + scale * delta, per layer, accumulated in double.
ParameterSet apply(const ParameterSet& pretrained, const TaskVector& delta, double scale);

struct LayerStats {
    std::string layer_name;
    double mean = 0.0;
    double stddev = 0.0; // population
    double min_value = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max_value = 0.0;
};

// Distribution summary per layer, in layer order (violin-plot style export).
std::vector<LayerStats> layer_stats(const TaskVector& tv);

// Flatten all layers into one vector, layer order then element order.
std::vector<double> flatten(const TaskVector& tv);

double cosine_similarity(const TaskVector& a, const TaskVector& b);

} // namespace mergeforge
