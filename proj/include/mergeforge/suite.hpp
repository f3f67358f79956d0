#pragma once

#include <cstdint>
#include <vector>

#include "mergeforge/data.hpp"

namespace mergeforge {

// Synthetic multi-task benchmark: every task is a Gaussian-mixture
// classification problem over a shared input space. Task t sees the base
// mixture through its own random rotation and label permutation, so tasks are
// related but not interchangeable; out-of-domain tasks reuse an in-domain
// task's rotation composed with an extra partial rotation, which gives
// held-out tasks with measurable transfer.
struct SuiteConfig {
    int k_in = 6;
    int k_out = 3;
    int input_dim = 32;
    int num_classes = 4;
    int train_size = 256;
    int val_size = 32; // small on purpose: merge fitting sees only this
    int test_size = 256;
    int pretrain_per_task = 24; // mixture rows drawn from each in-domain task
    double noise = 0.2;         // component std around the unit-norm centers
    double ood_blend = 0.35;    // rotation angle fraction toward a fresh basis
    uint64_t seed = 0;
};

struct TaskSuite {
    DatasetSplit pretrain_mixture;
    std::vector<DatasetSplit> in_domain;
    std::vector<DatasetSplit> out_of_domain;
    uint64_t generator_seed = 0;
};

TaskSuite generate_suite(const SuiteConfig& cfg);

} // namespace mergeforge
