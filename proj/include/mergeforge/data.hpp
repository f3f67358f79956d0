#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mergeforge {

struct Example {
    std::vector<float> x;
    int y = 0;

    bool operator==(const Example&) const = default;
};

// Train/validation/test example sets for one task.
struct DatasetSplit {
    std::string task_name;
    std::vector<Example> train;
    std::vector<Example> validation;
    std::vector<Example> test;
    int input_dim = 0;
    int num_classes = 0;
};

// A contiguous mini-batch view materialized from examples.
struct Batch {
    size_t batch_size = 0;
    size_t input_dim = 0;
    std::vector<float> inputs; // batch_size x input_dim, row-major
    std::vector<int> labels;
};

Batch make_batch(const std::vector<Example>& examples, size_t begin, size_t end);
Batch make_batch(const std::vector<Example>& examples);

void check_batch(const Batch& batch, int input_dim, int num_classes);

} // namespace mergeforge
