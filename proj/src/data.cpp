#include "mergeforge/data.hpp"

#include <cmath>

#include "mergeforge/errors.hpp"

namespace mergeforge {

Batch make_batch(const std::vector<Example>& examples, size_t begin, size_t end) {
    if (begin >= end || end > examples.size())
        throw StructuralError("bad batch range [" + std::to_string(begin) + ", " +
                              std::to_string(end) + ") over " + std::to_string(examples.size()) +
                              " examples");
    Batch b;
    b.batch_size = end - begin;
    b.input_dim = examples[begin].x.size();
    b.inputs.reserve(b.batch_size * b.input_dim);
    b.labels.reserve(b.batch_size);
    for (size_t i = begin; i < end; ++i) {
        const auto& ex = examples[i];
        if (ex.x.size() != b.input_dim)
            throw StructuralError("example " + std::to_string(i) + " has dim " +
                                  std::to_string(ex.x.size()) + ", expected " +
                                  std::to_string(b.input_dim));
        b.inputs.insert(b.inputs.end(), ex.x.begin(), ex.x.end());
        b.labels.push_back(ex.y);
    }
    return b;
}

Batch make_batch(const std::vector<Example>& examples) {
    return make_batch(examples, 0, examples.size());
}

void check_batch(const Batch& batch, int input_dim, int num_classes) {
    if (batch.batch_size < 1) throw StructuralError("empty batch");
    if (batch.input_dim != static_cast<size_t>(input_dim))
        throw StructuralError("batch input_dim " + std::to_string(batch.input_dim) +
                              " does not match spec input_dim " + std::to_string(input_dim));
    if (batch.inputs.size() != batch.batch_size * batch.input_dim)
        throw StructuralError("batch inputs size mismatch");
    if (batch.labels.size() != batch.batch_size)
        throw StructuralError("batch labels size mismatch");
    for (int y : batch.labels)
        if (y < 0 || y >= num_classes)
            throw StructuralError("label " + std::to_string(y) + " out of range [0, " +
                                  std::to_string(num_classes) + ")");
    for (float v : batch.inputs)
        if (!std::isfinite(v)) throw NumericError("non-finite batch input");
}

} // namespace mergeforge
