// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mergeforge/baselines.hpp"
#include "mergeforge/data.hpp"
#include "mergeforge/model.hpp"
#include "mergeforge/nn.hpp"
#include "mergeforge/rng.hpp"

namespace oracles {

using namespace mergeforge;

// Straight-line forward pass: one example at a time, scalar loops, no shared
// code with nn.cpp beyond the type definitions.
inline double naive_mean_loss_dense(const ModelSpec& spec,
                                    const std::vector<std::vector<double>>& layer_values,
                                    const Batch& batch) {
    double total = 0.0;
    for (size_t b = 0; b < batch.batch_size; ++b) {
        std::vector<double> act(batch.inputs.begin() + static_cast<std::ptrdiff_t>(b * batch.input_dim),
                                batch.inputs.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch.input_dim));
        for (size_t s = 0; s < spec.layers.size(); ++s) {
            const auto& d = spec.layers[s];
            const auto& vals = layer_values[s];
            std::vector<double> next;
            if (d.kind == LayerKind::dense) {
                next.assign(static_cast<size_t>(d.output_dim), 0.0);
                for (int o = 0; o < d.output_dim; ++o)
                    for (int i = 0; i < d.input_dim; ++i)
                        next[static_cast<size_t>(o)] +=
                            vals[static_cast<size_t>(o * d.input_dim + i)] *
                            act[static_cast<size_t>(i)];
            } else {
                next = act;
                for (int o = 0; o < d.output_dim; ++o)
                    next[static_cast<size_t>(o)] += vals[static_cast<size_t>(o)];
            }
            for (double& v : next) {
                if (d.activation == Activation::relu && v < 0.0) v = 0.0;
                if (d.activation == Activation::tanh) v = std::tanh(v);
            }
            act = std::move(next);
        }
        // softmax cross entropy
        double mx = act[0];
        for (double v : act) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : act) sum += std::exp(v - mx);
        total += mx + std::log(sum) - act[static_cast<size_t>(batch.labels[b])];
    }
    return total / static_cast<double>(batch.batch_size);
}

inline double naive_mean_loss(const ModelSpec& spec, const ParameterSet& params,
                              const Batch& batch) {
    std::vector<std::vector<double>> layer_values;
    for (const auto& l : params.layers)
        layer_values.emplace_back(l.values.begin(), l.values.end());
    return naive_mean_loss_dense(spec, layer_values, batch);
}

// Merge equation evaluated by the test itself, in double throughout:
// theta_p(j) + sum_i g(w(i,j)) tau(i,j).
inline std::vector<std::vector<double>>
naive_merge(const ParameterSet& pretrained, const std::vector<TaskVector>& tvs,
            const std::vector<float>& w_values, size_t n_layers, bool use_tanh) {
    std::vector<std::vector<double>> out;
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        std::vector<double> vals(pretrained.layers[l].values.begin(),
                                 pretrained.layers[l].values.end());
        for (size_t i = 0; i < tvs.size(); ++i) {
            double raw = static_cast<double>(w_values[i * n_layers + l]);
            double coeff = use_tanh ? std::tanh(raw) : raw;
            for (size_t e = 0; e < vals.size(); ++e)
                vals[e] += coeff * tvs[i].layers[l].values[e];
        }
        out.push_back(std::move(vals));
    }
    return out;
}

// Central finite differences over float32 parameters. The divisor is the
// realized interval after float rounding, not the nominal 2h.
inline double fd_param_gradient(const std::function<double()>& loss, float& param, double h) {
    const float original = param;
    const float plus = static_cast<float>(static_cast<double>(original) + h);
    const float minus = static_cast<float>(static_cast<double>(original) - h);
    param = plus;
    double loss_plus = loss();
    param = minus;
    double loss_minus = loss();
    param = original;
    return (loss_plus - loss_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
}

inline double max_relative_error(double got, double want, double scale_floor) {
    double denom = std::max(std::abs(want), scale_floor);
    return std::abs(got - want) / denom;
}

// Brute-force sign election for one coordinate, straight from the rule:
// average positives and negatives independently, keep the larger magnitude.
inline double ties_elect_coordinate(const std::vector<double>& values) {
    double pos_sum = 0.0, neg_sum = 0.0;
    int pos_n = 0, neg_n = 0;
    for (double v : values) {
        if (v > 0.0) {
            pos_sum += v;
            ++pos_n;
        } else if (v < 0.0) {
            neg_sum += v;
            ++neg_n;
        }
    }
    double pos_avg = pos_n ? pos_sum / pos_n : 0.0;
    double neg_avg = neg_n ? neg_sum / neg_n : 0.0;
    if (pos_avg >= -neg_avg) return pos_avg;
    return neg_avg;
}

// Deterministic toy inputs.
inline Batch random_batch(const ModelSpec& spec, size_t batch_size, uint64_t seed) {
    Prng rng(seed);
    Batch b;
    b.batch_size = batch_size;
    b.input_dim = static_cast<size_t>(spec.input_dim);
    for (size_t i = 0; i < batch_size * b.input_dim; ++i)
        b.inputs.push_back(static_cast<float>(rng.next_normal()));
    for (size_t i = 0; i < batch_size; ++i)
        b.labels.push_back(static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.num_classes))));
    return b;
}

// Linearly separable 2-class points in 2 dims: class by sign of x0 + x1.
inline std::vector<Example> separable_points(size_t count, uint64_t seed) {
    Prng rng(seed);
    std::vector<Example> out;
    for (size_t i = 0; i < count; ++i) {
        float a = static_cast<float>(rng.next_normal());
        float b = static_cast<float>(rng.next_normal());
        if (std::abs(a + b) < 0.3f) { // margin
            a += a + b > 0 ? 0.3f : -0.3f;
            b += a + b > 0 ? 0.3f : -0.3f;
        }
        out.push_back({{a, b}, a + b > 0 ? 1 : 0});
    }
    return out;
}

inline TaskVector make_task_vector(const ModelSpec& spec, const ParameterSet& like,
                                   const std::function<double(size_t layer, size_t elem)>& fill,
                                   const std::string& name = "toy") {
    TaskVector tv;
    tv.spec_hash = like.spec_hash;
    tv.source_task = name;
    for (size_t l = 0; l < like.layers.size(); ++l) {
        NamedArrayD arr;
        arr.name = like.layers[l].name;
        arr.values.resize(like.layers[l].values.size());
        for (size_t e = 0; e < arr.values.size(); ++e) arr.values[e] = fill(l, e);
        tv.layers.push_back(std::move(arr));
    }
    (void)spec;
    return tv;
}

} // namespace oracles
