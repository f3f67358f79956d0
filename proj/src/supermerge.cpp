#include "mergeforge/supermerge.hpp"

#include <algorithm>
#include <cmath>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

namespace {

void check_shapes(const ParameterSet& pretrained, std::span<const TaskVector> tvs,
                  const MergeWeights& w) {
    if (tvs.empty()) throw StructuralError("need at least one task vector");
    if (w.k() != tvs.size())
        throw StructuralError("merge weights have " + std::to_string(w.k()) + " rows, got " +
                              std::to_string(tvs.size()) + " task vectors");
    if (w.n() != pretrained.layers.size())
        throw StructuralError("merge weights have " + std::to_string(w.n()) + " columns, spec has " +
                              std::to_string(pretrained.layers.size()) + " layers");
    if (w.values.size() != w.k() * w.n()) throw StructuralError("merge weights shape mismatch");
    for (const auto& tv : tvs) {
        if (tv.spec_hash != pretrained.spec_hash)
            throw StructuralError("task vector '" + tv.source_task + "' belongs to a different spec");
        if (tv.layers.size() != pretrained.layers.size())
            throw StructuralError("task vector layer count mismatch");
        for (size_t l = 0; l < tv.layers.size(); ++l)
            if (tv.layers[l].values.size() != pretrained.layers[l].values.size())
                throw StructuralError("layer '" + tv.layers[l].name + "' shape mismatch");
    }
}

double gate(double w, bool use_tanh) {
    return use_tanh ? std::tanh(w) : w;
}

double gate_grad(double w, bool use_tanh) {
    if (!use_tanh) return 1.0;
    double t = std::tanh(w);
    return 1.0 - t * t;
}

// Double-precision merge used by the gradient path. The float32 materialize
// below is the artifact; rounding it inside the gradient would make the loss
// stairstep at finite-difference scale.
DoubleLayers materialize_double(const ParameterSet& pretrained,
                                std::span<const TaskVector> task_vectors,
                                const MergeWeights& weights, bool use_tanh) {
    const size_t k = task_vectors.size();
    std::vector<double> coeff(k);
    DoubleLayers out(pretrained.layers.size());
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        for (size_t i = 0; i < k; ++i) coeff[i] = gate(weights.at(i, l), use_tanh);
        const auto& p = pretrained.layers[l].values;
        out[l].resize(p.size());
        for (size_t e = 0; e < p.size(); ++e) {
            double v = static_cast<double>(p[e]);
            for (size_t i = 0; i < k; ++i)
                v += coeff[i] * task_vectors[i].layers[l].values[e];
            out[l][e] = v;
        }
    }
    return out;
}

} // namespace

MergeWeights MergeWeights::filled(std::vector<std::string> model_ids,
                                  std::vector<std::string> layer_names, float init_value) {
    MergeWeights w;
    w.model_ids = std::move(model_ids);
    w.layer_names = std::move(layer_names);
    w.values.assign(w.model_ids.size() * w.layer_names.size(), init_value);
    return w;
}

size_t merge_weight_count(size_t num_models, size_t num_layers) {
    return num_models * num_layers;
}

ParameterSet materialize(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                         const MergeWeights& weights, bool use_tanh) {
    check_shapes(pretrained, task_vectors, weights);
    const size_t k = task_vectors.size();
    ParameterSet out;
    out.spec_hash = pretrained.spec_hash;
    out.layers.reserve(pretrained.layers.size());
    std::vector<double> coeff(k);
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        for (size_t i = 0; i < k; ++i) coeff[i] = gate(weights.at(i, l), use_tanh);
        const auto& p = pretrained.layers[l].values;
        NamedArray arr;
        arr.name = pretrained.layers[l].name;
        arr.values.resize(p.size());
        for (size_t e = 0; e < p.size(); ++e) {
            double v = static_cast<double>(p[e]);
            for (size_t i = 0; i < k; ++i)
                v += coeff[i] * task_vectors[i].layers[l].values[e];
            if (!std::isfinite(v)) throw NumericError("non-finite merge result in '" + arr.name + "'");
            arr.values[e] = static_cast<float>(v);
        }
        out.layers.push_back(std::move(arr));
    }
    return out;
}

std::vector<double> grad_w(const ModelSpec& spec, const ParameterSet& pretrained,
                           std::span<const TaskVector> task_vectors, const MergeWeights& weights,
                           const Batch& batch, bool use_tanh) {
    check_shapes(pretrained, task_vectors, weights);
    DoubleLayers merged = materialize_double(pretrained, task_vectors, weights, use_tanh);
    Gradients model_grads;
    forward_backward(spec, merged, batch, model_grads);

    const size_t k = task_vectors.size();
    const size_t n = pretrained.layers.size();
    std::vector<double> grads(k * n, 0.0);
    for (size_t l = 0; l < n; ++l) {
        const auto& g = model_grads.layers[l];
        for (size_t i = 0; i < k; ++i) {
            const auto& tau = task_vectors[i].layers[l].values;
            double dot = 0.0;
            for (size_t e = 0; e < g.size(); ++e) dot += g[e] * tau[e];
            grads[i * n + l] = gate_grad(weights.at(i, l), use_tanh) * dot;
        }
    }
    return grads;
}

FitResult fit(const ModelSpec& spec, const ParameterSet& pretrained,
              std::span<const NamedModel> fine_tuned, std::span<const FitTask> validation,
              const FitConfig& cfg) {
    if (fine_tuned.empty()) throw ConfigError("need at least one model to merge");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    check_congruent(spec, pretrained);

    std::vector<TaskVector> tvs;
    std::vector<std::string> model_ids;
    tvs.reserve(fine_tuned.size());
    for (const auto& m : fine_tuned) {
        check_congruent(spec, m.params);
        tvs.push_back(compute_task_vector(m.params, pretrained, m.task_name));
        model_ids.push_back(m.task_name);
    }
    std::vector<std::string> layer_names;
    for (const auto& d : spec.layers) layer_names.push_back(d.name);

    // Validation union. uniform_tasks replicates each task's list up to the
    // largest task size so every task contributes equally per epoch.
    std::vector<Example> pool;
    size_t largest = 0;
    for (const auto& t : validation) {
        if (t.validation.empty())
            throw ConfigError("validation set for task '" + t.task_name + "' is empty");
        largest = std::max(largest, t.validation.size());
    }
    if (validation.empty()) throw ConfigError("no validation tasks");
    for (const auto& t : validation) {
        if (cfg.balance == TaskBalance::uniform_examples) {
            pool.insert(pool.end(), t.validation.begin(), t.validation.end());
        } else {
            for (size_t i = 0; i < largest; ++i)
                pool.push_back(t.validation[i % t.validation.size()]);
        }
    }

    FitResult result;
    result.weights =
        MergeWeights::filled(model_ids, layer_names, static_cast<float>(cfg.init_value));

    Optimizer opt(cfg.opt, result.weights.values.size());

    auto validation_loss = [&](const MergeWeights& w) {
        ParameterSet merged = materialize(pretrained, tvs, w, cfg.use_tanh);
        return evaluate(spec, merged, pool).mean_loss;
    };

    result.validation_loss.push_back(validation_loss(result.weights));

    const size_t n_pool = pool.size();
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Prng rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order = shuffled_indices(n_pool, rng);
        for (size_t start = 0; start < n_pool; start += bs) {
            size_t end = std::min(n_pool, start + bs);
            std::vector<Example> slice;
            slice.reserve(end - start);
            for (size_t i = start; i < end; ++i) slice.push_back(pool[order[i]]);
            Batch batch = make_batch(slice);

            std::vector<double> grads;
            try {
                grads = grad_w(spec, pretrained, tvs, result.weights, batch, cfg.use_tanh);
            } catch (const NumericError& e) {
                throw TrainError("merge fit diverged at epoch " + std::to_string(epoch) + ": " +
                                 e.what());
            }
            opt.step(std::span<float>(result.weights.values), grads);
        }
        double loss = validation_loss(result.weights);
        if (!std::isfinite(loss))
            throw TrainError("merge fit diverged at epoch " + std::to_string(epoch));
        result.validation_loss.push_back(loss);
    }

    result.merged = materialize(pretrained, tvs, result.weights, cfg.use_tanh);
    return result;
}

} // namespace mergeforge
