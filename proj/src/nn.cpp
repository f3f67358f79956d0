#include "mergeforge/nn.hpp"

#include <algorithm>
#include <cmath>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

namespace {

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
        default: return z;
    }
}

double activation_grad(Activation a, double pre) {
    switch (a) {
        case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        default: return 1.0;
    }
}

// Activations recorded stage by stage. post[0] is the input batch; for stage
// s >= 1, pre[s] is the value before the activation and post[s] after it.
struct Tape {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;
    std::vector<size_t> dims; // dims[s] = width after stage s
};

// VecT is a float or double array type; both parameter precisions share one
// forward/backward implementation.
template <typename VecT>
std::vector<double> run_forward(const ModelSpec& spec, const std::vector<VecT>& layer_values,
                                const Batch& batch, Tape* tape) {
    check_batch(batch, spec.input_dim, spec.num_classes);

    const size_t bs = batch.batch_size;
    std::vector<double> act(batch.inputs.begin(), batch.inputs.end());
    size_t dim = batch.input_dim;

    if (tape) {
        tape->pre.assign(spec.layers.size() + 1, {});
        tape->post.assign(spec.layers.size() + 1, {});
        tape->dims.assign(spec.layers.size() + 1, 0);
        tape->post[0] = act;
        tape->dims[0] = dim;
    }

    for (size_t s = 0; s < spec.layers.size(); ++s) {
        const auto& d = spec.layers[s];
        const auto& vals = layer_values[s];
        std::vector<double> z;
        size_t out_dim;
        if (d.kind == LayerKind::dense) {
            out_dim = static_cast<size_t>(d.output_dim);
            z.assign(bs * out_dim, 0.0);
            const size_t in_dim = static_cast<size_t>(d.input_dim);
            for (size_t b = 0; b < bs; ++b) {
                const double* row = act.data() + b * in_dim;
                double* zrow = z.data() + b * out_dim;
                for (size_t o = 0; o < out_dim; ++o) {
                    const auto* wrow = vals.data() + o * in_dim;
                    double acc = 0.0;
                    for (size_t i = 0; i < in_dim; ++i) acc += static_cast<double>(wrow[i]) * row[i];
                    zrow[o] = acc;
                }
            }
        } else {
            out_dim = dim;
            z = act;
            for (size_t b = 0; b < bs; ++b)
                for (size_t o = 0; o < out_dim; ++o)
                    z[b * out_dim + o] += static_cast<double>(vals[o]);
        }

        std::vector<double> a(z.size());
        for (size_t i = 0; i < z.size(); ++i) a[i] = apply_activation(d.activation, z[i]);
        for (double v : a)
            if (!std::isfinite(v)) throw NumericError("non-finite activation after layer '" + d.name + "'");

        if (tape) {
            tape->pre[s + 1] = std::move(z);
            tape->post[s + 1] = a;
            tape->dims[s + 1] = out_dim;
        }
        act = std::move(a);
        dim = out_dim;
    }
    return act; // logits, bs x num_classes
}

LossValue loss_from_logits(const std::vector<double>& logits, const std::vector<int>& labels,
                           size_t num_classes, std::vector<double>* dlogits) {
    const size_t bs = labels.size();
    if (dlogits) dlogits->assign(logits.size(), 0.0);
    double total = 0.0;
    size_t correct = 0;
    for (size_t b = 0; b < bs; ++b) {
        const double* row = logits.data() + b * num_classes;
        double mx = row[0];
        size_t arg = 0;
        for (size_t c = 1; c < num_classes; ++c)
            if (row[c] > mx) { mx = row[c]; arg = c; }
        double sum = 0.0;
        for (size_t c = 0; c < num_classes; ++c) sum += std::exp(row[c] - mx);
        double lse = mx + std::log(sum);
        total += lse - row[static_cast<size_t>(labels[b])];
        if (arg == static_cast<size_t>(labels[b])) ++correct;
        if (dlogits) {
            double* drow = dlogits->data() + b * num_classes;
            for (size_t c = 0; c < num_classes; ++c)
                drow[c] = std::exp(row[c] - lse) / static_cast<double>(bs);
            drow[static_cast<size_t>(labels[b])] -= 1.0 / static_cast<double>(bs);
        }
    }
    return {total / static_cast<double>(bs), correct};
}

template <typename VecT>
Gradients backprop(const ModelSpec& spec, const std::vector<VecT>& layer_values,
                   const Batch& batch, const Tape& tape, std::vector<double> dact) {
    const size_t bs = batch.batch_size;
    Gradients grads;
    grads.layers.resize(spec.layers.size());
    for (size_t s = spec.layers.size(); s-- > 0;) {
        const auto& d = spec.layers[s];
        const auto& vals = layer_values[s];
        const size_t out_dim = tape.dims[s + 1];
        const size_t in_dim = tape.dims[s];

        // activation
        std::vector<double> dz(dact.size());
        for (size_t i = 0; i < dact.size(); ++i)
            dz[i] = dact[i] * activation_grad(d.activation, tape.pre[s + 1][i]);

        auto& g = grads.layers[s];
        if (d.kind == LayerKind::dense) {
            g.assign(vals.size(), 0.0);
            std::vector<double> dprev(bs * in_dim, 0.0);
            for (size_t b = 0; b < bs; ++b) {
                const double* arow = tape.post[s].data() + b * in_dim;
                const double* dzrow = dz.data() + b * out_dim;
                double* dprow = dprev.data() + b * in_dim;
                for (size_t o = 0; o < out_dim; ++o) {
                    const double dzo = dzrow[o];
                    const auto* wrow = vals.data() + o * in_dim;
                    double* grow = g.data() + o * in_dim;
                    for (size_t i = 0; i < in_dim; ++i) {
                        grow[i] += dzo * arow[i];
                        dprow[i] += static_cast<double>(wrow[i]) * dzo;
                    }
                }
            }
            dact = std::move(dprev);
        } else {
            g.assign(vals.size(), 0.0);
            for (size_t b = 0; b < bs; ++b)
                for (size_t o = 0; o < out_dim; ++o)
                    g[o] += dz[b * out_dim + o];
            dact = std::move(dz);
        }
    }
    return grads;
}

std::vector<std::vector<float>> extract_layer_values(const ModelSpec& spec,
                                                     const ParameterSet& params) {
    check_congruent(spec, params);
    std::vector<std::vector<float>> out;
    out.reserve(params.layers.size());
    for (const auto& l : params.layers) out.push_back(l.values);
    return out;
}

void check_double_layers(const ModelSpec& spec, const DoubleLayers& layers) {
    if (layers.size() != spec.layers.size())
        throw StructuralError("layer count mismatch: got " + std::to_string(layers.size()) +
                              ", spec has " + std::to_string(spec.layers.size()));
    for (size_t i = 0; i < layers.size(); ++i)
        if (layers[i].size() != spec.layers[i].element_count())
            throw StructuralError("layer '" + spec.layers[i].name + "' shape mismatch");
}

template <typename VecT>
ForwardResult forward_impl(const ModelSpec& spec, const std::vector<VecT>& layers,
                           const Batch& batch) {
    std::vector<double> logits = run_forward(spec, layers, batch, nullptr);
    ForwardResult r;
    r.loss = loss_from_logits(logits, batch.labels, spec.num_classes, nullptr);
    r.logits = std::move(logits);
    return r;
}

template <typename VecT>
ForwardResult forward_backward_impl(const ModelSpec& spec, const std::vector<VecT>& layers,
                                    const Batch& batch, Gradients& grads_out) {
    Tape tape;
    std::vector<double> logits = run_forward(spec, layers, batch, &tape);
    std::vector<double> dlogits;
    ForwardResult r;
    r.loss = loss_from_logits(logits, batch.labels, spec.num_classes, &dlogits);
    grads_out = backprop(spec, layers, batch, tape, std::move(dlogits));
    r.logits = std::move(logits);
    return r;
}

} // namespace

ForwardResult forward(const ModelSpec& spec, const ParameterSet& params, const Batch& batch) {
    return forward_impl(spec, extract_layer_values(spec, params), batch);
}

ForwardResult forward(const ModelSpec& spec, const DoubleLayers& layers, const Batch& batch) {
    check_double_layers(spec, layers);
    return forward_impl(spec, layers, batch);
}

Gradients backward(const ModelSpec& spec, const ParameterSet& params, const Batch& batch) {
    Gradients g;
    forward_backward(spec, params, batch, g);
    return g;
}

ForwardResult forward_backward(const ModelSpec& spec, const ParameterSet& params,
                               const Batch& batch, Gradients& grads_out) {
    return forward_backward_impl(spec, extract_layer_values(spec, params), batch, grads_out);
}

ForwardResult forward_backward(const ModelSpec& spec, const DoubleLayers& layers,
                               const Batch& batch, Gradients& grads_out) {
    check_double_layers(spec, layers);
    return forward_backward_impl(spec, layers, batch, grads_out);
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adamw") return OptimizerKind::adamw;
    throw ConfigError("unknown optimizer '" + s + "'");
}

Optimizer::Optimizer(OptimizerConfig cfg, size_t param_count) : cfg_(cfg) {
    if (cfg_.kind == OptimizerKind::adamw) {
        m_.assign(param_count, 0.0);
        v_.assign(param_count, 0.0);
    }
}

template <typename T>
void Optimizer::step_impl(std::span<T> params, std::span<const double> grads, size_t offset) {
    if (params.size() != grads.size())
        throw StructuralError("optimizer step: params/grads size mismatch");
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::sgd) {
        for (size_t i = 0; i < params.size(); ++i) {
            double p = static_cast<double>(params[i]);
            p -= lr * cfg_.weight_decay * p;
            p -= lr * grads[i];
            params[i] = static_cast<T>(p);
        }
        return;
    }
    if (offset + params.size() > m_.size())
        throw StructuralError("optimizer step: moment shape mismatch");
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (size_t i = 0; i < params.size(); ++i) {
        double p = static_cast<double>(params[i]);
        double g = grads[i];
        double& m = m_[offset + i];
        double& v = v_[offset + i];
        p -= lr * cfg_.weight_decay * p;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        double mhat = m / bc1;
        double vhat = v / bc2;
        p -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        params[i] = static_cast<T>(p);
    }
}

void Optimizer::step(std::span<float> params, std::span<const double> grads) {
    ++step_count_;
    step_impl(params, grads, 0);
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
    ++step_count_;
    step_impl(params, grads, 0);
}

void Optimizer::step(ParameterSet& params, const Gradients& grads) {
    if (params.layers.size() != grads.layers.size())
        throw StructuralError("optimizer step: layer count mismatch");
    ++step_count_;
    size_t offset = 0;
    for (size_t l = 0; l < params.layers.size(); ++l) {
        auto& vals = params.layers[l].values;
        const auto& g = grads.layers[l];
        step_impl(std::span<float>(vals), std::span<const double>(g), offset);
        offset += vals.size();
    }
}

TrainResult train(const ModelSpec& spec, const ParameterSet& init,
                  const std::vector<Example>& train_examples, const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train_examples.empty()) throw ConfigError("training set is empty");
    check_congruent(spec, init);

    TrainResult result;
    result.params = init;
    Optimizer opt(cfg.opt, spec.param_count());

    const size_t n = train_examples.size();
    const size_t bs = static_cast<size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Prng rng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch)));
        std::vector<size_t> order = shuffled_indices(n, rng);

        double epoch_total = 0.0;
        for (size_t start = 0; start < n; start += bs) {
            size_t end = std::min(n, start + bs);
            std::vector<Example> slice;
            slice.reserve(end - start);
            for (size_t i = start; i < end; ++i) slice.push_back(train_examples[order[i]]);
            Batch batch = make_batch(slice);

            Gradients grads;
            ForwardResult fwd;
            try {
                fwd = forward_backward(spec, result.params, batch, grads);
            } catch (const NumericError& e) {
                throw TrainError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(fwd.loss.mean_loss))
                throw TrainError("training diverged at epoch " + std::to_string(epoch));
            epoch_total += fwd.loss.mean_loss * static_cast<double>(batch.batch_size);

            opt.step(result.params, grads);
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
    }
    return result;
}

EvalResult evaluate(const ModelSpec& spec, const ParameterSet& params,
                    const std::vector<Example>& examples) {
    if (examples.empty()) throw StructuralError("evaluate: no examples");
    EvalResult r;
    r.example_count = examples.size();
    double total = 0.0;
    size_t correct = 0;
    const size_t chunk = 256;
    for (size_t start = 0; start < examples.size(); start += chunk) {
        size_t end = std::min(examples.size(), start + chunk);
        Batch b = make_batch(examples, start, end);
        ForwardResult fwd = forward(spec, params, b);
        total += fwd.loss.mean_loss * static_cast<double>(b.batch_size);
        correct += fwd.loss.correct_count;
    }
    r.mean_loss = total / static_cast<double>(examples.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
    return r;
}

} // namespace mergeforge
