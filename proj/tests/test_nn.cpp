#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mergeforge/errors.hpp"
#include "mergeforge/nn.hpp"
#include "mergeforge/rng.hpp"
#include "support/oracles.hpp"

using namespace mergeforge;

TEST_CASE("zero parameters give uniform softmax loss ln(C)") {
    for (int classes : {2, 3, 7}) {
        ModelSpec spec = ModelSpec::mlp(5, {9}, classes);
        ParameterSet zero = zero_params(spec);
        Batch batch = oracles::random_batch(spec, 6, 99);
        ForwardResult r = forward(spec, zero, batch);
        CHECK(r.loss.mean_loss == doctest::Approx(std::log(classes)).epsilon(1e-6));
    }
}

TEST_CASE("saturated softmax drives loss to zero") {
    // no hidden layers: logits = bias; put 10 on the true class
    ModelSpec spec = ModelSpec::mlp(3, {}, 4);
    ParameterSet p = zero_params(spec);
    p.layers[1].values = {0.0f, 0.0f, 10.0f, 0.0f};
    Batch batch;
    batch.batch_size = 1;
    batch.input_dim = 3;
    batch.inputs = {0.5f, -0.25f, 1.0f};
    batch.labels = {2};
    ForwardResult r = forward(spec, p, batch);
    CHECK(r.loss.mean_loss < 1e-3);
    CHECK(r.loss.correct_count == 1);
}

TEST_CASE("forward matches the straight-line reimplementation") {
    ModelSpec spec = ModelSpec::mlp(6, {10, 8}, 4);
    ParameterSet p = init_params(spec, 0);
    Batch batch = oracles::random_batch(spec, 7, 0);
    ForwardResult r = forward(spec, p, batch);
    double naive = oracles::naive_mean_loss(spec, p, batch);
    CHECK(r.loss.mean_loss == doctest::Approx(naive).epsilon(1e-6));
}

TEST_CASE("forward rejects structural and numeric problems") {
    ModelSpec spec = ModelSpec::mlp(6, {10}, 4);
    ParameterSet p = init_params(spec, 0);
    Batch bad_dim = oracles::random_batch(spec, 3, 1);
    bad_dim.input_dim = 5;
    bad_dim.inputs.resize(3 * 5);
    CHECK_THROWS_AS(forward(spec, p, bad_dim), StructuralError);

    Batch bad_label = oracles::random_batch(spec, 3, 1);
    bad_label.labels[0] = 4;
    CHECK_THROWS_AS(forward(spec, p, bad_label), StructuralError);

    // a deep chain of huge weights overflows the double accumulators
    ModelSpec deep = ModelSpec::mlp(2, {2, 2, 2, 2, 2, 2, 2, 2, 2}, 2);
    ParameterSet huge = zero_params(deep);
    for (auto& layer : huge.layers)
        for (auto& v : layer.values) v = 3e38f;
    Batch deep_batch = oracles::random_batch(deep, 3, 1);
    try {
        forward(deep, huge, deep_batch);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("fc") != std::string::npos); // names the layer
    }
}

TEST_CASE("backward matches central finite differences on random models") {
    // 1-3 layers, dims <= 16, several seeds; every parameter checked
    for (uint64_t seed : {11ull, 22ull, 33ull, 44ull}) {
        Prng rng(seed);
        int depth = 1 + static_cast<int>(rng.next_below(3));
        std::vector<int> hidden;
        for (int i = 0; i + 1 < depth; ++i) hidden.push_back(2 + static_cast<int>(rng.next_below(15)));
        int input_dim = 2 + static_cast<int>(rng.next_below(15));
        int classes = 2 + static_cast<int>(rng.next_below(4));
        ModelSpec spec = ModelSpec::mlp(input_dim, hidden, classes);
        ParameterSet p = init_params(spec, seed);
        Batch batch = oracles::random_batch(spec, 4, seed * 7 + 1);

        Gradients grads = backward(spec, p, batch);
        auto loss = [&]() { return forward(spec, p, batch).loss.mean_loss; };
        double worst = 0.0;
        for (size_t l = 0; l < p.layers.size(); ++l) {
            for (size_t e = 0; e < p.layers[l].values.size(); ++e) {
                double fd = oracles::fd_param_gradient(loss, p.layers[l].values[e], 1e-4);
                double got = grads.layers[l][e];
                worst = std::max(worst, oracles::max_relative_error(got, fd, 1e-6));
            }
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("dead relu path has exactly zero gradient") {
    ModelSpec spec = ModelSpec::mlp(3, {4}, 2);
    ParameterSet p = init_params(spec, 3);
    // unit 0 of the hidden layer can never fire
    p.layers[1].values[0] = -100.0f;
    Batch batch = oracles::random_batch(spec, 8, 5);
    Gradients grads = backward(spec, p, batch);
    for (int i = 0; i < 3; ++i) CHECK(grads.layers[0][static_cast<size_t>(i)] == 0.0);
    CHECK(grads.layers[1][0] == 0.0);
}

TEST_CASE("duplicating the batch leaves mean gradients unchanged") {
    ModelSpec spec = ModelSpec::mlp(5, {6}, 3);
    ParameterSet p = init_params(spec, 9);
    Batch batch = oracles::random_batch(spec, 5, 2);
    Batch doubled = batch;
    doubled.batch_size = 10;
    doubled.inputs.insert(doubled.inputs.end(), batch.inputs.begin(), batch.inputs.end());
    doubled.labels.insert(doubled.labels.end(), batch.labels.begin(), batch.labels.end());

    ForwardResult f1 = forward(spec, p, batch);
    ForwardResult f2 = forward(spec, p, doubled);
    CHECK(f1.loss.mean_loss == doctest::Approx(f2.loss.mean_loss).epsilon(1e-7));

    Gradients g1 = backward(spec, p, batch);
    Gradients g2 = backward(spec, p, doubled);
    for (size_t l = 0; l < g1.layers.size(); ++l)
        for (size_t e = 0; e < g1.layers[l].size(); ++e)
            CHECK(g1.layers[l][e] == doctest::Approx(g2.layers[l][e]).epsilon(1e-7));
}

TEST_CASE("permuting batch order leaves loss and gradients unchanged") {
    ModelSpec spec = ModelSpec::mlp(5, {6}, 3);
    ParameterSet p = init_params(spec, 9);
    Batch batch = oracles::random_batch(spec, 6, 3);
    Batch reversed = batch;
    for (size_t b = 0; b < batch.batch_size; ++b) {
        size_t src = batch.batch_size - 1 - b;
        for (size_t i = 0; i < batch.input_dim; ++i)
            reversed.inputs[b * batch.input_dim + i] = batch.inputs[src * batch.input_dim + i];
        reversed.labels[b] = batch.labels[src];
    }
    ForwardResult f1 = forward(spec, p, batch);
    ForwardResult f2 = forward(spec, p, reversed);
    CHECK(f1.loss.mean_loss == doctest::Approx(f2.loss.mean_loss).epsilon(1e-9));
    Gradients g1 = backward(spec, p, batch);
    Gradients g2 = backward(spec, p, reversed);
    for (size_t l = 0; l < g1.layers.size(); ++l)
        for (size_t e = 0; e < g1.layers[l].size(); ++e)
            CHECK(g1.layers[l][e] == doctest::Approx(g2.layers[l][e]).epsilon(1e-9));
}

TEST_CASE("train with zero learning rate returns init exactly") {
    ModelSpec spec = ModelSpec::mlp(2, {4}, 2);
    ParameterSet init = init_params(spec, 1);
    TrainConfig cfg;
    cfg.opt.learning_rate = 0.0;
    cfg.epochs = 3;
    cfg.seed = 4;
    auto data = oracles::separable_points(40, 8);
    TrainResult r = train(spec, init, data, cfg);
    CHECK(r.params == init);
    CHECK(r.epoch_loss.size() == 3);
}

TEST_CASE("train solves a linearly separable toy set") {
    ModelSpec spec = ModelSpec::mlp(2, {8}, 2);
    ParameterSet init = init_params(spec, 1);
    auto data = oracles::separable_points(200, 8);
    TrainConfig cfg;
    cfg.opt.learning_rate = 1e-2;
    cfg.epochs = 100;
    cfg.batch_size = 32;
    cfg.seed = 4;
    TrainResult r = train(spec, init, data, cfg);
    EvalResult eval = evaluate(spec, r.params, data);
    CHECK(eval.accuracy >= 0.99);
}

TEST_CASE("training is bit-deterministic per seed") {
    ModelSpec spec = ModelSpec::mlp(2, {6}, 2);
    ParameterSet init = init_params(spec, 2);
    auto data = oracles::separable_points(64, 3);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 77;
    TrainResult a = train(spec, init, data, cfg);
    TrainResult b = train(spec, init, data, cfg);
    CHECK(a.params == b.params);
    cfg.seed = 78;
    TrainResult c = train(spec, init, data, cfg);
    CHECK(a.params != c.params);
}

TEST_CASE("divergence raises a train error naming the epoch") {
    ModelSpec spec = ModelSpec::mlp(2, {4}, 2);
    ParameterSet init = init_params(spec, 1);
    auto data = oracles::separable_points(32, 8);
    TrainConfig cfg;
    cfg.opt.kind = OptimizerKind::sgd;
    cfg.opt.learning_rate = 1e30; // overflows float parameters within a few steps
    cfg.epochs = 8;
    try {
        train(spec, init, data, cfg);
        FAIL("expected TrainError");
    } catch (const TrainError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("sgd and adamw make different but finite updates") {
    ModelSpec spec = ModelSpec::mlp(2, {4}, 2);
    ParameterSet init = init_params(spec, 1);
    auto data = oracles::separable_points(32, 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 5;
    cfg.opt.kind = OptimizerKind::sgd;
    cfg.opt.weight_decay = 0.0;
    TrainResult s = train(spec, init, data, cfg);
    cfg.opt.kind = OptimizerKind::adamw;
    TrainResult a = train(spec, init, data, cfg);
    CHECK(s.params != a.params);
}
