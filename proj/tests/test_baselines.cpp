#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mergeforge/baselines.hpp"
#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"
#include "support/oracles.hpp"

using namespace mergeforge;

namespace {

ModelSpec tiny_spec() {
    return ModelSpec::mlp(2, {}, 2); // dense 2x2 + bias 2
}

std::vector<TaskVector> vectors_from_columns(const ModelSpec& spec, const ParameterSet& like,
                                             const std::vector<std::vector<double>>& columns) {
    // columns[c] lists one value per model; coordinate c of model i gets
    // columns[c][i]; coordinates beyond the provided columns are zero
    size_t k = columns.empty() ? 0 : columns[0].size();
    std::vector<TaskVector> tvs;
    for (size_t i = 0; i < k; ++i) {
        size_t flat = 0;
        tvs.push_back(oracles::make_task_vector(
            spec, like,
            [&columns, i, &flat](size_t, size_t) {
                double v = flat < columns.size() ? columns[flat][i] : 0.0;
                ++flat;
                return v;
            },
            "m" + std::to_string(i)));
    }
    return tvs;
}

} // namespace

TEST_CASE("task arithmetic identities") {
    ModelSpec spec = ModelSpec::mlp(4, {6}, 3);
    ParameterSet pre = init_params(spec, 1);
    ParameterSet fine = init_params(spec, 2);
    std::vector<TaskVector> tvs{compute_task_vector(fine, pre, "t")};

    CHECK(merge_task_arithmetic(pre, tvs, 0.0) == pre);
    CHECK(merge_task_arithmetic(pre, tvs, 1.0) == fine);
}

TEST_CASE("task arithmetic sums task vectors") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);
    auto tvs = vectors_from_columns(spec, pre, {{1.0, 0.0}, {0.0, 1.0}});
    ParameterSet merged = merge_task_arithmetic(pre, tvs, 0.3);
    CHECK(merged.layers[0].values[0] == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(merged.layers[0].values[1] == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(merged.layers[0].values[2] == 0.0f);
}

TEST_CASE("dare with p = 0 is the identity") {
    ModelSpec spec = ModelSpec::mlp(3, {4}, 2);
    ParameterSet pre = init_params(spec, 3);
    TaskVector tv = compute_task_vector(init_params(spec, 4), pre, "t");
    CHECK(dare_sparsify(tv, 0.0, 123, 0) == tv);
    std::vector<TaskVector> tvs{tv};
    CHECK(merge_dare(pre, tvs, 0.0, 0.7, 123) == merge_task_arithmetic(pre, tvs, 0.7));
    CHECK(merge_dare(pre, tvs, 0.5, 0.0, 123) == pre);
}

TEST_CASE("dare rescales survivors by 1/(1-p)") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);
    auto tvs = vectors_from_columns(spec, pre, {{2.0}, {4.0}});
    // find a seed whose mask keeps both of the first two coordinates
    for (uint64_t seed = 0;; ++seed) {
        TaskVector sparse = dare_sparsify(tvs[0], 0.5, seed, 0);
        double a = sparse.layers[0].values[0];
        double b = sparse.layers[0].values[1];
        if (a != 0.0 && b != 0.0) {
            CHECK(a == 4.0);
            CHECK(b == 8.0);
            break;
        }
        REQUIRE(seed < 64); // keeping 2 coordinates at p=0.5 cannot be this rare
    }
}

TEST_CASE("dare rejects p = 1 and p outside range") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);
    auto tvs = vectors_from_columns(spec, pre, {{1.0}});
    CHECK_THROWS_AS(dare_sparsify(tvs[0], 1.0, 1, 0), ConfigError);
    CHECK_THROWS_AS(dare_sparsify(tvs[0], -0.1, 1, 0), ConfigError);
}

TEST_CASE("dare is unbiased: monte-carlo mean approaches tau") {
    // smaller replica of the acceptance check, 2000 masks on 64 entries
    ModelSpec spec = ModelSpec::mlp(8, {}, 8); // dense 64 + bias 8
    ParameterSet pre = zero_params(spec);
    Prng rng(42);
    TaskVector tv = oracles::make_task_vector(spec, pre, [&](size_t, size_t) {
        return static_cast<float>(0.5 + 0.5 * rng.next_u01()); // all >= 0.1
    });
    const int trials = 2000;
    std::vector<double> mean(64, 0.0);
    for (int t = 0; t < trials; ++t) {
        TaskVector sparse = dare_sparsify(tv, 0.5, static_cast<uint64_t>(t), 0);
        for (size_t e = 0; e < 64; ++e) mean[e] += sparse.layers[0].values[e];
    }
    for (size_t e = 0; e < 64; ++e) {
        mean[e] /= trials;
        double want = tv.layers[0].values[e];
        CHECK(std::abs(mean[e] - want) / want < 0.08); // ~3.5 sigma at n=2000
    }
}

TEST_CASE("dare mask is independent of element evaluation order") {
    ModelSpec spec = ModelSpec::mlp(3, {4}, 2);
    ParameterSet pre = init_params(spec, 3);
    TaskVector tv = compute_task_vector(init_params(spec, 4), pre, "t");
    TaskVector a = dare_sparsify(tv, 0.6, 9, 2);
    TaskVector b = dare_sparsify(tv, 0.6, 9, 2);
    CHECK(a == b);
    CHECK(dare_sparsify(tv, 0.6, 9, 3) != a);  // task index keys the mask
    CHECK(dare_sparsify(tv, 0.6, 10, 2) != a); // so does the seed
}

TEST_CASE("ties election follows the sign rule") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);

    SUBCASE("positives outweigh: {+0.3, +0.2, -0.1} -> +0.25") {
        auto tvs = vectors_from_columns(spec, pre, {{0.3, 0.2, -0.1}});
        TaskVector out = ties_merge_vector(tvs, 1.0);
        CHECK(out.layers[0].values[0] == doctest::Approx(0.25).epsilon(1e-7));
    }
    SUBCASE("negative outweighs: {+0.1, -0.4} -> -0.4") {
        auto tvs = vectors_from_columns(spec, pre, {{0.1, -0.4}});
        TaskVector out = ties_merge_vector(tvs, 1.0);
        CHECK(out.layers[0].values[0] == doctest::Approx(-0.4).epsilon(1e-7));
    }
    SUBCASE("exact tie goes positive: {+0.2, -0.2} -> +0.2") {
        auto tvs = vectors_from_columns(spec, pre, {{0.2, -0.2}});
        TaskVector out = ties_merge_vector(tvs, 1.0);
        CHECK(out.layers[0].values[0] == doctest::Approx(0.2).epsilon(1e-7));
    }
    SUBCASE("identical vectors are a fixed point at density 1") {
        auto tvs = vectors_from_columns(spec, pre,
                                        {{0.5, 0.5, 0.5}, {-0.25, -0.25, -0.25}, {0.0, 0.0, 0.0}});
        TaskVector out = ties_merge_vector(tvs, 1.0);
        CHECK(out.layers[0].values[0] == doctest::Approx(0.5).epsilon(1e-7));
        CHECK(out.layers[0].values[1] == doctest::Approx(-0.25).epsilon(1e-7));
        CHECK(out.layers[0].values[2] == 0.0);
    }
}

TEST_CASE("ties matches brute force on exhaustive small inputs") {
    // every ordered tuple over the value set, k in {1, 2, 3}, density 1
    const std::vector<double> values{-0.4, -0.1, 0.0, 0.1, 0.2, 0.3};
    ModelSpec spec = ModelSpec::mlp(6, {36}, 6);
    ParameterSet pre = zero_params(spec);
    for (size_t k = 1; k <= 3; ++k) {
        size_t combos = 1;
        for (size_t i = 0; i < k; ++i) combos *= values.size();
        // coordinate c encodes combo index c
        std::vector<std::vector<double>> columns(combos, std::vector<double>(k));
        for (size_t c = 0; c < combos; ++c) {
            size_t rest = c;
            for (size_t i = 0; i < k; ++i) {
                columns[c][i] = values[rest % values.size()];
                rest /= values.size();
            }
        }
        REQUIRE(combos <= spec.layers[0].element_count());
        auto tvs = vectors_from_columns(spec, pre, columns);
        TaskVector out = ties_merge_vector(tvs, 1.0);
        for (size_t c = 0; c < combos; ++c) {
            double want = oracles::ties_elect_coordinate(columns[c]);
            CHECK(static_cast<double>(out.layers[0].values[c]) == doctest::Approx(want).epsilon(1e-7));
        }
    }
}

TEST_CASE("ties trim keeps the top entries by magnitude") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);
    // 6 coordinates total (4 dense + 2 bias)
    auto tvs = vectors_from_columns(
        spec, pre, {{0.5}, {-0.8}, {0.1}, {-0.05}, {0.3}, {0.2}});
    TaskVector trimmed = ties_trim(tvs[0], 0.5, TrimScope::global); // keep ceil(3) = 3
    std::vector<double> flat = flatten(trimmed);
    CHECK(flat[0] == 0.5);
    CHECK(flat[1] == -0.8);
    CHECK(flat[2] == 0.0);
    CHECK(flat[3] == 0.0);
    CHECK(flat[4] == 0.3);
    CHECK(flat[5] == 0.0);
}

TEST_CASE("per-layer trim keeps top entries within each layer") {
    ModelSpec spec = tiny_spec();
    ParameterSet pre = zero_params(spec);
    auto tvs = vectors_from_columns(
        spec, pre, {{0.5}, {-0.8}, {0.1}, {-0.05}, {0.01}, {0.02}});
    TaskVector trimmed = ties_trim(tvs[0], 0.5, TrimScope::per_layer);
    std::vector<double> flat = flatten(trimmed);
    // dense layer keeps 2 of 4, bias keeps 1 of 2
    CHECK(flat[0] == 0.5);
    CHECK(flat[1] == -0.8);
    CHECK(flat[2] == 0.0);
    CHECK(flat[3] == 0.0);
    CHECK(flat[4] == 0.0);
    CHECK(flat[5] == 0.02);
}

TEST_CASE("ties magnitude never exceeds the per-coordinate max") {
    ModelSpec spec = ModelSpec::mlp(4, {4}, 4);
    ParameterSet pre = zero_params(spec);
    Prng rng(77);
    std::vector<TaskVector> tvs;
    for (int i = 0; i < 3; ++i)
        tvs.push_back(oracles::make_task_vector(
            spec, pre, [&](size_t, size_t) { return static_cast<float>(rng.next_normal()); },
            "m" + std::to_string(i)));
    TaskVector out = ties_merge_vector(tvs, 0.7);
    for (size_t l = 0; l < out.layers.size(); ++l)
        for (size_t e = 0; e < out.layers[l].values.size(); ++e) {
            double max_abs = 0.0;
            for (const auto& tv : tvs)
                max_abs = std::max(max_abs, std::abs(static_cast<double>(tv.layers[l].values[e])));
            CHECK(std::abs(static_cast<double>(out.layers[l].values[e])) <= max_abs + 1e-12);
        }
}

TEST_CASE("merge_ties identities") {
    ModelSpec spec = ModelSpec::mlp(4, {6}, 3);
    ParameterSet pre = init_params(spec, 1);
    ParameterSet fine = init_params(spec, 2);
    std::vector<TaskVector> tvs{compute_task_vector(fine, pre, "t")};
    CHECK(merge_ties(pre, tvs, 1.0, 0.0) == pre);
    CHECK(merge_ties(pre, tvs, 1.0, 1.0) == fine); // single model, full density
}

namespace {

struct GridSetup {
    ModelSpec spec = ModelSpec::mlp(2, {8}, 2);
    ParameterSet pretrained;
    std::vector<TaskVector> tvs;
    std::vector<Example> val;
};

GridSetup make_grid_setup() {
    GridSetup s;
    auto data = oracles::separable_points(240, 12);
    std::vector<Example> train_rows(data.begin(), data.begin() + 200);
    s.val.assign(data.begin() + 200, data.end());
    s.pretrained = init_params(s.spec, 3);
    TrainConfig cfg;
    cfg.epochs = 120;
    cfg.opt.learning_rate = 1e-2;
    cfg.seed = 2;
    ParameterSet tuned = train(s.spec, s.pretrained, train_rows, cfg).params;
    s.tvs.push_back(compute_task_vector(tuned, s.pretrained, "toy"));
    return s;
}

} // namespace

TEST_CASE("grid search finds the recovery point on a single-model merge") {
    GridSetup s = make_grid_setup();
    std::vector<ValidationTask> validation{{"toy", &s.val}};
    auto merge_at = [&](double l) { return merge_task_arithmetic(s.pretrained, s.tvs, l); };

    SUBCASE("singleton grid returns that lambda") {
        std::vector<double> grid{0.4};
        GridSearchResult r = grid_search_lambda(merge_at, grid, s.spec, validation);
        CHECK(r.best_lambda == 0.4);
        CHECK(r.curve.size() == 1);
    }
    SUBCASE("untrained pretrained loses to the fine-tuned point") {
        std::vector<double> grid{0.0, 1.0};
        GridSearchResult r = grid_search_lambda(merge_at, grid, s.spec, validation);
        CHECK(r.best_lambda == 1.0);
        CHECK(r.curve[0].mean_accuracy < r.curve[1].mean_accuracy);
    }
    SUBCASE("curve preserves grid order and size") {
        std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
        GridSearchResult r = grid_search_lambda(merge_at, grid, s.spec, validation);
        REQUIRE(r.curve.size() == 5);
        for (size_t i = 0; i < grid.size(); ++i) CHECK(r.curve[i].lambda == grid[i]);
    }
}

TEST_CASE("lambda selection ignores common rescaling and breaks ties low") {
    std::vector<LambdaCurvePoint> curve{
        {0.1, 0.50, {0.5, 0.5}}, {0.2, 0.75, {0.7, 0.8}}, {0.3, 0.75, {0.8, 0.7}},
        {0.4, 0.60, {0.6, 0.6}}};
    CHECK(pick_best_lambda(curve) == 0.2); // tie between 0.2 and 0.3 goes low
    for (auto& p : curve) p.mean_accuracy *= 0.37;
    CHECK(pick_best_lambda(curve) == 0.2);
}

TEST_CASE("grid search rejects bad inputs") {
    GridSetup s = make_grid_setup();
    std::vector<ValidationTask> validation{{"toy", &s.val}};
    auto merge_at = [&](double l) { return merge_task_arithmetic(s.pretrained, s.tvs, l); };
    std::vector<double> empty_grid;
    CHECK_THROWS_AS(grid_search_lambda(merge_at, empty_grid, s.spec, validation), ConfigError);
    std::vector<double> bad_grid{0.5, 1.5};
    CHECK_THROWS_AS(grid_search_lambda(merge_at, bad_grid, s.spec, validation), ConfigError);
    std::vector<Example> no_examples;
    std::vector<ValidationTask> empty_val{{"toy", &no_examples}};
    std::vector<double> grid{0.5};
    CHECK_THROWS_AS(grid_search_lambda(merge_at, grid, s.spec, empty_val), ConfigError);
}
