#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mergeforge/errors.hpp"
#include "mergeforge/hierarchy.hpp"
#include "mergeforge/rng.hpp"
#include "support/oracles.hpp"

using namespace mergeforge;

namespace {

TaskVector named_vector(const ModelSpec& spec, const ParameterSet& like, const std::string& name,
                        const std::vector<float>& direction) {
    size_t idx = 0;
    return oracles::make_task_vector(
        spec, like,
        [&](size_t, size_t) {
            float v = idx < direction.size() ? direction[idx] : 0.0f;
            ++idx;
            return v;
        },
        name);
}

} // namespace

TEST_CASE("two models force the only possible plan") {
    ModelSpec spec = ModelSpec::mlp(2, {}, 2);
    ParameterSet pre = zero_params(spec);
    std::vector<TaskVector> tvs{named_vector(spec, pre, "a", {1, 0}),
                                named_vector(spec, pre, "b", {0, 1})};
    MergePlan plan = build_plan_by_similarity(tvs, 2);
    CHECK(plan.root.children.size() == 2);
    CHECK(plan.root.children[0].leaf_task == "a");
    CHECK(plan.root.children[1].leaf_task == "b");
}

TEST_CASE("similar pairs group together (k = 4, exhaustive oracle)") {
    ModelSpec spec = ModelSpec::mlp(2, {}, 2);
    ParameterSet pre = zero_params(spec);
    // a/a2 nearly identical, b/b2 nearly identical, cross pairs negative
    std::vector<TaskVector> tvs{
        named_vector(spec, pre, "a", {1.0f, 0.05f, 0, 0}),
        named_vector(spec, pre, "b2", {-0.95f, 1.0f, 0, 0}),
        named_vector(spec, pre, "a2", {0.98f, 0.0f, 0, 0}),
        named_vector(spec, pre, "b", {-1.0f, 0.97f, 0, 0}),
    };
    MergePlan plan = build_plan_by_similarity(tvs, 2);

    // oracle: enumerate the three pairings of 4 items, pick the one whose
    // within-group mean cosine is maximal
    auto flat = [&](size_t i) { return flatten(tvs[i]); };
    auto cos = [&](size_t x, size_t y) {
        auto a = flat(x), b = flat(y);
        double dot = 0, na = 0, nb = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / std::sqrt(na * nb);
    };
    const std::vector<std::vector<std::pair<size_t, size_t>>> pairings{
        {{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}, {{0, 3}, {1, 2}}};
    double best = -2;
    size_t best_idx = 0;
    for (size_t i = 0; i < pairings.size(); ++i) {
        double score = (cos(pairings[i][0].first, pairings[i][0].second) +
                        cos(pairings[i][1].first, pairings[i][1].second)) / 2.0;
        if (score > best) {
            best = score;
            best_idx = i;
        }
    }
    CHECK(best_idx == 1); // {a,a2} and {b2,b}

    REQUIRE(plan.root.children.size() == 2);
    std::set<std::string> g0, g1;
    for (const auto& c : plan.root.children[0].children) g0.insert(c.leaf_task);
    for (const auto& c : plan.root.children[1].children) g1.insert(c.leaf_task);
    CHECK(g0 == std::set<std::string>{"a", "a2"});
    CHECK(g1 == std::set<std::string>{"b", "b2"});
}

TEST_CASE("fan-in equal to k gives a flat single-level plan") {
    ModelSpec spec = ModelSpec::mlp(2, {}, 2);
    ParameterSet pre = zero_params(spec);
    std::vector<TaskVector> tvs;
    Prng rng(3);
    for (int i = 0; i < 5; ++i)
        tvs.push_back(named_vector(spec, pre, "t" + std::to_string(i),
                                   {static_cast<float>(rng.next_normal()),
                                    static_cast<float>(rng.next_normal()),
                                    static_cast<float>(rng.next_normal()), 0}));
    MergePlan plan = build_plan_by_similarity(tvs, 5);
    CHECK(plan.root.children.size() == 5);
    for (const auto& c : plan.root.children) CHECK(c.is_leaf());
}

TEST_CASE("zero vectors still get planned") {
    ModelSpec spec = ModelSpec::mlp(2, {}, 2);
    ParameterSet pre = zero_params(spec);
    std::vector<TaskVector> tvs{named_vector(spec, pre, "a", {0, 0}),
                                named_vector(spec, pre, "b", {0, 0}),
                                named_vector(spec, pre, "c", {1, 0})};
    MergePlan plan = build_plan_by_similarity(tvs, 2);
    std::vector<std::string> leaves = plan_leaves(plan);
    std::sort(leaves.begin(), leaves.end());
    CHECK(leaves == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("plan json round-trips") {
    MergePlan plan = plan_from_json(R"([["a","b"],["c",["d","e"]]])", 2);
    CHECK(plan_to_json(plan) == R"([["a","b"],["c",["d","e"]]])");
    std::vector<std::string> tasks{"a", "b", "c", "d", "e"};
    CHECK_NOTHROW(validate_plan(plan, tasks));
}

TEST_CASE("plan validation catches structural problems") {
    std::vector<std::string> tasks{"a", "b", "c"};
    CHECK_THROWS_AS(validate_plan(plan_from_json(R"(["a","b","c"])", 2), tasks), ConfigError);
    CHECK_THROWS_AS(validate_plan(plan_from_json(R"([["a","b"],"a"])", 2), tasks), ConfigError);
    CHECK_THROWS_AS(validate_plan(plan_from_json(R"([["a","b"]])", 2), tasks), ConfigError);
    CHECK_THROWS_AS(plan_from_json(R"({"not":"a plan"})", 2), ConfigError);
    CHECK_NOTHROW(validate_plan(plan_from_json(R"([["a","b"],"c"])", 2), tasks));
}

namespace {

struct HierSetup {
    ModelSpec spec = ModelSpec::mlp(2, {8}, 2);
    ParameterSet pretrained;
    std::vector<NamedModel> models;
    std::vector<FitTask> validation;
};

// four related binary tasks over 2d points with rotated boundaries
HierSetup make_hier_setup(int k) {
    HierSetup s;
    s.pretrained = init_params(s.spec, 11);
    for (int t = 0; t < k; ++t) {
        double angle = 0.3 * t;
        Prng rng(100 + static_cast<uint64_t>(t));
        std::vector<Example> rows;
        for (int i = 0; i < 120; ++i) {
            float a = static_cast<float>(rng.next_normal());
            float b = static_cast<float>(rng.next_normal());
            double score = std::cos(angle) * a + std::sin(angle) * b;
            rows.push_back({{a, b}, score > 0 ? 1 : 0});
        }
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.opt.learning_rate = 5e-3;
        cfg.seed = 200 + static_cast<uint64_t>(t);
        std::string name = "task" + std::to_string(t);
        s.models.push_back({name, train(s.spec, s.pretrained, rows, cfg).params});
        std::vector<Example> val(rows.begin(), rows.begin() + 24);
        s.validation.push_back({name, val});
    }
    return s;
}

} // namespace

TEST_CASE("flat plan reproduces the flat fit bit-identically") {
    HierSetup s = make_hier_setup(3);
    std::vector<TaskVector> tvs;
    for (const auto& m : s.models)
        tvs.push_back(compute_task_vector(m.params, s.pretrained, m.task_name));

    FitConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 55;
    MergePlan plan = build_plan_by_similarity(tvs, 3);
    ExecResult exec = execute_plan(plan, s.spec, s.pretrained, s.models, s.validation, cfg);
    FitResult direct = fit(s.spec, s.pretrained, s.models, s.validation, cfg);

    CHECK(exec.merged == direct.merged);
    CHECK(exec.reports.size() == 1);
    CHECK(exec.reports[0].weights == direct.weights);
    CHECK(exec.peak_concurrent_models == 4); // 3 children + the model being formed
}

TEST_CASE("pairwise execution over four models peaks at three residents") {
    HierSetup s = make_hier_setup(4);
    std::vector<TaskVector> tvs;
    for (const auto& m : s.models)
        tvs.push_back(compute_task_vector(m.params, s.pretrained, m.task_name));

    FitConfig cfg;
    cfg.epochs = 6;
    cfg.seed = 56;
    MergePlan plan = build_plan_by_similarity(tvs, 2);
    ExecResult exec = execute_plan(plan, s.spec, s.pretrained, s.models, s.validation, cfg);

    CHECK(exec.peak_concurrent_models == 3);
    CHECK(exec.peak_concurrent_models <= plan.fan_in_limit + 1);
    CHECK(exec.reports.size() == 3); // two pair nodes + root

    // root covers everything exactly once
    std::vector<std::string> all;
    for (const auto& m : s.models) all.push_back(m.task_name);
    std::sort(all.begin(), all.end());
    CHECK(exec.reports.back().covered_tasks == all);
    CHECK(exec.reports.back().path == "");
}

TEST_CASE("node fits read only their own validation data") {
    HierSetup s = make_hier_setup(4);
    std::vector<TaskVector> tvs;
    for (const auto& m : s.models)
        tvs.push_back(compute_task_vector(m.params, s.pretrained, m.task_name));
    FitConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 57;
    MergePlan plan = build_plan_by_similarity(tvs, 2);
    ExecResult exec = execute_plan(plan, s.spec, s.pretrained, s.models, s.validation, cfg);
    for (const auto& report : exec.reports)
        CHECK(report.accessed_validation_tasks == report.covered_tasks);
}

TEST_CASE("hierarchical result stays close to the flat fit on related tasks") {
    HierSetup s = make_hier_setup(4);
    std::vector<TaskVector> tvs;
    for (const auto& m : s.models)
        tvs.push_back(compute_task_vector(m.params, s.pretrained, m.task_name));
    FitConfig cfg;
    cfg.epochs = 40;
    cfg.seed = 58;
    ExecResult hier = execute_plan(build_plan_by_similarity(tvs, 2), s.spec, s.pretrained,
                                   s.models, s.validation, cfg);
    FitResult flat = fit(s.spec, s.pretrained, s.models, s.validation, cfg);

    double hier_acc = 0.0, flat_acc = 0.0;
    for (const auto& t : s.validation) {
        hier_acc += evaluate(s.spec, hier.merged, t.validation).accuracy;
        flat_acc += evaluate(s.spec, flat.merged, t.validation).accuracy;
    }
    hier_acc /= static_cast<double>(s.validation.size());
    flat_acc /= static_cast<double>(s.validation.size());
    CHECK(std::abs(hier_acc - flat_acc) <= 0.10);
}

TEST_CASE("execution rejects plans that do not match the models") {
    HierSetup s = make_hier_setup(2);
    FitConfig cfg;
    cfg.epochs = 2;
    MergePlan plan = plan_from_json(R"(["task0","nope"])", 2);
    CHECK_THROWS_AS(execute_plan(plan, s.spec, s.pretrained, s.models, s.validation, cfg),
                    ConfigError);
}

TEST_CASE("derived seeds differ per node but root matches the flat seed") {
    HierSetup s = make_hier_setup(4);
    std::vector<TaskVector> tvs;
    for (const auto& m : s.models)
        tvs.push_back(compute_task_vector(m.params, s.pretrained, m.task_name));
    FitConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 60;
    ExecResult a = execute_plan(build_plan_by_similarity(tvs, 2), s.spec, s.pretrained, s.models,
                                s.validation, cfg);
    ExecResult b = execute_plan(build_plan_by_similarity(tvs, 2), s.spec, s.pretrained, s.models,
                                s.validation, cfg);
    CHECK(a.merged == b.merged); // deterministic end to end
    cfg.seed = 61;
    ExecResult c = execute_plan(build_plan_by_similarity(tvs, 2), s.spec, s.pretrained, s.models,
                                s.validation, cfg);
    CHECK(a.merged != c.merged);
}
