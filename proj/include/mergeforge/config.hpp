#pragma once

#include <string>
#include <vector>

#include "mergeforge/baselines.hpp"
#include "mergeforge/cost.hpp"
#include "mergeforge/nn.hpp"
#include "mergeforge/suite.hpp"
#include "mergeforge/supermerge.hpp"

namespace mergeforge {

struct TrainingConfig {
    std::vector<int> hidden_dims{64, 64, 48};
    OptimizerConfig opt{OptimizerKind::adamw, 5e-3, 0.01, 0.9, 0.999, 1e-8};
    int epochs = 30;
    int batch_size = 32;
    int pretrain_epochs = 4;
};

struct MergeHyperConfig {
    std::vector<double> lambda_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double dare_p = 0.9;
    double ties_density = 0.2;
    TrimScope trim_scope = TrimScope::global;
};

struct HierConfig {
    int fan_in_limit = 2;
    std::string plan_json; // empty = group by task-vector similarity
};

// Config file sections: suite, training, methods, supermerge, hierarchical,
// cost. "methods" holds both the list of methods to run and the baseline
// merge hyperparameters.
struct BenchConfig {
    SuiteConfig suite;
    TrainingConfig training;
    std::vector<std::string> methods{"pretrained",  "individual", "multitask",
                                     "task_arithmetic", "dare_ta",    "ties",
                                     "dare_ties",   "supermerge", "supermerge_no_tanh",
                                     "hierarchical"};
    MergeHyperConfig merge;
    FitConfig supermerge;
    HierConfig hierarchical;
    CostConfig cost;
    uint64_t seed = 0;
    std::string out_dir = "bench_out";
};

// Parse a config file; keys not present keep their defaults. Unknown keys are
// a ConfigError so typos do not silently fall back to defaults.
BenchConfig parse_bench_config(const std::string& json_text);
BenchConfig load_bench_config(const std::string& path);
std::string bench_config_to_json(const BenchConfig& cfg);

} // namespace mergeforge
