#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mergeforge/config.hpp"
#include "mergeforge/hierarchy.hpp"

namespace mergeforge {

enum class Method {
    pretrained,
    individual,
    multitask,
    task_arithmetic,
    dare_ta,
    ties,
    dare_ties,
    supermerge,
    supermerge_no_tanh,
    hierarchical,
};

Method method_from_string(const std::string& s);
const char* method_id(Method m);
const char* method_display_name(Method m);

// Reference rows (pretrained, individual, multitask) are reported but never
// ranked; ranks are computed over the merging methods only.
bool method_is_ranked(Method m);

struct TrainedSuite {
    ModelSpec spec;
    TaskSuite suite;
    ParameterSet pretrained;
    std::vector<NamedModel> fine_tuned;   // in-domain task order
    std::vector<TaskVector> task_vectors; // same order
};

// Generate the suite, train the pretrained model on the mixture, fine-tune
// one model per in-domain task.
TrainedSuite build_trained_suite(const BenchConfig& cfg);

struct MethodOutcome {
    Method method = Method::pretrained;
    std::map<std::string, double> in_domain_accuracy;  // task -> accuracy in [0,1]
    std::map<std::string, double> out_domain_accuracy; // empty for 'individual'
    std::map<std::string, int> in_domain_rank;         // ranked methods only
    std::map<std::string, int> out_domain_rank;
    double mean_in_accuracy = 0.0;
    double mean_out_accuracy = 0.0;
    double mean_in_rank = 0.0;
    double mean_out_rank = 0.0;
    std::optional<double> lambda_used;
    std::optional<GridSearchResult> lambda_sweep;
};

struct BenchResult {
    BenchConfig config;
    TrainedSuite trained;
    std::vector<MethodOutcome> outcomes; // config method order
    std::optional<MergeWeights> supermerge_weights;
    std::optional<ExecResult> hierarchical_exec;
};

BenchResult run_benchmark(const BenchConfig& cfg);

// Competition ranking on accuracies rounded to 4 decimal places: tied methods
// share the best rank, the next distinct value skips past the tie block.
std::map<std::string, int> competition_ranks(const std::vector<std::pair<std::string, double>>& accuracy);

const MethodOutcome* find_outcome(const BenchResult& result, Method m);

} // namespace mergeforge
