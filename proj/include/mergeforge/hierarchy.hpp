#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mergeforge/supermerge.hpp"
#include "mergeforge/task_vector.hpp"

namespace mergeforge {

// A merge plan is a tree: leaves name fine-tuned models, internal nodes merge
// their children. Children are kept sorted by their smallest covered task
// name, which makes plans (and the fits they drive) order-independent.
struct PlanNode {
    std::string leaf_task;          // non-empty marks a leaf
    std::vector<PlanNode> children; // non-empty marks an internal node

    bool is_leaf() const { return !leaf_task.empty(); }
};

struct MergePlan {
    PlanNode root;
    int fan_in_limit = 2;
};

// Collect leaf task names, left to right.
std::vector<std::string> plan_leaves(const MergePlan& plan);

// Structural checks: single root, internal nodes have 2..fan_in_limit
// children, every task in exactly one leaf.
void validate_plan(const MergePlan& plan, std::span<const std::string> task_names);

// Nested-list JSON: a leaf is a task name string, an internal node an array.
std::string plan_to_json(const MergePlan& plan);
MergePlan plan_from_json(const std::string& text, int fan_in_limit);

// Greedy agglomerative grouping by cosine similarity of flattened task
// vectors: repeatedly pair the most similar items, growing each group to at
// most fan_in_limit members, level by level until one root remains. Ties
// break lexicographically by task name. A group's representative vector is
// the mean of its members'.
MergePlan build_plan_by_similarity(std::span<const TaskVector> task_vectors, int fan_in_limit);

struct NodeReport {
    std::string path; // "" for root, else child indices joined by '.'
    std::vector<std::string> covered_tasks;
    std::vector<std::string> accessed_validation_tasks; // data actually handed to the fit
    int child_count = 0;
    int epochs = 0;
    double final_validation_loss = 0.0;
    MergeWeights weights;
};

struct ExecResult {
    ParameterSet merged;
    std::vector<NodeReport> reports; // execution order (deepest level first)
    int peak_concurrent_models = 0;  // max resident ParameterSets, theta_p excluded
};

// Bottom-up, breadth-first execution. Every node fit uses only the validation
// data of its covered tasks; each node's seed derives from (cfg.seed, path)
// with the root using cfg.seed itself, so a flat plan reproduces a flat fit
// exactly. Models are kept serialized between fits; a node checks out its
// children plus one slot for the model being formed, so residency at a node
// is (child count + 1).
ExecResult execute_plan(const MergePlan& plan, const ModelSpec& spec,
                        const ParameterSet& pretrained, std::span<const NamedModel> models,
                        std::span<const FitTask> validation, const FitConfig& cfg);

} // namespace mergeforge
