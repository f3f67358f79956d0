#include "mergeforge/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "mergeforge/checkpoint.hpp"
#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

using nlohmann::json;

namespace {

void collect_leaves(const PlanNode& node, std::vector<std::string>& out) {
    if (node.is_leaf()) {
        out.push_back(node.leaf_task);
        return;
    }
    for (const auto& c : node.children) collect_leaves(c, out);
}

void validate_node(const PlanNode& node, int fan_in_limit) {
    if (node.is_leaf()) {
        if (!node.children.empty())
            throw ConfigError("plan leaf '" + node.leaf_task + "' also has children");
        return;
    }
    if (node.children.size() < 2)
        throw ConfigError("internal plan node needs at least 2 children");
    if (node.children.size() > static_cast<size_t>(fan_in_limit))
        throw ConfigError("plan node has " + std::to_string(node.children.size()) +
                          " children, fan-in limit is " + std::to_string(fan_in_limit));
    for (const auto& c : node.children) validate_node(c, fan_in_limit);
}

json node_to_json(const PlanNode& node) {
    if (node.is_leaf()) return node.leaf_task;
    json arr = json::array();
    for (const auto& c : node.children) arr.push_back(node_to_json(c));
    return arr;
}

PlanNode node_from_json(const json& j) {
    PlanNode node;
    if (j.is_string()) {
        node.leaf_task = j.get<std::string>();
        return node;
    }
    if (!j.is_array()) throw ConfigError("plan nodes must be task names or arrays");
    for (const auto& c : j) node.children.push_back(node_from_json(c));
    return node;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct PlanItem {
    PlanNode node;
    std::vector<double> repr;
    std::string tie_name; // smallest covered task name
};

std::string min_covered(const PlanNode& node) {
    std::vector<std::string> leaves;
    collect_leaves(node, leaves);
    return *std::min_element(leaves.begin(), leaves.end());
}

void sort_children(PlanNode& node) {
    if (node.is_leaf()) return;
    for (auto& c : node.children) sort_children(c);
    std::sort(node.children.begin(), node.children.end(),
              [](const PlanNode& a, const PlanNode& b) { return min_covered(a) < min_covered(b); });
}

} // namespace

std::vector<std::string> plan_leaves(const MergePlan& plan) {
    std::vector<std::string> out;
    collect_leaves(plan.root, out);
    return out;
}

void validate_plan(const MergePlan& plan, std::span<const std::string> task_names) {
    if (plan.fan_in_limit < 2) throw ConfigError("fan_in_limit must be >= 2");
    validate_node(plan.root, plan.fan_in_limit);
    std::vector<std::string> leaves = plan_leaves(plan);
    std::set<std::string> leaf_set(leaves.begin(), leaves.end());
    if (leaf_set.size() != leaves.size()) throw ConfigError("plan repeats a task");
    std::set<std::string> want(task_names.begin(), task_names.end());
    if (leaf_set != want) {
        std::string msg = "plan leaves do not match the model set";
        throw ConfigError(msg);
    }
}

std::string plan_to_json(const MergePlan& plan) {
    return node_to_json(plan.root).dump();
}

MergePlan plan_from_json(const std::string& text, int fan_in_limit) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad plan json: ") + e.what());
    }
    MergePlan plan;
    plan.root = node_from_json(j);
    plan.fan_in_limit = fan_in_limit;
    return plan;
}

MergePlan build_plan_by_similarity(std::span<const TaskVector> task_vectors, int fan_in_limit) {
    if (task_vectors.size() < 2) throw ConfigError("need at least 2 task vectors to plan a merge");
    if (fan_in_limit < 2) throw ConfigError("fan_in_limit must be >= 2");

    std::vector<PlanItem> level;
    for (const auto& tv : task_vectors) {
        if (tv.source_task.empty()) throw ConfigError("task vector without a source task name");
        PlanItem item;
        item.node.leaf_task = tv.source_task;
        item.repr = flatten(tv);
        item.tie_name = tv.source_task;
        level.push_back(std::move(item));
    }
    std::sort(level.begin(), level.end(),
              [](const PlanItem& a, const PlanItem& b) { return a.tie_name < b.tie_name; });

    while (level.size() > 1) {
        std::vector<PlanItem> next;
        std::vector<PlanItem> pending = std::move(level);

        while (!pending.empty()) {
            if (pending.size() == 1) { // odd item passes through to the next level
                next.push_back(std::move(pending.front()));
                pending.clear();
                break;
            }
            // best pair by cosine, ties by name pair
            size_t best_a = 0, best_b = 1;
            double best_sim = -2.0;
            for (size_t a = 0; a < pending.size(); ++a)
                for (size_t b = a + 1; b < pending.size(); ++b) {
                    double sim = cosine(pending[a].repr, pending[b].repr);
                    if (sim > best_sim) {
                        best_sim = sim;
                        best_a = a;
                        best_b = b;
                    }
                }
            std::vector<size_t> group{best_a, best_b};
            while (group.size() < static_cast<size_t>(fan_in_limit) &&
                   group.size() < pending.size()) {
                // closest remaining item by mean similarity to the group
                size_t best_c = pending.size();
                double best_c_sim = -2.0;
                for (size_t c = 0; c < pending.size(); ++c) {
                    if (std::find(group.begin(), group.end(), c) != group.end()) continue;
                    double sim = 0.0;
                    for (size_t g : group) sim += cosine(pending[c].repr, pending[g].repr);
                    sim /= static_cast<double>(group.size());
                    if (sim > best_c_sim) {
                        best_c_sim = sim;
                        best_c = c;
                    }
                }
                if (best_c == pending.size()) break;
                group.push_back(best_c);
            }

            PlanItem merged;
            size_t dim = pending[group[0]].repr.size();
            merged.repr.assign(dim, 0.0);
            for (size_t g : group) {
                merged.node.children.push_back(std::move(pending[g].node));
                for (size_t i = 0; i < dim; ++i) merged.repr[i] += pending[g].repr[i];
            }
            for (size_t i = 0; i < dim; ++i) merged.repr[i] /= static_cast<double>(group.size());
            sort_children(merged.node);
            merged.tie_name = min_covered(merged.node);
            next.push_back(std::move(merged));

            std::vector<size_t> sorted_group = group;
            std::sort(sorted_group.rbegin(), sorted_group.rend());
            for (size_t g : sorted_group) pending.erase(pending.begin() + static_cast<std::ptrdiff_t>(g));
        }
        std::sort(next.begin(), next.end(),
                  [](const PlanItem& a, const PlanItem& b) { return a.tie_name < b.tie_name; });
        level = std::move(next);
    }

    MergePlan plan;
    plan.root = std::move(level.front().node);
    plan.fan_in_limit = fan_in_limit;
    if (plan.root.is_leaf()) throw ConfigError("degenerate plan");
    return plan;
}

namespace {

struct ResidencyMeter {
    int live = 0;
    int peak = 0;
    void acquire(int n = 1) {
        live += n;
        peak = std::max(peak, live);
    }
    void release(int n = 1) { live -= n; }
};

struct NodeRef {
    const PlanNode* node;
    std::string path;
    int depth;
};

void index_nodes(const PlanNode& node, const std::string& path, int depth, std::vector<NodeRef>& out) {
    out.push_back({&node, path, depth});
    for (size_t i = 0; i < node.children.size(); ++i) {
        std::string child_path = path.empty() ? std::to_string(i) : path + "." + std::to_string(i);
        index_nodes(node.children[i], child_path, depth + 1, out);
    }
}

} // namespace

ExecResult execute_plan(const MergePlan& plan, const ModelSpec& spec,
                        const ParameterSet& pretrained, std::span<const NamedModel> models,
                        std::span<const FitTask> validation, const FitConfig& cfg) {
    std::vector<std::string> task_names;
    for (const auto& m : models) task_names.push_back(m.task_name);
    validate_plan(plan, task_names);
    if (plan.root.is_leaf()) throw ConfigError("plan root must merge at least two models");

    std::map<std::string, const FitTask*> validation_by_task;
    for (const auto& t : validation) validation_by_task[t.task_name] = &t;

    // Everything starts spilled; a node checks out only what it merges.
    std::map<std::string, std::vector<uint8_t>> store; // "task:<name>" or "node:<path>"
    for (const auto& m : models) {
        check_congruent(spec, m.params);
        store["task:" + m.task_name] = params_to_bytes(m.params);
    }

    std::vector<NodeRef> nodes;
    index_nodes(plan.root, "", 0, nodes);
    std::vector<NodeRef> internal;
    for (const auto& ref : nodes)
        if (!ref.node->is_leaf()) internal.push_back(ref);
    std::stable_sort(internal.begin(), internal.end(),
                     [](const NodeRef& a, const NodeRef& b) { return a.depth > b.depth; });

    ResidencyMeter meter;
    ExecResult result;

    for (const auto& ref : internal) {
        // check out children
        std::vector<NamedModel> children;
        for (size_t i = 0; i < ref.node->children.size(); ++i) {
            const PlanNode& child = ref.node->children[i];
            std::string key;
            std::string child_name;
            if (child.is_leaf()) {
                key = "task:" + child.leaf_task;
                child_name = child.leaf_task;
            } else {
                std::string child_path =
                    ref.path.empty() ? std::to_string(i) : ref.path + "." + std::to_string(i);
                key = "node:" + child_path;
                std::vector<std::string> covered;
                collect_leaves(child, covered);
                std::sort(covered.begin(), covered.end());
                child_name = covered.front();
                for (size_t c = 1; c < covered.size(); ++c) child_name += "+" + covered[c];
            }
            auto it = store.find(key);
            if (it == store.end()) throw StructuralError("plan execution missing '" + key + "'");
            children.push_back({child_name, params_from_bytes(it->second)});
            store.erase(it);
            meter.acquire();
        }

        std::vector<std::string> covered;
        collect_leaves(*ref.node, covered);
        std::sort(covered.begin(), covered.end());

        std::vector<FitTask> node_validation;
        for (const auto& t : covered) {
            auto it = validation_by_task.find(t);
            if (it == validation_by_task.end())
                throw ConfigError("no validation data for task '" + t + "'");
            node_validation.push_back(*it->second);
        }

        FitConfig node_cfg = cfg;
        node_cfg.seed = ref.path.empty() ? cfg.seed : hash_str(cfg.seed, ref.path);

        meter.acquire(); // the model being formed
        FitResult fitres;
        try {
            fitres = fit(spec, pretrained, children, node_validation, node_cfg);
        } catch (const TrainError& e) {
            throw TrainError("node '" + (ref.path.empty() ? std::string("root") : ref.path) +
                             "': " + e.what());
        }

        NodeReport report;
        report.path = ref.path;
        report.covered_tasks = covered;
        for (const auto& t : node_validation) report.accessed_validation_tasks.push_back(t.task_name);
        report.child_count = static_cast<int>(children.size());
        report.epochs = node_cfg.epochs;
        report.final_validation_loss = fitres.validation_loss.back();
        report.weights = fitres.weights;
        result.reports.push_back(std::move(report));

        store["node:" + ref.path] = params_to_bytes(fitres.merged);
        meter.release(static_cast<int>(children.size()) + 1);
    }

    result.peak_concurrent_models = meter.peak;
    result.merged = params_from_bytes(store.at("node:"));
    return result;
}

} // namespace mergeforge
