#include "mergeforge/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "mergeforge/errors.hpp"

namespace mergeforge {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool found = false;
        for (const char* k : known)
            if (it.key() == k) {
                found = true;
                break;
            }
        if (!found) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) {
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

void parse_suite(const json& j, SuiteConfig& cfg) {
    reject_unknown(j, {"k_in", "k_out", "input_dim", "num_classes", "train_size", "val_size",
                       "test_size", "pretrain_per_task", "noise", "ood_blend"},
                   "suite");
    read(j, "k_in", cfg.k_in);
    read(j, "k_out", cfg.k_out);
    read(j, "input_dim", cfg.input_dim);
    read(j, "num_classes", cfg.num_classes);
    read(j, "train_size", cfg.train_size);
    read(j, "val_size", cfg.val_size);
    read(j, "test_size", cfg.test_size);
    read(j, "pretrain_per_task", cfg.pretrain_per_task);
    read(j, "noise", cfg.noise);
    read(j, "ood_blend", cfg.ood_blend);
}

void parse_optimizer(const json& j, OptimizerConfig& opt, const std::string& where) {
    reject_unknown(j, {"kind", "learning_rate", "weight_decay", "beta1", "beta2", "epsilon"},
                   where);
    if (j.contains("kind")) opt.kind = optimizer_kind_from_string(j.at("kind").get<std::string>());
    read(j, "learning_rate", opt.learning_rate);
    read(j, "weight_decay", opt.weight_decay);
    read(j, "beta1", opt.beta1);
    read(j, "beta2", opt.beta2);
    read(j, "epsilon", opt.epsilon);
}

void parse_training(const json& j, TrainingConfig& cfg) {
    reject_unknown(j, {"hidden_dims", "optimizer", "epochs", "batch_size", "pretrain_epochs"},
                   "training");
    read(j, "hidden_dims", cfg.hidden_dims);
    if (j.contains("optimizer")) parse_optimizer(j.at("optimizer"), cfg.opt, "training.optimizer");
    read(j, "epochs", cfg.epochs);
    read(j, "batch_size", cfg.batch_size);
    read(j, "pretrain_epochs", cfg.pretrain_epochs);
}

void parse_methods(const json& j, BenchConfig& cfg) {
    reject_unknown(j, {"run", "lambda_grid", "dare_p", "ties_density", "trim_scope"}, "methods");
    read(j, "run", cfg.methods);
    read(j, "lambda_grid", cfg.merge.lambda_grid);
    read(j, "dare_p", cfg.merge.dare_p);
    read(j, "ties_density", cfg.merge.ties_density);
    if (j.contains("trim_scope")) {
        std::string s = j.at("trim_scope").get<std::string>();
        if (s == "global")
            cfg.merge.trim_scope = TrimScope::global;
        else if (s == "per_layer")
            cfg.merge.trim_scope = TrimScope::per_layer;
        else
            throw ConfigError("trim_scope must be 'global' or 'per_layer'");
    }
}

void parse_supermerge(const json& j, FitConfig& cfg) {
    reject_unknown(j, {"epochs", "batch_size", "optimizer", "init_value", "use_tanh", "balance"},
                   "supermerge");
    read(j, "epochs", cfg.epochs);
    read(j, "batch_size", cfg.batch_size);
    if (j.contains("optimizer")) parse_optimizer(j.at("optimizer"), cfg.opt, "supermerge.optimizer");
    read(j, "init_value", cfg.init_value);
    read(j, "use_tanh", cfg.use_tanh);
    if (j.contains("balance")) {
        std::string s = j.at("balance").get<std::string>();
        if (s == "uniform_examples")
            cfg.balance = TaskBalance::uniform_examples;
        else if (s == "uniform_tasks")
            cfg.balance = TaskBalance::uniform_tasks;
        else
            throw ConfigError("balance must be 'uniform_examples' or 'uniform_tasks'");
    }
}

void parse_hierarchical(const json& j, HierConfig& cfg) {
    reject_unknown(j, {"fan_in_limit", "plan"}, "hierarchical");
    read(j, "fan_in_limit", cfg.fan_in_limit);
    if (j.contains("plan") && !j.at("plan").is_null()) cfg.plan_json = j.at("plan").dump();
}

void parse_cost(const json& j, CostConfig& cfg) {
    reject_unknown(j, {"fwd_coeff", "train_coeff", "merge_backward_coeff", "global_scale", "note"},
                   "cost");
    read(j, "fwd_coeff", cfg.fwd_coeff);
    read(j, "train_coeff", cfg.train_coeff);
    read(j, "merge_backward_coeff", cfg.merge_backward_coeff);
    read(j, "global_scale", cfg.global_scale);
}

json optimizer_to_json(const OptimizerConfig& opt) {
    json j;
    j["kind"] = opt.kind == OptimizerKind::adamw ? "adamw" : "sgd";
    j["learning_rate"] = opt.learning_rate;
    j["weight_decay"] = opt.weight_decay;
    j["beta1"] = opt.beta1;
    j["beta2"] = opt.beta2;
    j["epsilon"] = opt.epsilon;
    return j;
}

} // namespace

BenchConfig parse_bench_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config json: ") + e.what());
    }
    reject_unknown(doc, {"suite", "training", "methods", "supermerge", "hierarchical", "cost",
                         "seed", "out_dir"},
                   "config");
    BenchConfig cfg;
    if (doc.contains("suite")) parse_suite(doc.at("suite"), cfg.suite);
    if (doc.contains("training")) parse_training(doc.at("training"), cfg.training);
    if (doc.contains("methods")) parse_methods(doc.at("methods"), cfg);
    if (doc.contains("supermerge")) parse_supermerge(doc.at("supermerge"), cfg.supermerge);
    if (doc.contains("hierarchical")) parse_hierarchical(doc.at("hierarchical"), cfg.hierarchical);
    if (doc.contains("cost")) parse_cost(doc.at("cost"), cfg.cost);
    read(doc, "seed", cfg.seed);
    read(doc, "out_dir", cfg.out_dir);
    return cfg;
}

BenchConfig load_bench_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_bench_config(text);
}

std::string bench_config_to_json(const BenchConfig& cfg) {
    json doc;
    doc["suite"] = {{"k_in", cfg.suite.k_in},
                    {"k_out", cfg.suite.k_out},
                    {"input_dim", cfg.suite.input_dim},
                    {"num_classes", cfg.suite.num_classes},
                    {"train_size", cfg.suite.train_size},
                    {"val_size", cfg.suite.val_size},
                    {"test_size", cfg.suite.test_size},
                    {"pretrain_per_task", cfg.suite.pretrain_per_task},
                    {"noise", cfg.suite.noise},
                    {"ood_blend", cfg.suite.ood_blend}};
    doc["training"] = {{"hidden_dims", cfg.training.hidden_dims},
                       {"optimizer", optimizer_to_json(cfg.training.opt)},
                       {"epochs", cfg.training.epochs},
                       {"batch_size", cfg.training.batch_size},
                       {"pretrain_epochs", cfg.training.pretrain_epochs}};
    doc["methods"] = {{"run", cfg.methods},
                      {"lambda_grid", cfg.merge.lambda_grid},
                      {"dare_p", cfg.merge.dare_p},
                      {"ties_density", cfg.merge.ties_density},
                      {"trim_scope", cfg.merge.trim_scope == TrimScope::global ? "global" : "per_layer"}};
    doc["supermerge"] = {{"epochs", cfg.supermerge.epochs},
                         {"batch_size", cfg.supermerge.batch_size},
                         {"optimizer", optimizer_to_json(cfg.supermerge.opt)},
                         {"init_value", cfg.supermerge.init_value},
                         {"use_tanh", cfg.supermerge.use_tanh},
                         {"balance", cfg.supermerge.balance == TaskBalance::uniform_examples
                                         ? "uniform_examples"
                                         : "uniform_tasks"}};
    json hier;
    hier["fan_in_limit"] = cfg.hierarchical.fan_in_limit;
    hier["plan"] = cfg.hierarchical.plan_json.empty() ? json(nullptr)
                                                      : json::parse(cfg.hierarchical.plan_json);
    doc["hierarchical"] = hier;
    doc["cost"] = {{"fwd_coeff", cfg.cost.fwd_coeff},
                   {"train_coeff", cfg.cost.train_coeff},
                   {"merge_backward_coeff", cfg.cost.merge_backward_coeff},
                   {"global_scale", cfg.cost.global_scale}};
    doc["seed"] = cfg.seed;
    doc["out_dir"] = cfg.out_dir;
    return doc.dump(2);
}

} // namespace mergeforge
