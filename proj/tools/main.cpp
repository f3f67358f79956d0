// mergeforge command line: train a synthetic suite, merge checkpoints with a
// chosen method, evaluate models, run the full benchmark protocol, or price a
// configuration with the analytic cost model.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mergeforge/bench.hpp"
#include "mergeforge/checkpoint.hpp"
#include "mergeforge/errors.hpp"
#include "mergeforge/report.hpp"
#include "mergeforge/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mergeforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct CommonBenchFlags {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::vector<std::string>> methods;
    std::optional<int> k_in, k_out, input_dim, num_classes;
    std::optional<int> train_size, val_size, test_size, pretrain_per_task;
    std::optional<double> noise, ood_blend;
    std::optional<std::vector<int>> hidden;
    std::optional<int> epochs, pretrain_epochs, batch_size;
    std::optional<double> lr;
    std::optional<std::vector<double>> lambda_grid;
    std::optional<double> dare_p, ties_density;
    std::optional<int> fit_epochs, fit_batch;
    std::optional<double> fit_lr;
    std::optional<bool> use_tanh;
    std::optional<int> fan_in;
    std::optional<std::string> plan;
};

void add_merge_hyper_flags(CLI::App* cmd, CommonBenchFlags& f) {
    cmd->add_option("--config", f.config_path, "config file (json)");
    cmd->add_option("--lambda-grid", f.lambda_grid, "lambda grid")->delimiter(',');
    cmd->add_option("--dare-p", f.dare_p, "DARE drop probability");
    cmd->add_option("--ties-density", f.ties_density, "TIES kept fraction");
    cmd->add_option("--fit-epochs", f.fit_epochs, "merge-weight fit epochs");
    cmd->add_option("--fit-batch", f.fit_batch, "merge-weight fit batch size");
    cmd->add_option("--fit-lr", f.fit_lr, "merge-weight fit learning rate");
    cmd->add_option("--use-tanh", f.use_tanh, "gate merge weights through tanh");
    cmd->add_option("--fan-in", f.fan_in, "hierarchical fan-in limit");
    cmd->add_option("--plan", f.plan, "explicit merge plan (nested json lists)");
}

void add_bench_flags(CLI::App* cmd, CommonBenchFlags& f) {
    cmd->add_option("--config", f.config_path, "config file (json)");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--methods", f.methods, "methods to run")->delimiter(',');
    cmd->add_option("--k-in", f.k_in, "in-domain task count");
    cmd->add_option("--k-out", f.k_out, "out-of-domain task count");
    cmd->add_option("--input-dim", f.input_dim, "input dimension");
    cmd->add_option("--num-classes", f.num_classes, "class count");
    cmd->add_option("--train-size", f.train_size, "train examples per task");
    cmd->add_option("--val-size", f.val_size, "validation examples per task");
    cmd->add_option("--test-size", f.test_size, "test examples per task");
    cmd->add_option("--pretrain-per-task", f.pretrain_per_task, "mixture rows per task");
    cmd->add_option("--noise", f.noise, "cluster noise std");
    cmd->add_option("--ood-blend", f.ood_blend, "out-of-domain rotation blend");
    cmd->add_option("--hidden", f.hidden, "hidden layer widths")->delimiter(',');
    cmd->add_option("--epochs", f.epochs, "fine-tuning epochs");
    cmd->add_option("--pretrain-epochs", f.pretrain_epochs, "pretraining epochs");
    cmd->add_option("--batch-size", f.batch_size, "training batch size");
    cmd->add_option("--lr", f.lr, "training learning rate");
    cmd->add_option("--lambda-grid", f.lambda_grid, "lambda grid")->delimiter(',');
    cmd->add_option("--dare-p", f.dare_p, "DARE drop probability");
    cmd->add_option("--ties-density", f.ties_density, "TIES kept fraction");
    cmd->add_option("--fit-epochs", f.fit_epochs, "merge-weight fit epochs");
    cmd->add_option("--fit-batch", f.fit_batch, "merge-weight fit batch size");
    cmd->add_option("--fit-lr", f.fit_lr, "merge-weight fit learning rate");
    cmd->add_option("--use-tanh", f.use_tanh, "gate merge weights through tanh");
    cmd->add_option("--fan-in", f.fan_in, "hierarchical fan-in limit");
    cmd->add_option("--plan", f.plan, "explicit merge plan (nested json lists)");
}

BenchConfig resolve_config(const CommonBenchFlags& f) {
    BenchConfig cfg;
    if (!f.config_path.empty()) cfg = load_bench_config(f.config_path);
    if (f.seed) cfg.seed = *f.seed;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.methods) cfg.methods = *f.methods;
    if (f.k_in) cfg.suite.k_in = *f.k_in;
    if (f.k_out) cfg.suite.k_out = *f.k_out;
    if (f.input_dim) cfg.suite.input_dim = *f.input_dim;
    if (f.num_classes) cfg.suite.num_classes = *f.num_classes;
    if (f.train_size) cfg.suite.train_size = *f.train_size;
    if (f.val_size) cfg.suite.val_size = *f.val_size;
    if (f.test_size) cfg.suite.test_size = *f.test_size;
    if (f.pretrain_per_task) cfg.suite.pretrain_per_task = *f.pretrain_per_task;
    if (f.noise) cfg.suite.noise = *f.noise;
    if (f.ood_blend) cfg.suite.ood_blend = *f.ood_blend;
    if (f.hidden) cfg.training.hidden_dims = *f.hidden;
    if (f.epochs) cfg.training.epochs = *f.epochs;
    if (f.pretrain_epochs) cfg.training.pretrain_epochs = *f.pretrain_epochs;
    if (f.batch_size) cfg.training.batch_size = *f.batch_size;
    if (f.lr) cfg.training.opt.learning_rate = *f.lr;
    if (f.lambda_grid) cfg.merge.lambda_grid = *f.lambda_grid;
    if (f.dare_p) cfg.merge.dare_p = *f.dare_p;
    if (f.ties_density) cfg.merge.ties_density = *f.ties_density;
    if (f.fit_epochs) cfg.supermerge.epochs = *f.fit_epochs;
    if (f.fit_batch) cfg.supermerge.batch_size = *f.fit_batch;
    if (f.fit_lr) cfg.supermerge.opt.learning_rate = *f.fit_lr;
    if (f.use_tanh) cfg.supermerge.use_tanh = *f.use_tanh;
    if (f.fan_in) cfg.hierarchical.fan_in_limit = *f.fan_in;
    if (f.plan) cfg.hierarchical.plan_json = *f.plan;
    return cfg;
}

int cmd_train(const CommonBenchFlags& flags) {
    BenchConfig cfg = resolve_config(flags);
    fs::path out = cfg.out_dir;
    fs::create_directories(out / "data");
    fs::create_directories(out / "checkpoints");

    TrainedSuite trained = build_trained_suite(cfg);

    write_text_file(out / "spec.json", trained.spec.canonical_json() + "\n");
    save_dataset_split(trained.suite.pretrain_mixture, out / "data" / "pretrain_mixture");
    for (const auto& t : trained.suite.in_domain) save_dataset_split(t, out / "data" / t.task_name);
    for (const auto& t : trained.suite.out_of_domain)
        save_dataset_split(t, out / "data" / t.task_name);

    save_params(trained.pretrained, out / "checkpoints" / "pretrained.ckpt");
    json manifest;
    manifest["seed"] = cfg.seed;
    manifest["spec"] = "spec.json";
    manifest["pretrained"] = "checkpoints/pretrained.ckpt";
    json tasks = json::array();
    for (size_t i = 0; i < trained.fine_tuned.size(); ++i) {
        const auto& nm = trained.fine_tuned[i];
        save_params(nm.params, out / "checkpoints" / (nm.task_name + ".ckpt"));
        save_task_vector(trained.task_vectors[i], out / "checkpoints" / (nm.task_name + ".tau.ckpt"));
        json t;
        t["name"] = nm.task_name;
        t["checkpoint"] = "checkpoints/" + nm.task_name + ".ckpt";
        t["task_vector"] = "checkpoints/" + nm.task_name + ".tau.ckpt";
        t["data"] = "data/" + nm.task_name;
        tasks.push_back(t);
        EvalResult ft = evaluate(trained.spec, nm.params, trained.suite.in_domain[i].test);
        std::cout << nm.task_name << ": fine-tuned test accuracy " << ft.accuracy << "\n";
    }
    manifest["tasks"] = tasks;
    json ood = json::array();
    for (const auto& t : trained.suite.out_of_domain) ood.push_back("data/" + t.task_name);
    manifest["out_of_domain"] = ood;
    write_text_file(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << (out / "manifest.json").string() << "\n";
    return kExitOk;
}

std::vector<NamedModel> load_models(const std::vector<std::string>& model_args,
                                    const ModelSpec& spec) {
    std::vector<NamedModel> models;
    for (const auto& arg : model_args) {
        auto eq = arg.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--model expects task=path, got '" + arg + "'");
        models.push_back({arg.substr(0, eq), load_params(arg.substr(eq + 1), spec)});
    }
    return models;
}

int cmd_merge(const std::string& method_name, const std::string& spec_path,
              const std::string& pretrained_path, const std::vector<std::string>& model_args,
              const std::string& data_dir, const std::string& out_path, double lambda,
              bool grid_search, const CommonBenchFlags& flags) {
    BenchConfig cfg = resolve_config(flags);
    Method method = method_from_string(method_name);
    if (!method_is_ranked(method))
        throw ConfigError("'" + method_name + "' is a reference row, not a merge method");

    ModelSpec spec = ModelSpec::from_json_text(read_text_file(spec_path));
    ParameterSet pretrained = load_params(pretrained_path, spec);
    std::vector<NamedModel> models = load_models(model_args, spec);
    if (models.empty()) throw ConfigError("need at least one --model task=path");

    std::vector<TaskVector> tvs;
    for (const auto& m : models)
        tvs.push_back(compute_task_vector(m.params, pretrained, m.task_name));

    auto need_validation = [&]() {
        if (data_dir.empty())
            throw ConfigError("this method needs --data pointing at a train output directory");
        std::vector<FitTask> tasks;
        for (const auto& m : models) {
            DatasetSplit split = load_dataset_split(fs::path(data_dir) / "data" / m.task_name);
            tasks.push_back({m.task_name, std::move(split.validation)});
        }
        return tasks;
    };

    const uint64_t dare_seed = hash_str(cfg.seed, "dare");
    ParameterSet merged;
    std::optional<MergeWeights> weights;

    auto pick_lambda = [&](const std::function<ParameterSet(double)>& merge_at) {
        if (!grid_search) return lambda;
        std::vector<FitTask> tasks = need_validation();
        std::vector<ValidationTask> validation;
        for (const auto& t : tasks) validation.push_back({t.task_name, &t.validation});
        GridSearchResult gs = grid_search_lambda(merge_at, cfg.merge.lambda_grid, spec, validation);
        std::cout << "grid search picked lambda " << gs.best_lambda << "\n";
        return gs.best_lambda;
    };

    switch (method) {
        case Method::task_arithmetic: {
            auto merge_at = [&](double l) { return merge_task_arithmetic(pretrained, tvs, l); };
            merged = merge_at(pick_lambda(merge_at));
            break;
        }
        case Method::dare_ta: {
            std::vector<TaskVector> sparse;
            for (size_t i = 0; i < tvs.size(); ++i)
                sparse.push_back(dare_sparsify(tvs[i], cfg.merge.dare_p, dare_seed, i));
            auto merge_at = [&](double l) { return merge_task_arithmetic(pretrained, sparse, l); };
            merged = merge_at(pick_lambda(merge_at));
            break;
        }
        case Method::ties: {
            TaskVector elected = ties_merge_vector(tvs, cfg.merge.ties_density, cfg.merge.trim_scope);
            auto merge_at = [&](double l) { return apply(pretrained, elected, l); };
            merged = merge_at(pick_lambda(merge_at));
            break;
        }
        case Method::dare_ties: {
            std::vector<TaskVector> sparse;
            for (size_t i = 0; i < tvs.size(); ++i)
                sparse.push_back(dare_sparsify(tvs[i], cfg.merge.dare_p, dare_seed, i));
            TaskVector elected =
                ties_merge_vector(sparse, cfg.merge.ties_density, cfg.merge.trim_scope);
            auto merge_at = [&](double l) { return apply(pretrained, elected, l); };
            merged = merge_at(pick_lambda(merge_at));
            break;
        }
        case Method::supermerge:
        case Method::supermerge_no_tanh: {
            FitConfig fit_cfg = cfg.supermerge;
            fit_cfg.seed = hash_str(cfg.seed, "fit");
            fit_cfg.use_tanh = method == Method::supermerge && cfg.supermerge.use_tanh;
            FitResult fr = fit(spec, pretrained, models, need_validation(), fit_cfg);
            merged = std::move(fr.merged);
            weights = std::move(fr.weights);
            std::cout << "fit validation loss " << fr.validation_loss.front() << " -> "
                      << fr.validation_loss.back() << "\n";
            break;
        }
        case Method::hierarchical: {
            MergePlan plan;
            if (!cfg.hierarchical.plan_json.empty())
                plan = plan_from_json(cfg.hierarchical.plan_json, cfg.hierarchical.fan_in_limit);
            else
                plan = build_plan_by_similarity(tvs, cfg.hierarchical.fan_in_limit);
            FitConfig fit_cfg = cfg.supermerge;
            fit_cfg.seed = hash_str(cfg.seed, "fit");
            ExecResult exec = execute_plan(plan, spec, pretrained, models, need_validation(), fit_cfg);
            std::cout << "plan " << plan_to_json(plan) << "\npeak concurrent models "
                      << exec.peak_concurrent_models << "\n";
            merged = std::move(exec.merged);
            break;
        }
        default:
            throw ConfigError("unsupported merge method");
    }

    save_params(merged, out_path);
    if (weights) {
        fs::path wpath = fs::path(out_path).replace_extension(".weights.ckpt");
        save_merge_weights(*weights, spec.hash(), wpath);
        std::cout << "wrote " << wpath.string() << "\n";
    }
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& spec_path, const std::string& model_path,
             const std::string& data_dir, std::vector<std::string> tasks,
             const std::string& split) {
    ModelSpec spec = ModelSpec::from_json_text(read_text_file(spec_path));
    ParameterSet params = load_params(model_path, spec);

    if (tasks.empty()) {
        for (const auto& entry : fs::directory_iterator(fs::path(data_dir) / "data"))
            if (entry.is_directory()) tasks.push_back(entry.path().filename().string());
        std::sort(tasks.begin(), tasks.end());
    }
    if (tasks.empty()) throw ConfigError("no task data found under '" + data_dir + "'");

    std::cout << "task,split,examples,accuracy,mean_loss\n";
    double sum = 0.0;
    size_t counted = 0;
    for (const auto& task : tasks) {
        DatasetSplit ds = load_dataset_split(fs::path(data_dir) / "data" / task);
        const std::vector<Example>* examples = &ds.test;
        if (split == "train") examples = &ds.train;
        else if (split == "validation") examples = &ds.validation;
        else if (split != "test") throw ConfigError("split must be train|validation|test");
        if (examples->empty()) continue;
        EvalResult r = evaluate(spec, params, *examples);
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%s,%zu,%.6f,%.6f\n", task.c_str(), split.c_str(),
                      r.example_count, r.accuracy, r.mean_loss);
        std::cout << buf;
        sum += r.accuracy;
        ++counted;
    }
    if (counted)
        std::cout << "mean,,," << sum / static_cast<double>(counted) << ",\n";
    return kExitOk;
}

int cmd_bench(const CommonBenchFlags& flags) {
    BenchConfig cfg = resolve_config(flags);
    BenchResult result = run_benchmark(cfg);
    export_reports(result, cfg.out_dir);
    for (const auto& o : result.outcomes) {
        std::cout << method_display_name(o.method) << ": mean in-domain accuracy "
                  << o.mean_in_accuracy;
        if (method_is_ranked(o.method)) std::cout << ", mean rank " << o.mean_in_rank;
        std::cout << "\n";
    }
    std::cout << "reports written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_cost(const std::string& config_path, CostInput input, const std::string& mode_name) {
    CostConfig cost_cfg;
    if (!config_path.empty()) cost_cfg = load_bench_config(config_path).cost;
    FlopsMode mode = flops_mode_from_string(mode_name);
    uint64_t bytes = peak_memory_bytes(input);
    double flops = flops_per_epoch(input, mode, cost_cfg);
    std::cout << "n_para,n_trainable,peak_memory_bytes,peak_memory_gb,peak_memory_gib,samples,"
                 "flops_per_epoch\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%llu,%llu,%llu,%.3f,%.3f,%llu,%.3e\n",
                  static_cast<unsigned long long>(input.n_para),
                  static_cast<unsigned long long>(input.n_trainable),
                  static_cast<unsigned long long>(bytes), bytes_to_gb(bytes), bytes_to_gib(bytes),
                  static_cast<unsigned long long>(input.n_samples), flops);
    std::cout << buf;
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"model merging toolkit"};
    app.require_subcommand(1);

    CommonBenchFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "generate a suite, pretrain and fine-tune");
    add_bench_flags(train_cmd, train_flags);
    train_cmd->add_option("--seed", train_flags.seed, "suite/training seed")->required();

    std::string merge_method, merge_spec, merge_pretrained, merge_data, merge_out;
    std::vector<std::string> merge_models;
    double merge_lambda = 0.3;
    bool merge_grid = false;
    CommonBenchFlags merge_flags;
    auto* merge_cmd = app.add_subcommand("merge", "merge checkpoints with one method");
    merge_cmd->add_option("--method", merge_method, "merge method")->required();
    merge_cmd->add_option("--spec", merge_spec, "model spec json")->required();
    merge_cmd->add_option("--pretrained", merge_pretrained, "pretrained checkpoint")->required();
    merge_cmd->add_option("--model", merge_models, "task=checkpoint (repeatable)")->required();
    merge_cmd->add_option("--data", merge_data, "train output dir with validation data");
    merge_cmd->add_option("--out", merge_out, "merged checkpoint path")->required();
    merge_cmd->add_option("--lambda", merge_lambda, "explicit scaling coefficient");
    merge_cmd->add_flag("--grid", merge_grid, "grid-search lambda on validation data");
    add_merge_hyper_flags(merge_cmd, merge_flags);
    merge_cmd->add_option("--seed", merge_flags.seed, "seed for DARE masks / fits");

    std::string eval_spec, eval_model, eval_data, eval_split = "test";
    std::vector<std::string> eval_tasks;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on task data");
    eval_cmd->add_option("--spec", eval_spec, "model spec json")->required();
    eval_cmd->add_option("--model", eval_model, "checkpoint to evaluate")->required();
    eval_cmd->add_option("--data", eval_data, "train output dir")->required();
    eval_cmd->add_option("--tasks", eval_tasks, "task subset")->delimiter(',');
    eval_cmd->add_option("--split", eval_split, "train|validation|test");

    CommonBenchFlags bench_flags;
    auto* bench_cmd = app.add_subcommand("bench", "run the full benchmark protocol");
    add_bench_flags(bench_cmd, bench_flags);
    bench_cmd->add_option("--seed", bench_flags.seed, "benchmark seed")->required();

    std::string cost_config, cost_mode = "merge_fit";
    CostInput cost_input;
    auto* cost_cmd = app.add_subcommand("cost", "analytic peak memory and FLOPs");
    cost_cmd->add_option("--config", cost_config, "config file for coefficients");
    cost_cmd->add_option("--n-para", cost_input.n_para, "total parameters")->required();
    cost_cmd->add_option("--n-trainable", cost_input.n_trainable, "trainable parameters")->required();
    cost_cmd->add_option("--n-task-vector", cost_input.n_task_vector, "task vector entries per task");
    cost_cmd->add_option("--k", cost_input.k, "concurrent tasks");
    cost_cmd->add_flag("--merging", cost_input.is_merging, "include the task vector term");
    cost_cmd->add_option("--samples", cost_input.n_samples, "examples per epoch");
    cost_cmd->add_option("--mode", cost_mode, "training|merge_fit|inference");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_flags);
        if (merge_cmd->parsed())
            return cmd_merge(merge_method, merge_spec, merge_pretrained, merge_models, merge_data,
                             merge_out, merge_lambda, merge_grid, merge_flags);
        if (eval_cmd->parsed()) return cmd_eval(eval_spec, eval_model, eval_data, eval_tasks, eval_split);
        if (bench_cmd->parsed()) return cmd_bench(bench_flags);
        if (cost_cmd->parsed()) return cmd_cost(cost_config, cost_input, cost_mode);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const TrainError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
