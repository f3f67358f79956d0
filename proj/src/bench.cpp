#include "mergeforge/bench.hpp"

#include <algorithm>
#include <cmath>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

Method method_from_string(const std::string& s) {
    if (s == "pretrained") return Method::pretrained;
    if (s == "individual") return Method::individual;
    if (s == "multitask") return Method::multitask;
    if (s == "task_arithmetic") return Method::task_arithmetic;
    if (s == "dare_ta") return Method::dare_ta;
    if (s == "ties") return Method::ties;
    if (s == "dare_ties") return Method::dare_ties;
    if (s == "supermerge") return Method::supermerge;
    if (s == "supermerge_no_tanh") return Method::supermerge_no_tanh;
    if (s == "hierarchical") return Method::hierarchical;
    throw ConfigError("unknown method '" + s + "'");
}

const char* method_id(Method m) {
    switch (m) {
        case Method::pretrained: return "pretrained";
        case Method::individual: return "individual";
        case Method::multitask: return "multitask";
        case Method::task_arithmetic: return "task_arithmetic";
        case Method::dare_ta: return "dare_ta";
        case Method::ties: return "ties";
        case Method::dare_ties: return "dare_ties";
        case Method::supermerge: return "supermerge";
        case Method::supermerge_no_tanh: return "supermerge_no_tanh";
        case Method::hierarchical: return "hierarchical";
    }
    return "?";
}

const char* method_display_name(Method m) {
    switch (m) {
        case Method::pretrained: return "Pretrained";
        case Method::individual: return "Individual";
        case Method::multitask: return "Multitask";
        case Method::task_arithmetic: return "Task Arith.";
        case Method::dare_ta: return "DARE + Task Arith.";
        case Method::ties: return "TIES";
        case Method::dare_ties: return "DARE + TIES";
        case Method::supermerge: return "SuperMerge";
        case Method::supermerge_no_tanh: return "SuperMerge (no tanh)";
        case Method::hierarchical: return "Hierarchical SuperMerge";
    }
    return "?";
}

bool method_is_ranked(Method m) {
    switch (m) {
        case Method::pretrained:
        case Method::individual:
        case Method::multitask:
            return false;
        default:
            return true;
    }
}

TrainedSuite build_trained_suite(const BenchConfig& cfg) {
    TrainedSuite out;
    SuiteConfig suite_cfg = cfg.suite;
    suite_cfg.seed = cfg.seed;
    out.suite = generate_suite(suite_cfg);
    out.spec = ModelSpec::mlp(cfg.suite.input_dim, cfg.training.hidden_dims, cfg.suite.num_classes);

    ParameterSet init = init_params(out.spec, hash_str(cfg.seed, "init"));

    TrainConfig pretrain_cfg{cfg.training.opt, cfg.training.pretrain_epochs,
                             cfg.training.batch_size, hash_str(cfg.seed, "pretrain")};
    out.pretrained = train(out.spec, init, out.suite.pretrain_mixture.train, pretrain_cfg).params;

    for (const auto& task : out.suite.in_domain) {
        TrainConfig ft_cfg{cfg.training.opt, cfg.training.epochs, cfg.training.batch_size,
                           hash_str(cfg.seed, "finetune:" + task.task_name)};
        ParameterSet tuned = train(out.spec, out.pretrained, task.train, ft_cfg).params;
        out.task_vectors.push_back(compute_task_vector(tuned, out.pretrained, task.task_name));
        out.fine_tuned.push_back({task.task_name, std::move(tuned)});
    }
    return out;
}

std::map<std::string, int> competition_ranks(
    const std::vector<std::pair<std::string, double>>& accuracy) {
    auto rounded = [](double a) { return std::llround(a * 1e4); };
    std::map<std::string, int> ranks;
    for (const auto& [name, acc] : accuracy) {
        int rank = 1;
        for (const auto& [other, other_acc] : accuracy) {
            (void)other;
            if (rounded(other_acc) > rounded(acc)) ++rank;
        }
        ranks[name] = rank;
    }
    return ranks;
}

namespace {

struct MethodModel {
    // one model for every task, or (for 'individual') one per task
    std::optional<ParameterSet> shared;
    std::map<std::string, const ParameterSet*> per_task;
};

} // namespace

BenchResult run_benchmark(const BenchConfig& cfg) {
    BenchResult result;
    result.config = cfg;

    std::vector<Method> methods;
    for (const auto& name : cfg.methods) methods.push_back(method_from_string(name));

    result.trained = build_trained_suite(cfg);
    const TrainedSuite& trained = result.trained;
    const ModelSpec& spec = trained.spec;

    std::vector<ValidationTask> validation;
    for (const auto& task : trained.suite.in_domain)
        validation.push_back({task.task_name, &task.validation});

    std::vector<FitTask> fit_tasks;
    for (const auto& task : trained.suite.in_domain)
        fit_tasks.push_back({task.task_name, task.validation});

    const uint64_t dare_seed = hash_str(cfg.seed, "dare");
    const auto& tvs = trained.task_vectors;

    for (Method m : methods) {
        MethodOutcome outcome;
        outcome.method = m;
        MethodModel model;

        switch (m) {
            case Method::pretrained:
                model.shared = trained.pretrained;
                break;
            case Method::individual:
                for (const auto& nm : trained.fine_tuned)
                    model.per_task[nm.task_name] = &nm.params;
                break;
            case Method::multitask: {
                std::vector<Example> pool;
                for (const auto& task : trained.suite.in_domain)
                    pool.insert(pool.end(), task.train.begin(), task.train.end());
                TrainConfig mt_cfg{cfg.training.opt, cfg.training.epochs, cfg.training.batch_size,
                                   hash_str(cfg.seed, "multitask")};
                model.shared = train(spec, trained.pretrained, pool, mt_cfg).params;
                break;
            }
            case Method::task_arithmetic: {
                auto merge_at = [&](double l) { return merge_task_arithmetic(trained.pretrained, tvs, l); };
                GridSearchResult gs = grid_search_lambda(merge_at, cfg.merge.lambda_grid, spec, validation);
                outcome.lambda_used = gs.best_lambda;
                model.shared = merge_at(gs.best_lambda);
                outcome.lambda_sweep = std::move(gs);
                break;
            }
            case Method::dare_ta: {
                std::vector<TaskVector> sparse;
                for (size_t i = 0; i < tvs.size(); ++i)
                    sparse.push_back(dare_sparsify(tvs[i], cfg.merge.dare_p, dare_seed, i));
                auto merge_at = [&](double l) { return merge_task_arithmetic(trained.pretrained, sparse, l); };
                GridSearchResult gs = grid_search_lambda(merge_at, cfg.merge.lambda_grid, spec, validation);
                outcome.lambda_used = gs.best_lambda;
                model.shared = merge_at(gs.best_lambda);
                outcome.lambda_sweep = std::move(gs);
                break;
            }
            case Method::ties: {
                TaskVector elected = ties_merge_vector(tvs, cfg.merge.ties_density, cfg.merge.trim_scope);
                auto merge_at = [&](double l) { return apply(trained.pretrained, elected, l); };
                GridSearchResult gs = grid_search_lambda(merge_at, cfg.merge.lambda_grid, spec, validation);
                outcome.lambda_used = gs.best_lambda;
                model.shared = merge_at(gs.best_lambda);
                outcome.lambda_sweep = std::move(gs);
                break;
            }
            case Method::dare_ties: {
                std::vector<TaskVector> sparse;
                for (size_t i = 0; i < tvs.size(); ++i)
                    sparse.push_back(dare_sparsify(tvs[i], cfg.merge.dare_p, dare_seed, i));
                TaskVector elected = ties_merge_vector(sparse, cfg.merge.ties_density, cfg.merge.trim_scope);
                auto merge_at = [&](double l) { return apply(trained.pretrained, elected, l); };
                GridSearchResult gs = grid_search_lambda(merge_at, cfg.merge.lambda_grid, spec, validation);
                outcome.lambda_used = gs.best_lambda;
                model.shared = merge_at(gs.best_lambda);
                outcome.lambda_sweep = std::move(gs);
                break;
            }
            case Method::supermerge:
            case Method::supermerge_no_tanh: {
                FitConfig fit_cfg = cfg.supermerge;
                fit_cfg.seed = hash_str(cfg.seed, "fit");
                fit_cfg.use_tanh = (m == Method::supermerge) && cfg.supermerge.use_tanh;
                FitResult fr = fit(spec, trained.pretrained, trained.fine_tuned, fit_tasks, fit_cfg);
                model.shared = std::move(fr.merged);
                if (m == Method::supermerge) result.supermerge_weights = std::move(fr.weights);
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
                ExecResult exec = execute_plan(plan, spec, trained.pretrained, trained.fine_tuned,
                                               fit_tasks, fit_cfg);
                model.shared = exec.merged;
                result.hierarchical_exec = std::move(exec);
                break;
            }
        }

        auto eval_on = [&](const DatasetSplit& task) -> double {
            const ParameterSet* params = nullptr;
            if (model.shared)
                params = &*model.shared;
            else {
                auto it = model.per_task.find(task.task_name);
                if (it == model.per_task.end()) return -1.0;
                params = it->second;
            }
            return evaluate(spec, *params, task.test).accuracy;
        };

        double in_sum = 0.0;
        for (const auto& task : trained.suite.in_domain) {
            double acc = eval_on(task);
            outcome.in_domain_accuracy[task.task_name] = acc;
            in_sum += acc;
        }
        outcome.mean_in_accuracy = in_sum / static_cast<double>(trained.suite.in_domain.size());

        if (m != Method::individual) { // no canonical per-task model for held-out tasks
            double out_sum = 0.0;
            for (const auto& task : trained.suite.out_of_domain) {
                double acc = eval_on(task);
                outcome.out_domain_accuracy[task.task_name] = acc;
                out_sum += acc;
            }
            if (!trained.suite.out_of_domain.empty())
                outcome.mean_out_accuracy =
                    out_sum / static_cast<double>(trained.suite.out_of_domain.size());
        }

        result.outcomes.push_back(std::move(outcome));
    }

    // ranks across the ranked methods, per task
    auto rank_scope = [&](bool in_domain) {
        std::vector<const DatasetSplit*> tasks;
        if (in_domain)
            for (const auto& t : trained.suite.in_domain) tasks.push_back(&t);
        else
            for (const auto& t : trained.suite.out_of_domain) tasks.push_back(&t);

        for (const auto* task : tasks) {
            std::vector<std::pair<std::string, double>> accs;
            for (const auto& o : result.outcomes) {
                if (!method_is_ranked(o.method)) continue;
                const auto& table = in_domain ? o.in_domain_accuracy : o.out_domain_accuracy;
                auto it = table.find(task->task_name);
                if (it != table.end()) accs.emplace_back(method_id(o.method), it->second);
            }
            if (accs.empty()) continue;
            auto ranks = competition_ranks(accs);
            for (auto& o : result.outcomes) {
                if (!method_is_ranked(o.method)) continue;
                auto it = ranks.find(method_id(o.method));
                if (it == ranks.end()) continue;
                (in_domain ? o.in_domain_rank : o.out_domain_rank)[task->task_name] = it->second;
            }
        }
    };
    rank_scope(true);
    rank_scope(false);

    for (auto& o : result.outcomes) {
        if (!method_is_ranked(o.method)) continue;
        double s = 0.0;
        for (const auto& [task, r] : o.in_domain_rank) s += r;
        if (!o.in_domain_rank.empty()) o.mean_in_rank = s / static_cast<double>(o.in_domain_rank.size());
        s = 0.0;
        for (const auto& [task, r] : o.out_domain_rank) s += r;
        if (!o.out_domain_rank.empty())
            o.mean_out_rank = s / static_cast<double>(o.out_domain_rank.size());
    }

    return result;
}

const MethodOutcome* find_outcome(const BenchResult& result, Method m) {
    for (const auto& o : result.outcomes)
        if (o.method == m) return &o;
    return nullptr;
}

} // namespace mergeforge
