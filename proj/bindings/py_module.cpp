// Python bindings for the core merging operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mergeforge/bench.hpp"
#include "mergeforge/checkpoint.hpp"
#include "mergeforge/errors.hpp"
#include "mergeforge/report.hpp"
#include "mergeforge/rng.hpp"

namespace py = pybind11;
using namespace mergeforge;

namespace {

std::vector<TaskVector> as_vectors(const std::vector<TaskVector>& tvs) {
    return tvs;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "model merging toolkit: task vectors, DARE/TIES/task arithmetic, "
              "learned per-layer merge weights, hierarchical merging, cost model";

    py::register_exception<StructuralError>(m, "StructuralError");
    py::register_exception<NumericError>(m, "NumericError");
    py::register_exception<TrainError>(m, "TrainError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<IoError>(m, "IoError");

    py::class_<LayerDescriptor>(m, "LayerDescriptor")
        .def_readonly("name", &LayerDescriptor::name)
        .def_property_readonly("kind",
                               [](const LayerDescriptor& d) { return std::string(to_string(d.kind)); })
        .def_readonly("input_dim", &LayerDescriptor::input_dim)
        .def_readonly("output_dim", &LayerDescriptor::output_dim);

    py::class_<ModelSpec>(m, "ModelSpec")
        .def_static("mlp", &ModelSpec::mlp, py::arg("input_dim"), py::arg("hidden_dims"),
                    py::arg("num_classes"))
        .def_static("from_json", &ModelSpec::from_json_text)
        .def_readonly("input_dim", &ModelSpec::input_dim)
        .def_readonly("num_classes", &ModelSpec::num_classes)
        .def_readonly("layers", &ModelSpec::layers)
        .def("layer_count", &ModelSpec::layer_count)
        .def("param_count", &ModelSpec::param_count)
        .def("to_json", &ModelSpec::canonical_json);

    py::class_<NamedArray>(m, "NamedArray")
        .def_readonly("name", &NamedArray::name)
        .def_readonly("values", &NamedArray::values);

    py::class_<NamedArrayD>(m, "NamedArrayD")
        .def_readonly("name", &NamedArrayD::name)
        .def_readonly("values", &NamedArrayD::values);

    py::class_<ParameterSet>(m, "ParameterSet")
        .def_readonly("layers", &ParameterSet::layers)
        .def("__eq__", [](const ParameterSet& a, const ParameterSet& b) { return a == b; });

    py::class_<TaskVector>(m, "TaskVector")
        .def_readonly("source_task", &TaskVector::source_task)
        .def_readonly("layers", &TaskVector::layers)
        .def("__eq__", [](const TaskVector& a, const TaskVector& b) { return a == b; });

    py::class_<MergeWeights>(m, "MergeWeights")
        .def_readonly("model_ids", &MergeWeights::model_ids)
        .def_readonly("layer_names", &MergeWeights::layer_names)
        .def_readonly("values", &MergeWeights::values)
        .def("at", [](const MergeWeights& w, size_t i, size_t j) { return w.at(i, j); });

    py::class_<Example>(m, "Example")
        .def(py::init([](std::vector<float> x, int y) {
                 return Example{std::move(x), y};
             }),
             py::arg("x"), py::arg("y"))
        .def_readwrite("x", &Example::x)
        .def_readwrite("y", &Example::y);

    py::class_<DatasetSplit>(m, "DatasetSplit")
        .def_readonly("task_name", &DatasetSplit::task_name)
        .def_readonly("train", &DatasetSplit::train)
        .def_readonly("validation", &DatasetSplit::validation)
        .def_readonly("test", &DatasetSplit::test)
        .def_readonly("input_dim", &DatasetSplit::input_dim)
        .def_readonly("num_classes", &DatasetSplit::num_classes);

    py::class_<OptimizerConfig>(m, "OptimizerConfig")
        .def(py::init<>())
        .def_property(
            "kind",
            [](const OptimizerConfig& c) {
                return c.kind == OptimizerKind::adamw ? "adamw" : "sgd";
            },
            [](OptimizerConfig& c, const std::string& s) { c.kind = optimizer_kind_from_string(s); })
        .def_readwrite("learning_rate", &OptimizerConfig::learning_rate)
        .def_readwrite("weight_decay", &OptimizerConfig::weight_decay)
        .def_readwrite("beta1", &OptimizerConfig::beta1)
        .def_readwrite("beta2", &OptimizerConfig::beta2)
        .def_readwrite("epsilon", &OptimizerConfig::epsilon);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("opt", &TrainConfig::opt)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<EvalResult>(m, "EvalResult")
        .def_readonly("accuracy", &EvalResult::accuracy)
        .def_readonly("mean_loss", &EvalResult::mean_loss)
        .def_readonly("example_count", &EvalResult::example_count);

    py::class_<FitConfig>(m, "FitConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &FitConfig::epochs)
        .def_readwrite("batch_size", &FitConfig::batch_size)
        .def_readwrite("opt", &FitConfig::opt)
        .def_readwrite("init_value", &FitConfig::init_value)
        .def_readwrite("use_tanh", &FitConfig::use_tanh)
        .def_readwrite("seed", &FitConfig::seed);

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("weights", &FitResult::weights)
        .def_readonly("merged", &FitResult::merged)
        .def_readonly("validation_loss", &FitResult::validation_loss);

    py::class_<LayerStats>(m, "LayerStats")
        .def_readonly("layer_name", &LayerStats::layer_name)
        .def_readonly("mean", &LayerStats::mean)
        .def_readonly("stddev", &LayerStats::stddev)
        .def_readonly("min_value", &LayerStats::min_value)
        .def_readonly("q1", &LayerStats::q1)
        .def_readonly("median", &LayerStats::median)
        .def_readonly("q3", &LayerStats::q3)
        .def_readonly("max_value", &LayerStats::max_value);

    py::class_<SuiteConfig>(m, "SuiteConfig")
        .def(py::init<>())
        .def_readwrite("k_in", &SuiteConfig::k_in)
        .def_readwrite("k_out", &SuiteConfig::k_out)
        .def_readwrite("input_dim", &SuiteConfig::input_dim)
        .def_readwrite("num_classes", &SuiteConfig::num_classes)
        .def_readwrite("train_size", &SuiteConfig::train_size)
        .def_readwrite("val_size", &SuiteConfig::val_size)
        .def_readwrite("test_size", &SuiteConfig::test_size)
        .def_readwrite("pretrain_per_task", &SuiteConfig::pretrain_per_task)
        .def_readwrite("noise", &SuiteConfig::noise)
        .def_readwrite("ood_blend", &SuiteConfig::ood_blend)
        .def_readwrite("seed", &SuiteConfig::seed);

    py::class_<TaskSuite>(m, "TaskSuite")
        .def_readonly("pretrain_mixture", &TaskSuite::pretrain_mixture)
        .def_readonly("in_domain", &TaskSuite::in_domain)
        .def_readonly("out_of_domain", &TaskSuite::out_of_domain);

    py::class_<CostInput>(m, "CostInput")
        .def(py::init<>())
        .def_readwrite("n_para", &CostInput::n_para)
        .def_readwrite("n_trainable", &CostInput::n_trainable)
        .def_readwrite("n_task_vector", &CostInput::n_task_vector)
        .def_readwrite("k", &CostInput::k)
        .def_readwrite("is_merging", &CostInput::is_merging)
        .def_readwrite("n_samples", &CostInput::n_samples);

    py::class_<CostConfig>(m, "CostConfig")
        .def(py::init<>())
        .def_readwrite("fwd_coeff", &CostConfig::fwd_coeff)
        .def_readwrite("train_coeff", &CostConfig::train_coeff)
        .def_readwrite("merge_backward_coeff", &CostConfig::merge_backward_coeff)
        .def_readwrite("global_scale", &CostConfig::global_scale);

    // model engine
    m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
    m.def("zero_params", &zero_params, py::arg("spec"));
    m.def(
        "train",
        [](const ModelSpec& spec, const ParameterSet& init, const std::vector<Example>& rows,
           const TrainConfig& cfg) {
            TrainResult r = train(spec, init, rows, cfg);
            return py::make_tuple(r.params, r.epoch_loss);
        },
        py::arg("spec"), py::arg("init"), py::arg("train_examples"), py::arg("config"));
    m.def("evaluate", &evaluate, py::arg("spec"), py::arg("params"), py::arg("examples"));

    // task vectors
    m.def("compute_task_vector", &compute_task_vector, py::arg("fine_tuned"), py::arg("pretrained"),
          py::arg("source_task") = "");
    m.def("apply_task_vector", &apply, py::arg("pretrained"), py::arg("delta"), py::arg("scale"));
    m.def("layer_stats", &layer_stats, py::arg("task_vector"));

    // mergers
    m.def(
        "merge_task_arithmetic",
        [](const ParameterSet& p, const std::vector<TaskVector>& tvs, double lambda) {
            return merge_task_arithmetic(p, as_vectors(tvs), lambda);
        },
        py::arg("pretrained"), py::arg("task_vectors"), py::arg("lam"));
    m.def("dare_sparsify", &dare_sparsify, py::arg("task_vector"), py::arg("drop_prob"),
          py::arg("seed"), py::arg("task_index") = 0);
    m.def(
        "merge_dare",
        [](const ParameterSet& p, const std::vector<TaskVector>& tvs, double drop_prob,
           double lambda, uint64_t seed) { return merge_dare(p, tvs, drop_prob, lambda, seed); },
        py::arg("pretrained"), py::arg("task_vectors"), py::arg("drop_prob"), py::arg("lam"),
        py::arg("seed"));
    m.def(
        "ties_merge_vector",
        [](const std::vector<TaskVector>& tvs, double density, const std::string& scope) {
            return ties_merge_vector(tvs, density,
                                     scope == "per_layer" ? TrimScope::per_layer : TrimScope::global);
        },
        py::arg("task_vectors"), py::arg("density"), py::arg("scope") = "global");
    m.def(
        "merge_ties",
        [](const ParameterSet& p, const std::vector<TaskVector>& tvs, double density, double lambda,
           const std::string& scope) {
            return merge_ties(p, tvs, density, lambda,
                              scope == "per_layer" ? TrimScope::per_layer : TrimScope::global);
        },
        py::arg("pretrained"), py::arg("task_vectors"), py::arg("density"), py::arg("lam"),
        py::arg("scope") = "global");

    // learned merge weights
    m.def(
        "materialize",
        [](const ParameterSet& p, const std::vector<TaskVector>& tvs, const MergeWeights& w,
           bool use_tanh) { return materialize(p, tvs, w, use_tanh); },
        py::arg("pretrained"), py::arg("task_vectors"), py::arg("weights"),
        py::arg("use_tanh") = true);
    m.def(
        "fit_supermerge",
        [](const ModelSpec& spec, const ParameterSet& pretrained,
           const std::vector<std::pair<std::string, ParameterSet>>& models,
           const std::vector<std::pair<std::string, std::vector<Example>>>& validation,
           const FitConfig& cfg) {
            std::vector<NamedModel> named;
            for (const auto& [name, params] : models) named.push_back({name, params});
            std::vector<FitTask> tasks;
            for (const auto& [name, rows] : validation) tasks.push_back({name, rows});
            return fit(spec, pretrained, named, tasks, cfg);
        },
        py::arg("spec"), py::arg("pretrained"), py::arg("models"), py::arg("validation"),
        py::arg("config"));

    // hierarchical merging
    m.def(
        "build_plan_by_similarity",
        [](const std::vector<TaskVector>& tvs, int fan_in_limit) {
            return plan_to_json(build_plan_by_similarity(tvs, fan_in_limit));
        },
        py::arg("task_vectors"), py::arg("fan_in_limit"));
    m.def(
        "execute_plan",
        [](const std::string& plan_json, int fan_in_limit, const ModelSpec& spec,
           const ParameterSet& pretrained,
           const std::vector<std::pair<std::string, ParameterSet>>& models,
           const std::vector<std::pair<std::string, std::vector<Example>>>& validation,
           const FitConfig& cfg) {
            std::vector<NamedModel> named;
            for (const auto& [name, params] : models) named.push_back({name, params});
            std::vector<FitTask> tasks;
            for (const auto& [name, rows] : validation) tasks.push_back({name, rows});
            MergePlan plan = plan_from_json(plan_json, fan_in_limit);
            ExecResult r = execute_plan(plan, spec, pretrained, named, tasks, cfg);
            return py::make_tuple(r.merged, r.peak_concurrent_models);
        },
        py::arg("plan_json"), py::arg("fan_in_limit"), py::arg("spec"), py::arg("pretrained"),
        py::arg("models"), py::arg("validation"), py::arg("config"));

    // cost model
    m.def("peak_memory_bytes", &peak_memory_bytes, py::arg("input"));
    m.def(
        "flops_per_epoch",
        [](const CostInput& c, const std::string& mode, const CostConfig& cfg) {
            return flops_per_epoch(c, flops_mode_from_string(mode), cfg);
        },
        py::arg("input"), py::arg("mode"), py::arg("config") = CostConfig{});
    m.def("merge_weight_count", &merge_weight_count, py::arg("num_models"), py::arg("num_layers"));

    // suite + benchmark
    m.def("generate_suite", &generate_suite, py::arg("config"));
    m.def(
        "run_benchmark",
        [](const std::string& config_json, uint64_t seed, const std::string& out_dir) {
            BenchConfig cfg = parse_bench_config(config_json);
            cfg.seed = seed;
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            BenchResult result = run_benchmark(cfg);
            if (!out_dir.empty()) export_reports(result, out_dir);
            py::dict summary;
            for (const auto& o : result.outcomes) {
                py::dict row;
                row["mean_in_accuracy"] = o.mean_in_accuracy;
                row["mean_out_accuracy"] = o.mean_out_accuracy;
                row["mean_in_rank"] = o.mean_in_rank;
                row["in_domain"] = o.in_domain_accuracy;
                summary[method_id(o.method)] = row;
            }
            return summary;
        },
        py::arg("config_json") = "{}", py::arg("seed") = 0, py::arg("out_dir") = "");

    // persistence
    m.def("save_params", &save_params, py::arg("params"), py::arg("path"));
    m.def("load_params", &load_params, py::arg("path"), py::arg("spec"));
    m.def("save_task_vector", &save_task_vector, py::arg("task_vector"), py::arg("path"));
    m.def("load_task_vector", &load_task_vector, py::arg("path"), py::arg("spec"));
    m.def("save_dataset_split", &save_dataset_split, py::arg("split"), py::arg("dir"));
    m.def("load_dataset_split", &load_dataset_split, py::arg("dir"));
    m.def(
        "split_validation",
        [](const std::vector<Example>& rows, double fraction, uint64_t seed,
           const std::string& task) {
            auto [t, v] = split_validation(rows, fraction, seed, task);
            return py::make_tuple(t, v);
        },
        py::arg("train"), py::arg("fraction"), py::arg("seed"), py::arg("task_name"));
}
