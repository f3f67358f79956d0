#include "mergeforge/report.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mergeforge/errors.hpp"

namespace mergeforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::string pct(double acc) {
    return fmt("%.1f", acc * 100.0);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::string rank_cell(const std::map<std::string, int>& ranks,
                      const std::map<std::string, double>& accs, const std::string& task) {
    auto r = ranks.find(task);
    auto a = accs.find(task);
    if (a == accs.end()) return "-";
    if (r == ranks.end()) return pct(a->second);
    return std::to_string(r->second) + " (" + pct(a->second) + ")";
}

void write_method_table(const BenchResult& result, bool in_domain, const fs::path& csv_path,
                        const fs::path& md_path) {
    std::vector<std::string> tasks;
    const auto& task_splits =
        in_domain ? result.trained.suite.in_domain : result.trained.suite.out_of_domain;
    for (const auto& t : task_splits) tasks.push_back(t.task_name);

    // long-form csv
    std::string csv = "method,task,accuracy,rank\n";
    for (const auto& o : result.outcomes) {
        const auto& accs = in_domain ? o.in_domain_accuracy : o.out_domain_accuracy;
        const auto& ranks = in_domain ? o.in_domain_rank : o.out_domain_rank;
        for (const auto& task : tasks) {
            auto a = accs.find(task);
            if (a == accs.end()) continue;
            auto r = ranks.find(task);
            csv += std::string(method_id(o.method)) + "," + task + "," + fmt("%.6f", a->second) +
                   "," + (r == ranks.end() ? "" : std::to_string(r->second)) + "\n";
        }
    }
    write_text(csv_path, csv);

    // markdown table, references first, then the ranked block
    std::string md = "| Rank (ACC %) | Avg. |";
    for (const auto& t : tasks) md += " " + t + " |";
    md += "\n|---|---|";
    for (size_t i = 0; i < tasks.size(); ++i) md += "---|";
    md += "\n";
    auto row = [&](const MethodOutcome& o) {
        const auto& accs = in_domain ? o.in_domain_accuracy : o.out_domain_accuracy;
        const auto& ranks = in_domain ? o.in_domain_rank : o.out_domain_rank;
        if (accs.empty()) return;
        std::string line = "| ";
        line += method_display_name(o.method);
        line += " | ";
        double mean_acc = in_domain ? o.mean_in_accuracy : o.mean_out_accuracy;
        if (method_is_ranked(o.method)) {
            double mean_rank = in_domain ? o.mean_in_rank : o.mean_out_rank;
            line += fmt("%.1f", mean_rank) + " (" + pct(mean_acc) + ")";
        } else {
            line += pct(mean_acc);
        }
        line += " |";
        for (const auto& t : tasks) line += " " + rank_cell(ranks, accs, t) + " |";
        md += line + "\n";
    };
    for (const auto& o : result.outcomes)
        if (!method_is_ranked(o.method)) row(o);
    for (const auto& o : result.outcomes)
        if (method_is_ranked(o.method)) row(o);
    write_text(md_path, md);
}

void write_lambda_sweeps(const BenchResult& result, const fs::path& dir) {
    for (const auto& o : result.outcomes) {
        if (!o.lambda_sweep) continue;
        std::string csv = "lambda,mean_accuracy";
        for (const auto& t : result.trained.suite.in_domain) csv += "," + t.task_name;
        csv += "\n";
        for (const auto& p : o.lambda_sweep->curve) {
            csv += fmt("%.4f", p.lambda) + "," + fmt("%.6f", p.mean_accuracy);
            for (double acc : p.per_task_accuracy) csv += "," + fmt("%.6f", acc);
            csv += "\n";
        }
        write_text(dir / ("lambda_sweep_" + std::string(method_id(o.method)) + ".csv"), csv);
    }
}

void write_task_vector_stats(const BenchResult& result, const fs::path& path) {
    std::string csv = "task,layer,mean,std,min,q1,median,q3,max\n";
    for (const auto& tv : result.trained.task_vectors) {
        for (const auto& s : layer_stats(tv)) {
            csv += tv.source_task + "," + s.layer_name + "," + fmt("%.8f", s.mean) + "," +
                   fmt("%.8f", s.stddev) + "," + fmt("%.8f", s.min_value) + "," +
                   fmt("%.8f", s.q1) + "," + fmt("%.8f", s.median) + "," + fmt("%.8f", s.q3) +
                   "," + fmt("%.8f", s.max_value) + "\n";
        }
    }
    write_text(path, csv);
}

std::string weights_csv(const MergeWeights& w) {
    std::string csv = "task";
    for (const auto& l : w.layer_names) csv += "," + l;
    csv += "\n";
    for (size_t i = 0; i < w.k(); ++i) {
        csv += w.model_ids[i];
        for (size_t j = 0; j < w.n(); ++j) csv += "," + fmt("%.6f", w.at(i, j));
        csv += "\n";
    }
    return csv;
}

void write_hierarchical(const BenchResult& result, const fs::path& dir) {
    if (!result.hierarchical_exec) return;
    const ExecResult& exec = *result.hierarchical_exec;
    json nodes = json::array();
    for (const auto& r : exec.reports) {
        std::string node_id = r.path.empty() ? "root" : r.path;
        std::string safe_id = node_id;
        for (auto& c : safe_id)
            if (c == '.') c = '-';
        std::string weights_file = "node_" + safe_id + "_weights.csv";
        json n;
        n["path"] = node_id;
        n["tasks"] = r.covered_tasks;
        n["validation_tasks"] = r.accessed_validation_tasks;
        n["children"] = r.child_count;
        n["epochs"] = r.epochs;
        n["final_validation_loss"] = r.final_validation_loss;
        n["weights_file"] = weights_file;
        nodes.push_back(n);
        write_text(dir / weights_file, weights_csv(r.weights));
    }
    json doc;
    doc["peak_concurrent_models"] = exec.peak_concurrent_models;
    doc["nodes"] = nodes;
    write_text(dir / "hierarchical_nodes.json", doc.dump(2) + "\n");
}

void write_cost(const BenchResult& result, const fs::path& path) {
    const BenchConfig& cfg = result.config;
    const uint64_t n_para = result.trained.spec.param_count();
    const uint64_t k = static_cast<uint64_t>(result.trained.suite.in_domain.size());
    const uint64_t n_layers = result.trained.spec.layer_count();
    const uint64_t union_train = k * static_cast<uint64_t>(cfg.suite.train_size);
    const uint64_t union_val = k * static_cast<uint64_t>(cfg.suite.val_size);

    struct Row {
        const char* scenario;
        CostInput input;
        FlopsMode mode;
    };
    std::vector<Row> rows;
    rows.push_back({"full_fine_tuning",
                    {n_para, n_para, n_para, 1, false, union_train},
                    FlopsMode::training});
    rows.push_back({"non_gradient_merging",
                    {n_para, 1, n_para, k, true, union_val},
                    FlopsMode::inference});
    rows.push_back({"supermerge",
                    {n_para, k * n_layers, n_para, k, true, union_val},
                    FlopsMode::merge_fit});
    uint64_t hier_k = 2;
    if (result.hierarchical_exec) {
        CostInput base{n_para, k * n_layers, n_para, k, true, union_val};
        hier_k = static_cast<uint64_t>(
            measure_peak_models(result.hierarchical_exec->reports, base).concurrent_task_vectors);
    }
    rows.push_back({"hierarchical_supermerge",
                    {n_para, 2 * n_layers, n_para, hier_k, true, union_val},
                    FlopsMode::merge_fit});

    std::string csv =
        "scenario,n_para,n_trainable,peak_memory_bytes,peak_memory_gb,peak_memory_gib,samples,"
        "flops_per_epoch\n";
    for (const auto& row : rows) {
        uint64_t bytes = peak_memory_bytes(row.input);
        csv += std::string(row.scenario) + "," + std::to_string(row.input.n_para) + "," +
               std::to_string(row.input.n_trainable) + "," + std::to_string(bytes) + "," +
               fmt("%.6f", bytes_to_gb(bytes)) + "," + fmt("%.6f", bytes_to_gib(bytes)) + "," +
               std::to_string(row.input.n_samples) + "," +
               fmt("%.6e", flops_per_epoch(row.input, row.mode, cfg.cost)) + "\n";
    }
    write_text(path, csv);
}

} // namespace

void export_reports(const BenchResult& result, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec && !fs::is_directory(out_dir))
        throw IoError("cannot create output directory '" + out_dir.string() + "'");

    write_text(out_dir / "config.json", bench_config_to_json(result.config) + "\n");
    write_method_table(result, true, out_dir / "report_in_domain.csv",
                       out_dir / "report_in_domain.md");
    if (!result.trained.suite.out_of_domain.empty())
        write_method_table(result, false, out_dir / "report_out_of_domain.csv",
                           out_dir / "report_out_of_domain.md");
    write_lambda_sweeps(result, out_dir);
    write_task_vector_stats(result, out_dir / "task_vector_stats.csv");
    if (result.supermerge_weights)
        write_text(out_dir / "merge_weights.csv", weights_csv(*result.supermerge_weights));
    write_hierarchical(result, out_dir);
    write_cost(result, out_dir / "cost.csv");
}

} // namespace mergeforge
