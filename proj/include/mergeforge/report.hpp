#pragma once

#include <filesystem>

#include "mergeforge/bench.hpp"

namespace mergeforge {

// Writes the full report bundle into out_dir:
//   config.json                  resolved config snapshot
//   report_in_domain.{csv,md}    method table, "rank (acc)" cells
//   report_out_of_domain.{csv,md}
//   lambda_sweep_<method>.csv    one per grid-searched baseline
//   task_vector_stats.csv        per-task per-layer distribution summary
//   merge_weights.csv            learned W heatmap (k rows x n layer columns)
//   hierarchical_nodes.json      per-node fit reports
//   node_<path>_weights.csv      per-node learned W
//   cost.csv                     analytic memory/FLOPs rows at suite scale
// Output is byte-deterministic for a fixed seed and config.
void export_reports(const BenchResult& result, const std::filesystem::path& out_dir);

} // namespace mergeforge
