#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mergeforge/data.hpp"
#include "mergeforge/model.hpp"
#include "mergeforge/task_vector.hpp"

namespace mergeforge {

struct MergeWeights; // supermerge.hpp

// Binary checkpoint layout, little-endian throughout:
//
//   magic[8]      "MRGFORG1"
//   version       u32
//   spec_hash     32 bytes (sha-256 of the canonical spec json)
//   layer_count   u32
//   kind          u32 (1 = parameters, 2 = task vector, 3 = merge weights)
//   label_len     u32 + utf-8 label (task vector source task; else empty)
//   per layer:    name_len u32, utf-8 name, element_count u64, values
//
// Values are float32 for parameters and merge weights, float64 for task
// vectors (exact float32 differences need more than 24 significand bits).
// Files are written to a temp path and renamed into place, so a reader never
// observes a half-written checkpoint.

inline constexpr char kCheckpointMagic[8] = {'M', 'R', 'G', 'F', 'O', 'R', 'G', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

enum class CheckpointKind : uint32_t { parameter_set = 1, task_vector = 2, merge_weights = 3 };

void save_params(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_params(const std::filesystem::path& path, const ModelSpec& spec);

void save_task_vector(const TaskVector& tv, const std::filesystem::path& path);
TaskVector load_task_vector(const std::filesystem::path& path, const ModelSpec& spec);

void save_merge_weights(const MergeWeights& w, const SpecHash& spec_hash,
                        const std::filesystem::path& path);
MergeWeights load_merge_weights(const std::filesystem::path& path, const ModelSpec& spec);

// In-memory encoding of a ParameterSet in the same byte layout; used where
// models are spilled out of working memory and later restored bit-exactly.
std::vector<uint8_t> params_to_bytes(const ParameterSet& params);
ParameterSet params_from_bytes(const std::vector<uint8_t>& bytes);

// Datasets: line-delimited records {"x":[...],"y":int}, one file per split:
//   <dir>/train.jsonl, <dir>/validation.jsonl, <dir>/test.jsonl, <dir>/meta.json
void save_dataset_split(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_dataset_split(const std::filesystem::path& dir);

std::vector<Example> read_examples_jsonl(const std::filesystem::path& path);
void write_examples_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path);

// Carve a validation set out of a training list: |validation| =
// round(fraction * |train|), membership decided by a shuffle keyed by
// (seed, task_name) so adding tasks never perturbs existing splits.
std::pair<std::vector<Example>, std::vector<Example>>
split_validation(const std::vector<Example>& train, double fraction, uint64_t seed,
                 const std::string& task_name);

} // namespace mergeforge
