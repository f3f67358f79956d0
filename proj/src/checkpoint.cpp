#include "mergeforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"
#include "mergeforge/supermerge.hpp"

namespace mergeforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<uint32_t>(v));
}

void put_f64(std::vector<uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<uint64_t>(v));
}

struct Reader {
    const uint8_t* data;
    size_t size;
    size_t pos = 0;
    std::string context = "checkpoint";

    void need(size_t n, const std::string& what) {
        if (pos + n > size)
            throw TruncatedError(context + " truncated while reading " + what);
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const std::string& what) { return std::bit_cast<float>(u32(what)); }
    double f64(const std::string& what) { return std::bit_cast<double>(u64(what)); }
    std::string str(size_t n, const std::string& what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data + pos), n);
        pos += n;
        return s;
    }
};

// parameter sets and merge weights carry float32 payloads, task vectors
// float64 (their values are exact float32 differences, which need 25+ bits)
struct Payload {
    SpecHash spec_hash;
    CheckpointKind kind;
    std::string label;
    std::vector<NamedArray> layers;    // kinds 1 and 3
    std::vector<NamedArrayD> layers64; // kind 2
};

std::vector<uint8_t> encode(const Payload& p) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
    put_u32(out, kCheckpointVersion);
    out.insert(out.end(), p.spec_hash.begin(), p.spec_hash.end());
    const size_t layer_count =
        p.kind == CheckpointKind::task_vector ? p.layers64.size() : p.layers.size();
    put_u32(out, static_cast<uint32_t>(layer_count));
    put_u32(out, static_cast<uint32_t>(p.kind));
    put_u32(out, static_cast<uint32_t>(p.label.size()));
    out.insert(out.end(), p.label.begin(), p.label.end());
    if (p.kind == CheckpointKind::task_vector) {
        for (const auto& layer : p.layers64) {
            put_u32(out, static_cast<uint32_t>(layer.name.size()));
            out.insert(out.end(), layer.name.begin(), layer.name.end());
            put_u64(out, layer.values.size());
            for (double v : layer.values) put_f64(out, v);
        }
    } else {
        for (const auto& layer : p.layers) {
            put_u32(out, static_cast<uint32_t>(layer.name.size()));
            out.insert(out.end(), layer.name.begin(), layer.name.end());
            put_u64(out, layer.values.size());
            for (float v : layer.values) put_f32(out, v);
        }
    }
    return out;
}

Payload decode(const std::vector<uint8_t>& bytes, const std::string& context) {
    Reader r{bytes.data(), bytes.size(), 0, context};
    r.need(8, "magic");
    if (std::memcmp(r.data, kCheckpointMagic, 8) != 0)
        throw BadMagicError(context + ": bad magic, not a checkpoint file");
    r.pos = 8;
    uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw VersionError(context + ": unsupported version " + std::to_string(version));
    Payload p;
    r.need(32, "spec hash");
    std::memcpy(p.spec_hash.data(), r.data + r.pos, 32);
    r.pos += 32;
    uint32_t layer_count = r.u32("layer count");
    uint32_t kind_raw = r.u32("kind");
    if (kind_raw < 1 || kind_raw > 3)
        throw KindError(context + ": unknown artifact kind " + std::to_string(kind_raw));
    p.kind = static_cast<CheckpointKind>(kind_raw);
    uint32_t label_len = r.u32("label length");
    p.label = r.str(label_len, "label");
    const bool wide = p.kind == CheckpointKind::task_vector;
    for (uint32_t i = 0; i < layer_count; ++i) {
        std::string at = "layer " + std::to_string(i);
        uint32_t name_len = r.u32(at + " name length");
        std::string name = r.str(name_len, at + " name");
        uint64_t count = r.u64(at + " element count");
        r.need(count * (wide ? 8 : 4), at + " values");
        if (wide) {
            NamedArrayD arr;
            arr.name = std::move(name);
            arr.values.reserve(count);
            for (uint64_t e = 0; e < count; ++e) arr.values.push_back(r.f64(at));
            p.layers64.push_back(std::move(arr));
        } else {
            NamedArray arr;
            arr.name = std::move(name);
            arr.values.reserve(count);
            for (uint64_t e = 0; e < count; ++e) arr.values.push_back(r.f32(at));
            p.layers.push_back(std::move(arr));
        }
    }
    return p;
}

std::vector<uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_atomic(const fs::path& path, const void* data, size_t size) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) throw IoError("short write to '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

void check_spec_hash(const Payload& p, const ModelSpec& spec, const std::string& context) {
    if (p.spec_hash != spec.hash())
        throw SpecHashError(context + ": checkpoint spec hash " +
                            hash_hex(p.spec_hash).substr(0, 12) + "... does not match spec " +
                            hash_hex(spec.hash()).substr(0, 12) + "...");
}

void check_kind(const Payload& p, CheckpointKind want, const std::string& context) {
    if (p.kind != want)
        throw KindError(context + ": artifact kind " + std::to_string(static_cast<uint32_t>(p.kind)) +
                        ", expected " + std::to_string(static_cast<uint32_t>(want)));
}

} // namespace

void save_params(const ParameterSet& params, const fs::path& path) {
    Payload p{params.spec_hash, CheckpointKind::parameter_set, "", params.layers, {}};
    auto bytes = encode(p);
    write_file_atomic(path, bytes.data(), bytes.size());
}

ParameterSet load_params(const fs::path& path, const ModelSpec& spec) {
    Payload p = decode(read_file(path), path.string());
    check_kind(p, CheckpointKind::parameter_set, path.string());
    check_spec_hash(p, spec, path.string());
    ParameterSet out{p.spec_hash, std::move(p.layers)};
    check_congruent(spec, out);
    return out;
}

void save_task_vector(const TaskVector& tv, const fs::path& path) {
    Payload p{tv.spec_hash, CheckpointKind::task_vector, tv.source_task, {}, tv.layers};
    auto bytes = encode(p);
    write_file_atomic(path, bytes.data(), bytes.size());
}

TaskVector load_task_vector(const fs::path& path, const ModelSpec& spec) {
    Payload p = decode(read_file(path), path.string());
    check_kind(p, CheckpointKind::task_vector, path.string());
    check_spec_hash(p, spec, path.string());
    TaskVector out{p.spec_hash, std::move(p.label), std::move(p.layers64)};
    check_congruent(spec, out);
    return out;
}

void save_merge_weights(const MergeWeights& w, const SpecHash& spec_hash, const fs::path& path) {
    if (w.model_ids.size() * w.layer_names.size() != w.values.size())
        throw StructuralError("merge weights shape mismatch");
    Payload p;
    p.spec_hash = spec_hash;
    p.kind = CheckpointKind::merge_weights;
    const size_t n = w.layer_names.size();
    for (size_t i = 0; i < w.model_ids.size(); ++i) {
        NamedArray row;
        row.name = w.model_ids[i];
        row.values.assign(w.values.begin() + static_cast<std::ptrdiff_t>(i * n),
                          w.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        p.layers.push_back(std::move(row));
    }
    auto bytes = encode(p);
    write_file_atomic(path, bytes.data(), bytes.size());
}

MergeWeights load_merge_weights(const fs::path& path, const ModelSpec& spec) {
    Payload p = decode(read_file(path), path.string());
    check_kind(p, CheckpointKind::merge_weights, path.string());
    check_spec_hash(p, spec, path.string());
    MergeWeights w;
    for (const auto& d : spec.layers) w.layer_names.push_back(d.name);
    for (auto& row : p.layers) {
        if (row.values.size() != w.layer_names.size())
            throw StructuralError(path.string() + ": merge weight row '" + row.name + "' has " +
                                  std::to_string(row.values.size()) + " entries, spec has " +
                                  std::to_string(w.layer_names.size()) + " layers");
        w.model_ids.push_back(row.name);
        w.values.insert(w.values.end(), row.values.begin(), row.values.end());
    }
    return w;
}

std::vector<uint8_t> params_to_bytes(const ParameterSet& params) {
    Payload p{params.spec_hash, CheckpointKind::parameter_set, "", params.layers, {}};
    return encode(p);
}

ParameterSet params_from_bytes(const std::vector<uint8_t>& bytes) {
    Payload p = decode(bytes, "buffer");
    check_kind(p, CheckpointKind::parameter_set, "buffer");
    return ParameterSet{p.spec_hash, std::move(p.layers)};
}

void write_examples_jsonl(const std::vector<Example>& examples, const fs::path& path) {
    std::string text;
    for (const auto& ex : examples) {
        json rec;
        json xs = json::array();
        for (float v : ex.x) xs.push_back(static_cast<double>(v));
        rec["x"] = xs;
        rec["y"] = ex.y;
        text += rec.dump();
        text += '\n';
    }
    write_file_atomic(path, text.data(), text.size());
}

std::vector<Example> read_examples_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<Example> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        Example ex;
        for (const auto& v : rec.at("x")) ex.x.push_back(static_cast<float>(v.get<double>()));
        ex.y = rec.at("y").get<int>();
        out.push_back(std::move(ex));
    }
    return out;
}

void save_dataset_split(const DatasetSplit& split, const fs::path& dir) {
    fs::create_directories(dir);
    json meta;
    meta["task_name"] = split.task_name;
    meta["input_dim"] = split.input_dim;
    meta["num_classes"] = split.num_classes;
    std::string meta_text = meta.dump(2);
    meta_text += '\n';
    write_file_atomic(dir / "meta.json", meta_text.data(), meta_text.size());
    write_examples_jsonl(split.train, dir / "train.jsonl");
    write_examples_jsonl(split.validation, dir / "validation.jsonl");
    write_examples_jsonl(split.test, dir / "test.jsonl");
}

DatasetSplit load_dataset_split(const fs::path& dir) {
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("cannot open '" + (dir / "meta.json").string() + "'");
    json meta = json::parse(in);
    DatasetSplit split;
    split.task_name = meta.at("task_name").get<std::string>();
    split.input_dim = meta.at("input_dim").get<int>();
    split.num_classes = meta.at("num_classes").get<int>();
    split.train = read_examples_jsonl(dir / "train.jsonl");
    split.validation = read_examples_jsonl(dir / "validation.jsonl");
    split.test = read_examples_jsonl(dir / "test.jsonl");
    return split;
}

std::pair<std::vector<Example>, std::vector<Example>>
split_validation(const std::vector<Example>& train, double fraction, uint64_t seed,
                 const std::string& task_name) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw ConfigError("validation fraction must be in (0, 1), got " + std::to_string(fraction));
    if (train.size() < 2) throw ConfigError("need at least 2 examples to split");

    const size_t n = train.size();
    const size_t v = static_cast<size_t>(std::llround(fraction * static_cast<double>(n)));

    Prng rng(hash_str(seed, task_name));
    std::vector<size_t> order = shuffled_indices(n, rng);
    std::vector<bool> in_validation(n, false);
    for (size_t i = 0; i < v; ++i) in_validation[order[i]] = true;

    std::pair<std::vector<Example>, std::vector<Example>> out;
    for (size_t i = 0; i < n; ++i)
        (in_validation[i] ? out.second : out.first).push_back(train[i]);
    return out;
}

} // namespace mergeforge
