#include "mergeforge/model.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

using nlohmann::json;

const char* to_string(LayerKind k) {
    return k == LayerKind::dense ? "dense" : "bias";
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        default: return "identity";
    }
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

ModelSpec ModelSpec::mlp(int input_dim, const std::vector<int>& hidden_dims, int num_classes) {
    ModelSpec spec;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    std::vector<int> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(num_classes);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        bool last = (i + 2 == dims.size());
        std::string base = "fc" + std::to_string(i + 1);
        spec.layers.push_back({base + ".weight", LayerKind::dense, dims[i], dims[i + 1],
                               Activation::identity});
        spec.layers.push_back({base + ".bias", LayerKind::bias, dims[i + 1], dims[i + 1],
                               last ? Activation::identity : Activation::relu});
    }
    spec.validate();
    return spec;
}

void ModelSpec::validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2, got " + std::to_string(num_classes));
    if (input_dim < 1) throw ConfigError("input_dim must be >= 1, got " + std::to_string(input_dim));
    if (layers.empty()) throw StructuralError("spec has no layers");

    std::set<std::string> names;
    for (const auto& l : layers) {
        if (l.input_dim < 1 || l.output_dim < 1)
            throw StructuralError("layer '" + l.name + "' has non-positive dims");
        if (!names.insert(l.name).second)
            throw StructuralError("duplicate layer name '" + l.name + "'");
    }

    int prev_out = input_dim;
    int dense_seen = 0;
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.kind == LayerKind::dense) {
            if (l.input_dim != prev_out)
                throw StructuralError("dense layer '" + l.name + "' expects input " +
                                      std::to_string(l.input_dim) + " but chain provides " +
                                      std::to_string(prev_out));
            prev_out = l.output_dim;
            ++dense_seen;
        } else {
            if (l.output_dim != prev_out)
                throw StructuralError("bias layer '" + l.name + "' has dim " +
                                      std::to_string(l.output_dim) + ", chain provides " +
                                      std::to_string(prev_out));
        }
    }
    if (dense_seen == 0) throw StructuralError("spec has no dense layers");
    if (prev_out != num_classes)
        throw StructuralError("final dense output " + std::to_string(prev_out) +
                              " does not match num_classes " + std::to_string(num_classes));
}

size_t ModelSpec::param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.element_count();
    return n;
}

std::string ModelSpec::canonical_json() const {
    json doc;
    doc["input_dim"] = input_dim;
    doc["num_classes"] = num_classes;
    json arr = json::array();
    for (const auto& l : layers) {
        json jl;
        jl["name"] = l.name;
        jl["kind"] = to_string(l.kind);
        jl["input_dim"] = l.input_dim;
        jl["output_dim"] = l.output_dim;
        jl["activation"] = to_string(l.activation);
        arr.push_back(jl);
    }
    doc["layers"] = arr;
    return doc.dump(); // nlohmann keeps keys sorted -> canonical
}

SpecHash ModelSpec::hash() const {
    std::string text = canonical_json();
    SpecHash out{};
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw Error("sha256 digest failed");
    return out;
}

ModelSpec ModelSpec::from_json_text(const std::string& text) {
    json doc = json::parse(text);
    ModelSpec spec;
    spec.input_dim = doc.at("input_dim").get<int>();
    spec.num_classes = doc.at("num_classes").get<int>();
    for (const auto& jl : doc.at("layers")) {
        LayerDescriptor l;
        l.name = jl.at("name").get<std::string>();
        l.kind = jl.at("kind").get<std::string>() == "dense" ? LayerKind::dense : LayerKind::bias;
        l.input_dim = jl.at("input_dim").get<int>();
        l.output_dim = jl.at("output_dim").get<int>();
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        spec.layers.push_back(std::move(l));
    }
    spec.validate();
    return spec;
}

void check_congruent(const ModelSpec& spec, const ParameterSet& params) {
    if (params.spec_hash != spec.hash())
        throw StructuralError("parameter set was built for a different spec");
    if (params.layers.size() != spec.layers.size())
        throw StructuralError("layer count mismatch: params " + std::to_string(params.layers.size()) +
                              ", spec " + std::to_string(spec.layers.size()));
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        const auto& a = params.layers[i];
        if (a.name != d.name)
            throw StructuralError("layer " + std::to_string(i) + " name '" + a.name +
                                  "' does not match spec '" + d.name + "'");
        if (a.values.size() != d.element_count())
            throw StructuralError("layer '" + d.name + "' has " + std::to_string(a.values.size()) +
                                  " values, spec expects " + std::to_string(d.element_count()));
        for (float v : a.values)
            if (!std::isfinite(v))
                throw NumericError("non-finite value in layer '" + d.name + "'");
    }
}

ParameterSet init_params(const ModelSpec& spec, uint64_t seed) {
    ParameterSet p;
    p.spec_hash = spec.hash();
    for (const auto& d : spec.layers) {
        NamedArray arr;
        arr.name = d.name;
        arr.values.resize(d.element_count(), 0.0f);
        if (d.kind == LayerKind::dense) {
            double scale = std::sqrt(2.0 / static_cast<double>(d.input_dim));
            uint64_t key = hash_str(seed, d.name);
            for (size_t e = 0; e < arr.values.size(); ++e)
                arr.values[e] = static_cast<float>(scale * counter_normal(key, 1, 0, e));
        }
        p.layers.push_back(std::move(arr));
    }
    return p;
}

ParameterSet zero_params(const ModelSpec& spec) {
    ParameterSet p;
    p.spec_hash = spec.hash();
    for (const auto& d : spec.layers)
        p.layers.push_back({d.name, std::vector<float>(d.element_count(), 0.0f)});
    return p;
}

std::string hash_hex(const SpecHash& h) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (uint8_t b : h) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

} // namespace mergeforge
