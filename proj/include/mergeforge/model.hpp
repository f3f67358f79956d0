#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mergeforge {

enum class LayerKind { dense, bias };
enum class Activation { relu, tanh, identity };

const char* to_string(LayerKind k);
const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One named parameter array. A dense descriptor is a (output_dim x input_dim)
// row-major matrix; a bias descriptor is a vector of output_dim values whose
// activation is applied after the add.
struct LayerDescriptor {
    std::string name;
    LayerKind kind = LayerKind::dense;
    int input_dim = 0;
    int output_dim = 0;
    Activation activation = Activation::identity;

    size_t element_count() const {
        return kind == LayerKind::dense
                   ? static_cast<size_t>(input_dim) * static_cast<size_t>(output_dim)
                   : static_cast<size_t>(output_dim);
    }
};

using SpecHash = std::array<uint8_t, 32>;

// Architecture of the reference model: a dense/bias chain ending in num_classes
// logits. The per-array granularity here is the unit that later receives one
// merge weight.
struct ModelSpec {
    std::vector<LayerDescriptor> layers;
    int input_dim = 0;
    int num_classes = 0;

    // input_dim -> hidden... -> num_classes, ReLU between hidden blocks,
    // identity on the logits.
    static ModelSpec mlp(int input_dim, const std::vector<int>& hidden_dims, int num_classes);

    void validate() const; // throws StructuralError / ConfigError

    size_t layer_count() const { return layers.size(); }
    size_t param_count() const;

    // Canonical JSON rendering (sorted keys, fixed field set) and its SHA-256.
    // Checkpoints embed the digest so files can be validated against a spec.
    std::string canonical_json() const;
    SpecHash hash() const;

    static ModelSpec from_json_text(const std::string& text);
};

template <typename T>
struct BasicNamedArray {
    std::string name;
    std::vector<T> values;

    bool operator==(const BasicNamedArray&) const = default;
};

using NamedArray = BasicNamedArray<float>;
// Task-vector deltas are kept in double so that pretrained + delta reproduces
// the fine-tuned values bit-exactly; float32 differences drop low bits for a
// sizable share of real checkpoints.
using NamedArrayD = BasicNamedArray<double>;

// A model's parameters: one float32 array per spec layer, in spec order.
struct ParameterSet {
    SpecHash spec_hash{};
    std::vector<NamedArray> layers;

    bool operator==(const ParameterSet&) const = default;
};

// Shape/finiteness check against a spec; throws StructuralError or NumericError.
void check_congruent(const ModelSpec& spec, const ParameterSet& params);

// Deterministic init: weights ~ N(0, sqrt(2/fan_in)) keyed by (seed, layer
// name, element), biases zero.
ParameterSet init_params(const ModelSpec& spec, uint64_t seed);

ParameterSet zero_params(const ModelSpec& spec);

std::string hash_hex(const SpecHash& h);

} // namespace mergeforge
