#include "mergeforge/task_vector.hpp"

#include <algorithm>
#include <cmath>

#include "mergeforge/errors.hpp"

namespace mergeforge {

namespace {

void check_same_shape(const ParameterSet& a, const ParameterSet& b) {
    if (a.spec_hash != b.spec_hash)
        throw StructuralError("parameter sets belong to different specs");
    if (a.layers.size() != b.layers.size())
        throw StructuralError("layer count mismatch");
    for (size_t i = 0; i < a.layers.size(); ++i)
        if (a.layers[i].name != b.layers[i].name || a.layers[i].values.size() != b.layers[i].values.size())
            throw StructuralError("layer '" + a.layers[i].name + "' shape mismatch");
}

// type-7 quantile (linear interpolation), matching the usual numpy default
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    if (sorted.size() == 1) return sorted[0];
    double pos = q * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace

void check_congruent(const ModelSpec& spec, const TaskVector& tv) {
    if (tv.spec_hash != spec.hash())
        throw StructuralError("task vector was built for a different spec");
    if (tv.layers.size() != spec.layers.size())
        throw StructuralError("task vector layer count mismatch");
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        if (tv.layers[i].name != spec.layers[i].name ||
            tv.layers[i].values.size() != spec.layers[i].element_count())
            throw StructuralError("task vector layer '" + tv.layers[i].name + "' shape mismatch");
        for (double v : tv.layers[i].values)
            if (!std::isfinite(v)) throw NumericError("non-finite task vector value in '" + tv.layers[i].name + "'");
    }
}

TaskVector compute_task_vector(const ParameterSet& fine_tuned, const ParameterSet& pretrained,
                               const std::string& source_task) {
    check_same_shape(fine_tuned, pretrained);
    TaskVector tv;
    tv.spec_hash = pretrained.spec_hash;
    tv.source_task = source_task;
    tv.layers.reserve(pretrained.layers.size());
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        NamedArrayD arr;
        arr.name = pretrained.layers[l].name;
        const auto& f = fine_tuned.layers[l].values;
        const auto& p = pretrained.layers[l].values;
        arr.values.resize(p.size());
        // exact in double for any two finite floats in range
        for (size_t i = 0; i < p.size(); ++i)
            arr.values[i] = static_cast<double>(f[i]) - static_cast<double>(p[i]);
        tv.layers.push_back(std::move(arr));
    }
    return tv;
}

ParameterSet apply(const ParameterSet& pretrained, const TaskVector& delta, double scale) {
    if (pretrained.spec_hash != delta.spec_hash)
        throw StructuralError("task vector belongs to a different spec");
    if (pretrained.layers.size() != delta.layers.size())
        throw StructuralError("task vector layer count mismatch");
    ParameterSet out;
    out.spec_hash = pretrained.spec_hash;
    out.layers.reserve(pretrained.layers.size());
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        const auto& p = pretrained.layers[l].values;
        const auto& d = delta.layers[l].values;
        if (delta.layers[l].name != pretrained.layers[l].name || d.size() != p.size())
            throw StructuralError("layer '" + pretrained.layers[l].name + "' shape mismatch");
        NamedArray arr;
        arr.name = pretrained.layers[l].name;
        arr.values.resize(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
            double v = static_cast<double>(p[i]) + scale * d[i];
            if (!std::isfinite(v))
                throw NumericError("non-finite result in layer '" + arr.name + "'");
            arr.values[i] = static_cast<float>(v);
        }
        out.layers.push_back(std::move(arr));
    }
    return out;
}

std::vector<LayerStats> layer_stats(const TaskVector& tv) {
    if (tv.layers.empty()) throw StructuralError("task vector has no layers");
    std::vector<LayerStats> stats;
    stats.reserve(tv.layers.size());
    for (const auto& layer : tv.layers) {
        LayerStats s;
        s.layer_name = layer.name;
        const auto& v = layer.values;
        if (v.empty()) throw StructuralError("layer '" + layer.name + "' is empty");
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) {
            double d = x - s.mean;
            sq += d * d;
        }
        s.stddev = std::sqrt(sq / static_cast<double>(v.size()));
        std::vector<double> sorted(v);
        std::sort(sorted.begin(), sorted.end());
        s.min_value = sorted.front();
        s.max_value = sorted.back();
        s.q1 = quantile_sorted(sorted, 0.25);
        s.median = quantile_sorted(sorted, 0.5);
        s.q3 = quantile_sorted(sorted, 0.75);
        stats.push_back(std::move(s));
    }
    return stats;
}

std::vector<double> flatten(const TaskVector& tv) {
    std::vector<double> flat;
    size_t total = 0;
    for (const auto& l : tv.layers) total += l.values.size();
    flat.reserve(total);
    for (const auto& l : tv.layers) flat.insert(flat.end(), l.values.begin(), l.values.end());
    return flat;
}

double cosine_similarity(const TaskVector& a, const TaskVector& b) {
    if (a.layers.size() != b.layers.size())
        throw StructuralError("cosine: layer count mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t l = 0; l < a.layers.size(); ++l) {
        const auto& va = a.layers[l].values;
        const auto& vb = b.layers[l].values;
        if (va.size() != vb.size()) throw StructuralError("cosine: layer shape mismatch");
        for (size_t i = 0; i < va.size(); ++i) {
            dot += va[i] * vb[i];
            na += va[i] * va[i];
            nb += vb[i] * vb[i];
        }
    }
    if (na == 0.0 || nb == 0.0) return 0.0; // degenerate zero vector
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace mergeforge
