#include "mergeforge/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

namespace {

void check_family(const ParameterSet& pretrained, std::span<const TaskVector> tvs) {
    if (tvs.empty()) throw StructuralError("need at least one task vector");
    for (const auto& tv : tvs) {
        if (tv.spec_hash != pretrained.spec_hash)
            throw StructuralError("task vector '" + tv.source_task + "' belongs to a different spec");
        if (tv.layers.size() != pretrained.layers.size())
            throw StructuralError("task vector layer count mismatch");
        for (size_t l = 0; l < tv.layers.size(); ++l)
            if (tv.layers[l].values.size() != pretrained.layers[l].values.size())
                throw StructuralError("layer '" + tv.layers[l].name + "' shape mismatch");
    }
}

ParameterSet add_scaled_sum(const ParameterSet& pretrained, std::span<const TaskVector> tvs,
                            double lambda) {
    if (lambda == 0.0) return pretrained;
    ParameterSet out;
    out.spec_hash = pretrained.spec_hash;
    out.layers.reserve(pretrained.layers.size());
    for (size_t l = 0; l < pretrained.layers.size(); ++l) {
        const auto& p = pretrained.layers[l].values;
        NamedArray arr;
        arr.name = pretrained.layers[l].name;
        arr.values.resize(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
            double acc = 0.0;
            for (const auto& tv : tvs) acc += tv.layers[l].values[i];
            double v = static_cast<double>(p[i]) + lambda * acc;
            if (!std::isfinite(v)) throw NumericError("non-finite merge result in '" + arr.name + "'");
            arr.values[i] = static_cast<float>(v);
        }
        out.layers.push_back(std::move(arr));
    }
    return out;
}

} // namespace

ParameterSet merge_task_arithmetic(const ParameterSet& pretrained,
                                   std::span<const TaskVector> task_vectors, double lambda) {
    check_family(pretrained, task_vectors);
    return add_scaled_sum(pretrained, task_vectors, lambda);
}

TaskVector dare_sparsify(const TaskVector& tv, double drop_prob, uint64_t seed, uint64_t task_index) {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
        throw ConfigError("drop probability must be in [0, 1), got " + std::to_string(drop_prob));
    TaskVector out;
    out.spec_hash = tv.spec_hash;
    out.source_task = tv.source_task;
    out.layers.reserve(tv.layers.size());
    const double rescale = 1.0 / (1.0 - drop_prob);
    for (const auto& layer : tv.layers) {
        NamedArrayD arr;
        arr.name = layer.name;
        arr.values.resize(layer.values.size());
        const uint64_t layer_key = hash_str(0, layer.name);
        for (size_t e = 0; e < layer.values.size(); ++e) {
            double u = counter_u01(seed, task_index, layer_key, e);
            arr.values[e] = u < drop_prob ? 0.0 : layer.values[e] * rescale;
        }
        out.layers.push_back(std::move(arr));
    }
    return out;
}

ParameterSet merge_dare(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                        double drop_prob, double lambda, uint64_t seed) {
    check_family(pretrained, task_vectors);
    std::vector<TaskVector> sparse;
    sparse.reserve(task_vectors.size());
    for (size_t i = 0; i < task_vectors.size(); ++i)
        sparse.push_back(dare_sparsify(task_vectors[i], drop_prob, seed, i));
    return add_scaled_sum(pretrained, sparse, lambda);
}

TaskVector ties_trim(const TaskVector& tv, double density, TrimScope scope) {
    if (!(density > 0.0 && density <= 1.0))
        throw ConfigError("density must be in (0, 1], got " + std::to_string(density));
    if (density == 1.0) return tv;

    TaskVector out;
    out.spec_hash = tv.spec_hash;
    out.source_task = tv.source_task;
    out.layers.resize(tv.layers.size());
    for (size_t l = 0; l < tv.layers.size(); ++l) {
        out.layers[l].name = tv.layers[l].name;
        out.layers[l].values.assign(tv.layers[l].values.size(), 0.0);
    }

    // indices sorted by |value| descending, position ascending on ties
    auto keep_top = [](std::vector<std::pair<double, size_t>>& mag, size_t keep,
                       const std::function<void(size_t)>& mark) {
        std::sort(mag.begin(), mag.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (size_t i = 0; i < keep && i < mag.size(); ++i) mark(mag[i].second);
    };

    if (scope == TrimScope::global) {
        size_t total = 0;
        for (const auto& layer : tv.layers) total += layer.values.size();
        std::vector<std::pair<double, size_t>> mag;
        mag.reserve(total);
        size_t offset = 0;
        std::vector<size_t> offsets;
        for (const auto& layer : tv.layers) {
            offsets.push_back(offset);
            for (size_t e = 0; e < layer.values.size(); ++e)
                mag.emplace_back(std::abs(layer.values[e]), offset + e);
            offset += layer.values.size();
        }
        size_t keep = static_cast<size_t>(std::ceil(density * static_cast<double>(total)));
        keep_top(mag, keep, [&](size_t flat) {
            size_t l = 0;
            while (l + 1 < offsets.size() && offsets[l + 1] <= flat) ++l;
            out.layers[l].values[flat - offsets[l]] = tv.layers[l].values[flat - offsets[l]];
        });
    } else {
        for (size_t l = 0; l < tv.layers.size(); ++l) {
            const auto& vals = tv.layers[l].values;
            std::vector<std::pair<double, size_t>> mag;
            mag.reserve(vals.size());
            for (size_t e = 0; e < vals.size(); ++e)
                mag.emplace_back(std::abs(vals[e]), e);
            size_t keep = static_cast<size_t>(std::ceil(density * static_cast<double>(vals.size())));
            keep_top(mag, keep, [&](size_t e) { out.layers[l].values[e] = vals[e]; });
        }
    }
    return out;
}

TaskVector ties_merge_vector(std::span<const TaskVector> task_vectors, double density,
                             TrimScope scope) {
    if (task_vectors.empty()) throw StructuralError("need at least one task vector");
    std::vector<TaskVector> trimmed;
    trimmed.reserve(task_vectors.size());
    for (const auto& tv : task_vectors) trimmed.push_back(ties_trim(tv, density, scope));

    TaskVector out;
    out.spec_hash = task_vectors[0].spec_hash;
    out.source_task = "ties";
    out.layers.resize(task_vectors[0].layers.size());
    for (size_t l = 0; l < out.layers.size(); ++l) {
        out.layers[l].name = task_vectors[0].layers[l].name;
        const size_t count = task_vectors[0].layers[l].values.size();
        out.layers[l].values.resize(count);
        for (size_t e = 0; e < count; ++e) {
            double pos_sum = 0.0, neg_sum = 0.0;
            int pos_n = 0, neg_n = 0;
            for (const auto& tv : trimmed) {
                double v = tv.layers[l].values[e];
                if (v > 0.0) {
                    pos_sum += v;
                    ++pos_n;
                } else if (v < 0.0) {
                    neg_sum += v;
                    ++neg_n;
                }
            }
            double pos_avg = pos_n ? pos_sum / pos_n : 0.0;
            double neg_avg = neg_n ? neg_sum / neg_n : 0.0;
            // larger average magnitude wins; exact tie goes positive
            out.layers[l].values[e] = pos_avg >= -neg_avg ? pos_avg : neg_avg;
        }
    }
    return out;
}

ParameterSet merge_ties(const ParameterSet& pretrained, std::span<const TaskVector> task_vectors,
                        double density, double lambda, TrimScope scope) {
    check_family(pretrained, task_vectors);
    TaskVector elected = ties_merge_vector(task_vectors, density, scope);
    std::array<TaskVector, 1> one{std::move(elected)};
    return add_scaled_sum(pretrained, one, lambda);
}

GridSearchResult grid_search_lambda(const std::function<ParameterSet(double)>& merge_at,
                                    std::span<const double> grid, const ModelSpec& spec,
                                    std::span<const ValidationTask> validation) {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    for (double l : grid)
        if (!(l >= 0.0 && l <= 1.0))
            throw ConfigError("lambda grid value " + std::to_string(l) + " outside [0, 1]");
    if (validation.empty()) throw ConfigError("no validation tasks");
    for (const auto& t : validation)
        if (!t.examples || t.examples->empty())
            throw ConfigError("validation set for task '" + t.task_name + "' is empty");

    GridSearchResult result;
    result.curve.reserve(grid.size());
    for (double lambda : grid) {
        ParameterSet merged = merge_at(lambda);
        LambdaCurvePoint point;
        point.lambda = lambda;
        double sum = 0.0;
        for (const auto& t : validation) {
            double acc = evaluate(spec, merged, *t.examples).accuracy;
            point.per_task_accuracy.push_back(acc);
            sum += acc;
        }
        point.mean_accuracy = sum / static_cast<double>(validation.size());
        result.curve.push_back(std::move(point));
    }
    result.best_lambda = pick_best_lambda(result.curve);
    return result;
}

double pick_best_lambda(const std::vector<LambdaCurvePoint>& curve) {
    if (curve.empty()) throw ConfigError("empty lambda curve");
    size_t best = 0;
    for (size_t i = 1; i < curve.size(); ++i) {
        bool better = curve[i].mean_accuracy > curve[best].mean_accuracy;
        bool tie_smaller = curve[i].mean_accuracy == curve[best].mean_accuracy &&
                           curve[i].lambda < curve[best].lambda;
        if (better || tie_smaller) best = i;
    }
    return curve[best].lambda;
}

} // namespace mergeforge
