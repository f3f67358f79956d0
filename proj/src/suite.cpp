#include "mergeforge/suite.hpp"

#include <cmath>
#include <string>

#include "mergeforge/errors.hpp"
#include "mergeforge/rng.hpp"

namespace mergeforge {

namespace {

using Matrix = std::vector<std::vector<double>>; // rows

// Orthonormalize rows in place (modified Gram-Schmidt); rows that collapse are
// redrawn from the stream.
void orthonormalize(Matrix& m, Prng& rng) {
    for (size_t r = 0; r < m.size(); ++r) {
        for (int attempt = 0;; ++attempt) {
            for (size_t prev = 0; prev < r; ++prev) {
                double dot = 0.0;
                for (size_t i = 0; i < m[r].size(); ++i) dot += m[r][i] * m[prev][i];
                for (size_t i = 0; i < m[r].size(); ++i) m[r][i] -= dot * m[prev][i];
            }
            double norm = 0.0;
            for (double v : m[r]) norm += v * v;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (double& v : m[r]) v /= norm;
                break;
            }
            if (attempt > 32) throw NumericError("could not orthonormalize basis");
            for (double& v : m[r]) v = rng.next_normal();
        }
    }
}

Matrix random_rotation(int dim, Prng& rng) {
    Matrix m(static_cast<size_t>(dim), std::vector<double>(static_cast<size_t>(dim)));
    for (auto& row : m)
        for (double& v : row) v = rng.next_normal();
    orthonormalize(m, rng);
    return m;
}

// Orthogonal matrix near the identity; blend = 0 gives the identity exactly.
Matrix partial_rotation(int dim, double blend, Prng& rng) {
    Matrix m(static_cast<size_t>(dim), std::vector<double>(static_cast<size_t>(dim), 0.0));
    for (int r = 0; r < dim; ++r) {
        m[static_cast<size_t>(r)][static_cast<size_t>(r)] = 1.0;
        for (int c = 0; c < dim; ++c)
            m[static_cast<size_t>(r)][static_cast<size_t>(c)] += blend * rng.next_normal();
    }
    orthonormalize(m, rng);
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    size_t n = a.size();
    Matrix out(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t k = 0; k < n; ++k) {
            double aik = a[i][k];
            for (size_t j = 0; j < n; ++j) out[i][j] += aik * b[k][j];
        }
    return out;
}

std::vector<double> rotate(const Matrix& q, const std::vector<double>& x) {
    std::vector<double> out(q.size(), 0.0);
    for (size_t r = 0; r < q.size(); ++r) {
        double acc = 0.0;
        for (size_t c = 0; c < x.size(); ++c) acc += q[r][c] * x[c];
        out[r] = acc;
    }
    return out;
}

struct TaskRecipe {
    Matrix rotation;
    std::vector<int> label_map; // component -> label
};

std::vector<Example> sample_examples(const TaskRecipe& recipe, const Matrix& centers,
                                     int count, double noise, Prng& rng) {
    const int num_components = static_cast<int>(centers.size());
    const size_t dim = centers[0].size();
    std::vector<std::vector<double>> rotated(centers.size());
    for (size_t c = 0; c < centers.size(); ++c) rotated[c] = rotate(recipe.rotation, centers[c]);

    std::vector<Example> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        int component = i % num_components;
        Example ex;
        ex.x.resize(dim);
        for (size_t d = 0; d < dim; ++d)
            ex.x[d] = static_cast<float>(rotated[static_cast<size_t>(component)][d] +
                                         noise * rng.next_normal());
        ex.y = recipe.label_map[static_cast<size_t>(component)];
        out.push_back(std::move(ex));
    }
    rng.shuffle(out);
    return out;
}

std::string task_name(const char* prefix, int index) {
    std::string n = std::to_string(index + 1);
    if (n.size() < 2) n = "0" + n;
    return std::string(prefix) + n;
}

} // namespace

TaskSuite generate_suite(const SuiteConfig& cfg) {
    if (cfg.k_in < 2) throw ConfigError("k_in must be >= 2");
    if (cfg.k_out < 0) throw ConfigError("k_out must be >= 0");
    if (cfg.num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (cfg.num_classes > cfg.input_dim)
        throw ConfigError("num_classes " + std::to_string(cfg.num_classes) +
                          " exceeds available mixture components " + std::to_string(cfg.input_dim));
    if (cfg.train_size < 1 || cfg.val_size < 1 || cfg.test_size < 1 || cfg.pretrain_per_task < 1)
        throw ConfigError("split sizes must be positive");

    TaskSuite suite;
    suite.generator_seed = cfg.seed;

    // shared component centers, orthonormal
    Matrix centers(static_cast<size_t>(cfg.num_classes),
                   std::vector<double>(static_cast<size_t>(cfg.input_dim)));
    {
        Prng rng(hash_str(cfg.seed, "centers"));
        for (auto& row : centers)
            for (double& v : row) v = rng.next_normal();
        orthonormalize(centers, rng);
    }

    auto make_label_map = [&](uint64_t key) {
        std::vector<int> map(static_cast<size_t>(cfg.num_classes));
        for (int c = 0; c < cfg.num_classes; ++c) map[static_cast<size_t>(c)] = c;
        Prng rng(key);
        rng.shuffle(map);
        return map;
    };

    // Rotations are rejection-sampled so no task's clusters sit on top of
    // another task's: overlapping clusters with permuted labels would put a
    // hard ceiling on every multi-task model.
    std::vector<std::vector<double>> placed; // rotated centers of accepted tasks
    auto max_overlap = [&](const Matrix& rotation) {
        double worst = 0.0;
        for (const auto& c : centers) {
            std::vector<double> rc = rotate(rotation, c);
            for (const auto& other : placed) {
                double dot = 0.0;
                for (size_t i = 0; i < rc.size(); ++i) dot += rc[i] * other[i];
                worst = std::max(worst, std::abs(dot));
            }
        }
        return worst;
    };
    auto place = [&](const Matrix& rotation) {
        for (const auto& c : centers) placed.push_back(rotate(rotation, c));
    };

    std::vector<TaskRecipe> in_recipes;
    for (int t = 0; t < cfg.k_in; ++t) {
        Prng rng(hash_combine(hash_str(cfg.seed, "rotation"), static_cast<uint64_t>(t)));
        TaskRecipe recipe;
        recipe.rotation = random_rotation(cfg.input_dim, rng);
        for (int attempt = 0; attempt < 64 && max_overlap(recipe.rotation) > 0.45; ++attempt)
            recipe.rotation = random_rotation(cfg.input_dim, rng);
        place(recipe.rotation);
        recipe.label_map = make_label_map(hash_combine(hash_str(cfg.seed, "labels"), static_cast<uint64_t>(t)));
        in_recipes.push_back(std::move(recipe));
    }

    auto build_split = [&](const TaskRecipe& recipe, const std::string& name, uint64_t stream_key) {
        DatasetSplit split;
        split.task_name = name;
        split.input_dim = cfg.input_dim;
        split.num_classes = cfg.num_classes;
        Prng train_rng(hash_combine(stream_key, 0));
        Prng val_rng(hash_combine(stream_key, 1));
        Prng test_rng(hash_combine(stream_key, 2));
        split.train = sample_examples(recipe, centers, cfg.train_size, cfg.noise, train_rng);
        split.validation = sample_examples(recipe, centers, cfg.val_size, cfg.noise, val_rng);
        split.test = sample_examples(recipe, centers, cfg.test_size, cfg.noise, test_rng);
        return split;
    };

    for (int t = 0; t < cfg.k_in; ++t) {
        std::string name = task_name("task", t);
        suite.in_domain.push_back(
            build_split(in_recipes[static_cast<size_t>(t)], name, hash_str(cfg.seed, "data:" + name)));
    }

    for (int t = 0; t < cfg.k_out; ++t) {
        int parent = t % cfg.k_in;
        Prng rng(hash_combine(hash_str(cfg.seed, "ood_rotation"), static_cast<uint64_t>(t)));
        TaskRecipe recipe;
        recipe.rotation = matmul(in_recipes[static_cast<size_t>(parent)].rotation,
                                 partial_rotation(cfg.input_dim, cfg.ood_blend, rng));
        recipe.label_map = in_recipes[static_cast<size_t>(parent)].label_map;
        std::string name = task_name("ood", t);
        suite.out_of_domain.push_back(build_split(recipe, name, hash_str(cfg.seed, "data:" + name)));
    }

    // pretraining mixture: a modest sample of every in-domain task
    DatasetSplit& mix = suite.pretrain_mixture;
    mix.task_name = "pretrain_mixture";
    mix.input_dim = cfg.input_dim;
    mix.num_classes = cfg.num_classes;
    for (int t = 0; t < cfg.k_in; ++t) {
        Prng rng(hash_combine(hash_str(cfg.seed, "pretrain"), static_cast<uint64_t>(t)));
        auto rows = sample_examples(in_recipes[static_cast<size_t>(t)], centers,
                                    cfg.pretrain_per_task, cfg.noise, rng);
        mix.train.insert(mix.train.end(), rows.begin(), rows.end());
        Prng val_rng(hash_combine(hash_str(cfg.seed, "pretrain_val"), static_cast<uint64_t>(t)));
        auto val_rows = sample_examples(in_recipes[static_cast<size_t>(t)], centers,
                                        std::max(cfg.val_size / cfg.k_in, 4), cfg.noise, val_rng);
        mix.validation.insert(mix.validation.end(), val_rows.begin(), val_rows.end());
    }
    Prng mix_rng(hash_str(cfg.seed, "pretrain_shuffle"));
    mix_rng.shuffle(mix.train);

    return suite;
}

} // namespace mergeforge
