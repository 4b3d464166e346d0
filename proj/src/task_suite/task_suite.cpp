#include "task_suite/task_suite.hpp"

#include <algorithm>
#include <cmath>

#include "core_math/error.hpp"
#include "core_math/hash.hpp"
#include "core_math/io_util.hpp"
#include "core_math/rng.hpp"

namespace mergelab::data {

using nlohmann::json;

namespace {

constexpr int kPlacementAttempts = 500;

double dist(const std::vector<float>& a, const std::vector<float>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<double> random_unit(CounterRng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

/// `count` mutually orthonormal directions (Gram-Schmidt on Gaussian draws).
std::vector<std::vector<double>> orthonormal_directions(CounterRng& rng, std::size_t count, std::size_t dim) {
    std::vector<std::vector<double>> basis;
    while (basis.size() < count) {
        auto v = random_unit(rng, dim);
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-6) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

/// Labels cycle through the classes; with skew > 0 a fraction of slots is
/// reassigned to the task's favoured class.
Split sample_split(const std::vector<std::vector<float>>& centers, std::size_t n, double sigma, double skew,
                   std::size_t favoured, CounterRng& rng) {
    Split s;
    s.dim = centers.front().size();
    s.inputs.resize(n * s.dim);
    s.labels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t label = skew > 0.0 && rng.uniform() < skew ? favoured : k % centers.size();
        s.labels[k] = static_cast<std::uint8_t>(label);
        for (std::size_t j = 0; j < s.dim; ++j)
            s.inputs[k * s.dim + j] = static_cast<float>(centers[label][j] + sigma * rng.normal());
    }
    return s;
}

json split_manifest(const TaskDataset& task, const char* split_name, const Split& s, std::size_t classes) {
    return {
        {"task_id", task.task_id + 1},
        {"split", split_name},
        {"samples", s.size()},
        {"dim", s.dim},
        {"classes", classes},
        {"inputs_file", "inputs.f32"},
        {"labels_file", "labels.u8"},
        {"inputs_sha256", sha256_hex(as_chars(s.inputs))},
        {"labels_sha256", sha256_hex(std::as_bytes(std::span(s.labels)))},
    };
}

Split read_split(const std::filesystem::path& dir, std::size_t expect_dim) {
    const auto manifest = json::parse(read_file(dir / "manifest.json"));
    Split s;
    s.dim = manifest.at("dim").get<std::size_t>();
    const auto n = manifest.at("samples").get<std::size_t>();
    if (s.dim != expect_dim) fail(ErrorKind::Data, "dataset '" + dir.string() + "' has unexpected input dim");
    const auto inputs = read_file(dir / manifest.at("inputs_file").get<std::string>());
    const auto labels = read_file(dir / manifest.at("labels_file").get<std::string>());
    if (inputs.size() != n * s.dim * sizeof(float) || labels.size() != n)
        fail(ErrorKind::Data, "dataset '" + dir.string() + "' has truncated arrays");
    s.inputs.resize(n * s.dim);
    std::memcpy(s.inputs.data(), inputs.data(), inputs.size());
    s.labels.assign(labels.begin(), labels.end());
    if (sha256_hex(as_chars(s.inputs)) != manifest.at("inputs_sha256").get<std::string>() ||
        sha256_hex(std::as_bytes(std::span(s.labels))) != manifest.at("labels_sha256").get<std::string>())
        fail(ErrorKind::Data, "dataset '" + dir.string() + "' failed its content hash check");
    return s;
}

}  // namespace

SuiteConfig SuiteConfig::default_suite(std::uint64_t seed) {
    SuiteConfig c;
    c.seed = seed;
    return c;
}

SuiteConfig SuiteConfig::conflict_suite(std::uint64_t seed) {
    SuiteConfig c;
    c.seed = seed;
    c.task_separation = 3.0;
    c.region_scale = 1.5;
    return c;
}

void SuiteConfig::validate() const {
    if (tasks < 2) fail(ErrorKind::Domain, "suite needs T >= 2 tasks");
    if (dim < 2) fail(ErrorKind::Domain, "suite needs input dim d >= 2");
    if (classes < 2 || classes > 255) fail(ErrorKind::Domain, "suite needs 2 <= c <= 255 classes");
    if (n_train < classes || n_test < 1) fail(ErrorKind::Domain, "suite needs n_train >= c and n_test >= 1");
    if (!(sigma > 0.0)) fail(ErrorKind::Domain, "sigma must be positive");
    if (!(class_sharing >= 0.0 && class_sharing <= 1.0)) fail(ErrorKind::Domain, "class_sharing must lie in [0, 1]");
    if (!(label_skew >= 0.0 && label_skew < 1.0)) fail(ErrorKind::Domain, "label_skew must lie in [0, 1)");
}

TaskSuite generate_suite(const SuiteConfig& config) {
    config.validate();
    const bool shared = config.class_sharing > 0.0;
    const std::size_t needed = config.tasks + (shared ? config.classes : 0);
    if (needed > config.dim)
        fail(ErrorKind::Data, "infeasible separation: " + std::to_string(config.tasks) + " task regions" +
                                  (shared ? " plus " + std::to_string(config.classes) + " class prototypes" : "") +
                                  " need input dim d >= " + std::to_string(needed) + " (got d=" +
                                  std::to_string(config.dim) + "); use a larger d");

    // Rows [0, T) are region directions, rows [T, T+c) the shared class prototypes.
    CounterRng dir_rng(config.seed, 1);
    const auto basis = orthonormal_directions(dir_rng, needed, config.dim);
    const double min_task_gap = config.task_separation * config.sigma;
    const double min_class_gap = config.class_separation * config.sigma;
    const double own = std::sqrt(1.0 - config.class_sharing * config.class_sharing);

    TaskSuite suite;
    suite.config = config;
    for (std::size_t t = 0; t < config.tasks; ++t) {
        CounterRng rng(config.seed, 100 + t);
        // Each task maps prototypes to labels through its own permutation.
        std::vector<std::size_t> perm(config.classes);
        for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
        CounterRng perm_rng(config.seed, 200 + t);
        for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[perm_rng.below(k)]);

        std::vector<std::vector<float>> centers;
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            centers.assign(config.classes, std::vector<float>(config.dim));
            for (std::size_t k = 0; k < config.classes; ++k) {
                auto v = random_unit(rng, config.dim);
                if (shared) {
                    const auto& proto = basis[config.tasks + perm[k]];
                    double norm = 0.0;
                    for (std::size_t j = 0; j < config.dim; ++j) {
                        v[j] = config.class_sharing * proto[j] + own * v[j];
                        norm += v[j] * v[j];
                    }
                    for (double& x : v) x /= std::sqrt(norm);
                }
                for (std::size_t j = 0; j < config.dim; ++j)
                    centers[k][j] = static_cast<float>(config.region_scale * basis[t][j] + config.class_scale * v[j]);
            }
            placed = true;
            for (std::size_t a = 0; a < centers.size() && placed; ++a)
                for (std::size_t b = a + 1; b < centers.size() && placed; ++b)
                    placed = dist(centers[a], centers[b]) >= min_class_gap;
            for (std::size_t prev = 0; prev < t && placed; ++prev)
                for (const auto& other : suite.tasks[prev].centers)
                    for (const auto& c : centers)
                        if (dist(c, other) < min_task_gap) placed = false;
        }
        if (!placed)
            fail(ErrorKind::Data, "infeasible separation: could not place task " + std::to_string(t + 1) +
                                      " clusters; use a larger d or region_scale");

        TaskDataset task;
        task.task_id = t;
        task.centers = std::move(centers);
        CounterRng train_rng(config.seed, 1000 + 2 * t);
        CounterRng test_rng(config.seed, 1001 + 2 * t);
        const std::size_t favoured = t % config.classes;
        task.train = sample_split(task.centers, config.n_train, config.sigma, config.label_skew, favoured, train_rng);
        task.test = sample_split(task.centers, config.n_test, config.sigma, config.label_skew, favoured, test_rng);

        const double probe = linear_probe_accuracy(task.train, task.test, config.classes);
        if (probe < config.probe_threshold)
            fail(ErrorKind::Data, "task " + std::to_string(t + 1) + " linear probe accuracy " + fixed6(probe) +
                                      " below " + fixed6(config.probe_threshold) + "; use a larger d");
        suite.probe_accuracy.push_back(probe);
        suite.tasks.push_back(std::move(task));
    }
    return suite;
}

Split far_field_samples(const TaskSuite& suite, std::size_t n, std::uint64_t seed) {
    double max_norm = 0.0;
    for (const auto& t : suite.tasks)
        for (const auto& c : t.centers) {
            double norm = 0.0;
            for (float v : c) norm += static_cast<double>(v) * v;
            max_norm = std::max(max_norm, std::sqrt(norm));
        }
    const double radius = 3.0 * max_norm;
    CounterRng rng(seed, 7000);
    Split s;
    s.dim = suite.dim();
    s.inputs.resize(n * s.dim);
    s.labels.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto u = random_unit(rng, s.dim);
        for (std::size_t j = 0; j < s.dim; ++j) s.inputs[k * s.dim + j] = static_cast<float>(radius * u[j]);
    }
    return s;
}

double linear_probe_accuracy(const Split& train, const Split& test, std::size_t classes) {
    const std::size_t d = train.dim, n = train.size();
    // Standardize with train statistics so a fixed step size works for any scale.
    std::vector<double> mean(d, 0.0), scale(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += train.x(i)[j];
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double v = train.x(i)[j] - mean[j];
            scale[j] += v * v;
        }
    for (double& s : scale) s = std::sqrt(s / static_cast<double>(n)) + 1e-12;

    std::vector<double> w(classes * (d + 1), 0.0), grad(w.size()), z(classes), xs(d);
    auto load = [&](std::span<const float> x) {
        for (std::size_t j = 0; j < d; ++j) xs[j] = (x[j] - mean[j]) / scale[j];
    };
    auto logits = [&]() {
        for (std::size_t k = 0; k < classes; ++k) {
            const double* row = w.data() + k * (d + 1);
            double acc = row[d];
            for (std::size_t j = 0; j < d; ++j) acc += row[j] * xs[j];
            z[k] = acc;
        }
    };
    constexpr int kIterations = 300;
    constexpr double kStep = 0.5;
    for (int it = 0; it < kIterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            load(train.x(i));
            logits();
            const double zmax = *std::max_element(z.begin(), z.end());
            double sum = 0.0;
            for (double& v : z) sum += (v = std::exp(v - zmax));
            for (std::size_t k = 0; k < classes; ++k) {
                const double g = z[k] / sum - (k == train.labels[i] ? 1.0 : 0.0);
                double* row = grad.data() + k * (d + 1);
                for (std::size_t j = 0; j < d; ++j) row[j] += g * xs[j];
                row[d] += g;
            }
        }
        for (std::size_t q = 0; q < w.size(); ++q) w[q] -= kStep * grad[q] / static_cast<double>(n);
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        load(test.x(i));
        logits();
        const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        correct += best == test.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

Split union_split(const TaskSuite& suite, bool test) {
    Split out;
    out.dim = suite.dim();
    for (const auto& t : suite.tasks) {
        const Split& s = test ? t.test : t.train;
        out.inputs.insert(out.inputs.end(), s.inputs.begin(), s.inputs.end());
        out.labels.insert(out.labels.end(), s.labels.begin(), s.labels.end());
    }
    return out;
}

json suite_config_to_json(const SuiteConfig& c) {
    return {{"tasks", c.tasks},
            {"dim", c.dim},
            {"classes", c.classes},
            {"n_train", c.n_train},
            {"n_test", c.n_test},
            {"seed", c.seed},
            {"sigma", c.sigma},
            {"task_separation", c.task_separation},
            {"class_separation", c.class_separation},
            {"region_scale", c.region_scale},
            {"class_scale", c.class_scale},
            {"class_sharing", c.class_sharing},
            {"label_skew", c.label_skew},
            {"probe_threshold", c.probe_threshold}};
}

SuiteConfig suite_config_from_json(const json& j) {
    SuiteConfig c;
    c.tasks = j.at("tasks").get<std::size_t>();
    c.dim = j.at("dim").get<std::size_t>();
    c.classes = j.at("classes").get<std::size_t>();
    c.n_train = j.at("n_train").get<std::size_t>();
    c.n_test = j.at("n_test").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.sigma = j.at("sigma").get<double>();
    c.task_separation = j.at("task_separation").get<double>();
    c.class_separation = j.at("class_separation").get<double>();
    c.region_scale = j.at("region_scale").get<double>();
    c.class_scale = j.at("class_scale").get<double>();
    c.class_sharing = j.at("class_sharing").get<double>();
    c.label_skew = j.at("label_skew").get<double>();
    c.probe_threshold = j.at("probe_threshold").get<double>();
    return c;
}

std::filesystem::path suite_dir(const std::filesystem::path& root, std::uint64_t seed) {
    return root / "suite" / std::to_string(seed);
}

std::filesystem::path write_suite(const std::filesystem::path& root, const TaskSuite& suite) {
    const auto dir = suite_dir(root, suite.config.seed);
    json centers = json::array();
    for (const auto& task : suite.tasks) {
        const auto task_dir = dir / ("task" + std::to_string(task.task_id + 1));
        for (const auto& [name, split] : {std::pair{"train", &task.train}, std::pair{"test", &task.test}}) {
            write_file(task_dir / name / "manifest.json", split_manifest(task, name, *split, suite.classes()).dump(2));
            write_file(task_dir / name / "inputs.f32", as_chars(split->inputs));
            write_file(task_dir / name / "labels.u8",
                       std::string_view(reinterpret_cast<const char*>(split->labels.data()), split->labels.size()));
        }
        centers.push_back(task.centers);
    }
    json manifest = {{"format", "mergelab-suite"},
                     {"config", suite_config_to_json(suite.config)},
                     {"centers", std::move(centers)},
                     {"probe_accuracy", suite.probe_accuracy}};
    write_file(dir / "suite.json", manifest.dump(2));
    return dir;
}

TaskSuite read_suite(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "suite.json"))
        fail(ErrorKind::Data, "no dataset at '" + dir.string() + "'; run `gen-data` first");
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "suite.json"));
    } catch (const json::exception& e) {
        fail(ErrorKind::Data, "suite manifest '" + (dir / "suite.json").string() + "' is malformed: " + e.what());
    }
    TaskSuite suite;
    suite.config = suite_config_from_json(manifest.at("config"));
    suite.probe_accuracy = manifest.at("probe_accuracy").get<std::vector<double>>();
    const auto centers = manifest.at("centers").get<std::vector<std::vector<std::vector<float>>>>();
    for (std::size_t t = 0; t < suite.config.tasks; ++t) {
        TaskDataset task;
        task.task_id = t;
        const auto task_dir = dir / ("task" + std::to_string(t + 1));
        task.train = read_split(task_dir / "train", suite.config.dim);
        task.test = read_split(task_dir / "test", suite.config.dim);
        task.centers = centers.at(t);
        suite.tasks.push_back(std::move(task));
    }
    return suite;
}

}  // namespace mergelab::data
