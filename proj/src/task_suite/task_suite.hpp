#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mergelab::data {

/// Row-major sample matrix with integer labels.
struct Split {
    std::size_t dim = 0;
    std::vector<float> inputs;  // size() * dim
    std::vector<std::uint8_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::span<const float> x(std::size_t i) const { return std::span<const float>(inputs).subspan(i * dim, dim); }
    bool operator==(const Split&) const = default;
};

struct TaskDataset {
    std::size_t task_id = 0;  // 0-based
    Split train;
    Split test;
    std::vector<std::vector<float>> centers;  // one per class

    bool operator==(const TaskDataset&) const = default;
};

struct SuiteConfig {
    std::size_t tasks = 4;
    std::size_t dim = 16;
    std::size_t classes = 4;
    std::size_t n_train = 512;
    std::size_t n_test = 256;
    std::uint64_t seed = 0;
    double sigma = 0.5;
    /// Minimum distance between cluster centers of different tasks, in sigmas.
    double task_separation = 6.0;
    /// Minimum distance between cluster centers of the same task, in sigmas.
    double class_separation = 6.0;
    /// Distance of each task's region center from the origin.
    double region_scale = 10.0;
    /// Distance of each class center from its task's region center.
    double class_scale = 2.5;
    // Weight of the shared class prototype in each class offset (0 = independent offsets).
    double class_sharing = 0.0;
    // Fraction of samples relabelled to the task's favoured class (t mod c).
    double label_skew = 0.0;
    /// Minimum test accuracy a per-task linear probe must reach at generation.
    double probe_threshold = 0.99;

    /// Default desk suite: T=4, d=16, c=4, 512/256 samples per task.
    static SuiteConfig default_suite(std::uint64_t seed);
    /// Variant with overlapping task regions (3 sigma inter-task separation).
    static SuiteConfig conflict_suite(std::uint64_t seed);

    void validate() const;
    bool operator==(const SuiteConfig&) const = default;
};

struct TaskSuite {
    SuiteConfig config;
    std::vector<TaskDataset> tasks;
    std::vector<double> probe_accuracy;  // per task, measured at generation

    std::size_t task_count() const noexcept { return tasks.size(); }
    std::size_t dim() const noexcept { return config.dim; }
    std::size_t classes() const noexcept { return config.classes; }
};

/// Deterministic in its config. Each task gets `classes` Gaussian clusters
/// (std sigma) around a task-specific region center; region directions are
/// mutually orthogonal. Throws a data error when the separation constraints
/// cannot be met or the linear probe check fails.
TaskSuite generate_suite(const SuiteConfig& config);

/// Held-out samples far from every task region (off-support inputs).
Split far_field_samples(const TaskSuite& suite, std::size_t n, std::uint64_t seed);

/// Test accuracy of a multinomial logistic-regression probe trained on `train`.
double linear_probe_accuracy(const Split& train, const Split& test, std::size_t classes);

/// Union of every task's train (or test) split.
Split union_split(const TaskSuite& suite, bool test);

nlohmann::json suite_config_to_json(const SuiteConfig& config);
SuiteConfig suite_config_from_json(const nlohmann::json& j);

/// Writes `<root>/suite/<seed>/suite.json` and
/// `<root>/suite/<seed>/task<i>/{train,test}/{manifest.json,inputs.f32,labels.u8}`
/// with 1-based task directories. Returns the suite directory.
std::filesystem::path write_suite(const std::filesystem::path& root, const TaskSuite& suite);
TaskSuite read_suite(const std::filesystem::path& suite_dir);
std::filesystem::path suite_dir(const std::filesystem::path& root, std::uint64_t seed);

}  // namespace mergelab::data
