#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core_math/param_vector.hpp"
#include "core_math/vector_ops.hpp"
#include "nn_model/model.hpp"
#include "se_merging/se_merging.hpp"
#include "task_suite/task_suite.hpp"

namespace mergelab::diag {

/// Rank of expert i's distance among all T distances for every test sample
/// of task i, at each requested layer. Ranks are 1-based; equal distances
/// keep ascending task order.
struct AccAtKReport {
    std::size_t tasks = 0;
    std::vector<int> layers;
    /// ranks[layer position][task][sample]
    std::vector<std::vector<std::vector<int>>> ranks;

    /// Fraction of task `task` samples with rank <= k. Throws a domain error
    /// for k outside [1, T] or a layer that was not measured.
    double acc(std::size_t task, int layer, int k) const;

    /// task,layer,k,acc rows (1-based task ids).
    std::string csv() const;
};

/// Rank of distances[target] after a stable ascending sort (1-based).
int distance_rank(std::span<const double> distances, std::size_t target);

/// acc@k for theta_Merged = theta_PT + lambda * sum(tau) against comparison
/// models theta_PT + lambda * tau_t.
AccAtKReport acc_at_k(const data::TaskSuite& suite, const nn::ModelSpec& spec, const ParamVector& pretrained,
                      std::span<const TaskVector> taus, double lambda, std::span<const int> layers,
                      DistanceMetric metric = DistanceMetric::L2, std::size_t threads = 1);

/// Same measurement with an explicit merged model and comparison models.
AccAtKReport acc_at_k(const data::TaskSuite& suite, const nn::ModelSpec& spec, const ParamVector& merged,
                      std::span<const ParamVector> comparison, std::span<const int> layers,
                      DistanceMetric metric = DistanceMetric::L2, std::size_t threads = 1);

/// Per-task mean l1 distance between the logits of `merged` and of
/// theta_PT + lambda * tau_i over task i's test split.
std::vector<double> representation_bias(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                        const ParamVector& merged, const ParamVector& pretrained,
                                        std::span<const TaskVector> taus, double lambda, std::size_t threads = 1);

/// Same, with the per-sample SE-Merging model in place of a static merge.
std::vector<double> representation_bias_se(const data::TaskSuite& suite, const se::SeMerger& merger,
                                           std::size_t threads = 1);

struct BiasReport {
    std::size_t tasks = 0;
    std::vector<std::pair<std::string, std::vector<double>>> configs;

    void add(std::string name, std::vector<double> per_task);
    /// task,config,bias rows.
    std::string csv() const;
};

struct DisentanglementReport {
    std::vector<double> alphas;
    std::vector<double> residual;      // per task: mean ||f(x; PT + sum a_j tau_j) - f(x; PT + a_i tau_i)||_2
    std::vector<double> logit_norm;    // per task: mean ||f(x; PT + a_i tau_i)||_2
    std::vector<double> ratio;         // residual / logit_norm
    double mean_ratio = 0.0;           // sum(residual) / sum(logit_norm)
    double far_field_residual = 0.0;   // mean ||f(x; PT + sum a_j tau_j) - f(x; PT)||_2 off-support
    double far_field_norm = 0.0;       // mean ||f(x; PT)||_2 off-support
    double far_field_ratio = 0.0;

    std::string csv() const;
};

/// On-support residual of the task-wise decomposition of the merged function,
/// plus the off-support residual against theta_PT on `far_field` inputs
/// (skipped when `far_field` is empty).
DisentanglementReport disentanglement_residual(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                               const ParamVector& pretrained, std::span<const TaskVector> taus,
                                               std::span<const double> alphas, const data::Split& far_field = {},
                                               std::size_t threads = 1);

/// CSV with columns model_name,task_id,sample_id,v_1..v_d over every test
/// sample of every task for each model. Returns the number of data rows.
std::size_t export_representations(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                   std::span<const std::pair<std::string, ParamVector>> models, int layer,
                                   const std::filesystem::path& path);

}  // namespace mergelab::diag
