#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core_math/param_vector.hpp"
#include "core_math/vector_ops.hpp"
#include "nn_model/model.hpp"
#include "task_suite/task_suite.hpp"

namespace mergelab::se {

/// Per-sample output of the distance -> similarity -> coefficient chain.
struct SimilarityReport {
    std::vector<double> distances;     // d_t
    std::vector<double> similarities;  // s_t = d_max - d_t + d_min
    std::vector<double> normalized;    // min-max normalized s_t
    std::vector<double> coefficients;  // lambda_t
    std::size_t predicted_task = 0;    // argmin d_t, lowest index on ties (0-based)
    int layer = 0;
};

/// Rescaled merging coefficients for one sample:
///   s_t = d_max - d_t + d_min,  s_norm = minmax(s),
///   lambda_t = softmax(s_norm)_t * T * lambda.
/// A constant distance vector yields lambda_t = lambda for every t.
std::vector<double> rescale_coefficients(std::span<const double> distances, std::size_t tasks, double lambda);

/// Full report for a given distance vector (the pure part of the pipeline).
SimilarityReport similarity_from_distances(std::span<const double> distances, double lambda, int layer);

/// Distances between the layer-`layer` representation of `merged` and of each
/// comparison model, for a single input. Shared by SE-Merging and acc@k.
std::vector<double> representation_distances(const nn::ModelSpec& spec, std::span<const float> x,
                                             const ParamVector& merged, std::span<const ParamVector> experts,
                                             int layer, DistanceMetric metric = DistanceMetric::L2);

/// Comparison models theta_PT + scale * tau_t.
std::vector<ParamVector> scaled_experts(const ParamVector& pretrained, std::span<const TaskVector> taus, double scale);

/// r_Merged = f^(l)(x; merged), r_t = f^(l)(x; theta_PT + lambda tau_t), then
/// the coefficient chain.
SimilarityReport compute_similarity(const nn::ModelSpec& spec, std::span<const float> x, const ParamVector& merged,
                                    const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda,
                                    int layer, DistanceMetric metric = DistanceMetric::L2);

struct SeOptions {
    double lambda = 0.3;
    /// Representation layer; nullopt selects the penultimate layer L-1.
    std::optional<int> layer;
    DistanceMetric metric = DistanceMetric::L2;
    /// Scale of the comparison models theta_PT + scale * tau_t; nullopt uses lambda.
    std::optional<double> comparison_scale;
    /// Also evaluate the nearest fine-tuned expert alone (diagnostic only).
    bool route_hard = false;
};

struct SeInference {
    ActivationVector logits;
    SimilarityReport report;
};

/// Holds the read-only state of one SE-Merging run: theta_PT, the task
/// vectors, the static merge theta_PT + lambda * sum(tau) and the comparison
/// models. Safe to share between threads; per-sample buffers live in Scratch.
class SeMerger {
public:
    SeMerger(nn::ModelSpec spec, ParamVector pretrained, std::vector<TaskVector> taus, SeOptions options);

    /// Per-worker re-merge buffer.
    struct Scratch {
        ParamVector params;
    };
    Scratch make_scratch() const { return {merged_}; }

    const nn::ModelSpec& spec() const noexcept { return spec_; }
    const SeOptions& options() const noexcept { return options_; }
    int layer() const noexcept { return layer_; }
    std::size_t tasks() const noexcept { return taus_.size(); }
    const ParamVector& pretrained() const noexcept { return pretrained_; }
    const ParamVector& merged() const noexcept { return merged_; }
    const std::vector<TaskVector>& taus() const noexcept { return taus_; }
    const std::vector<ParamVector>& comparison_models() const noexcept { return experts_; }

    std::vector<double> distances(std::span<const float> x, int layer) const;
    SimilarityReport similarity(std::span<const float> x) const;

    /// theta_Merged + sum_t (lambda_t - lambda) tau_t, written into `out`.
    void rescaled_params(std::span<const double> coefficients, ParamVector& out) const;

    /// theta_PT + sum_t lambda_t tau_t via task arithmetic (reference form).
    ParamVector rescaled_params_direct(std::span<const double> coefficients) const;

    SeInference infer(std::span<const float> x, Scratch& scratch) const;
    SeInference infer(std::span<const float> x) const;

    /// Logits of theta_PT + tau_{predicted} (hard routing diagnostic).
    ActivationVector infer_hard(std::span<const float> x, std::size_t predicted_task) const;

private:
    nn::ModelSpec spec_;
    ParamVector pretrained_;
    std::vector<TaskVector> taus_;
    SeOptions options_;
    int layer_ = 0;
    ParamVector merged_;
    std::vector<ParamVector> experts_;
    std::vector<ParamVector> full_experts_;
};

/// One evaluated test sample.
struct SampleRecord {
    std::size_t sample_id = 0;  // running index over tasks in order
    std::size_t true_task = 0;  // 0-based
    std::size_t label = 0;
    std::size_t predicted_label = 0;
    SimilarityReport report;
    bool correct = false;
    bool hard_correct = false;
};

struct SeEvaluation {
    std::vector<double> per_task_accuracy;
    double mean_accuracy = 0.0;
    /// Fraction of samples with predicted_task == true task.
    double task_identification_accuracy = 0.0;
    std::vector<double> per_task_identification;
    std::optional<double> hard_route_accuracy;
    std::vector<SampleRecord> samples;
};

/// Runs SE-Merging over every task's test split.
SeEvaluation se_evaluate(const data::TaskSuite& suite, const SeMerger& merger, std::size_t threads = 1);
/// Single dataset variant; every sample is attributed to `task_id`.
SeEvaluation se_evaluate(const data::Split& split, std::size_t task_id, const SeMerger& merger,
                         std::size_t threads = 1);

/// Per-sample CSV: sample_id,true_task,predicted_task,d_1..d_T,lambda_1..lambda_T,correct
/// with 1-based task ids, rows sorted by sample id.
std::string sample_report_csv(const SeEvaluation& eval, std::size_t tasks);

}  // namespace mergelab::se
