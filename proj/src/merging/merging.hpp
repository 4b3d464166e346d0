#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core_math/param_vector.hpp"

namespace mergelab::merge {

enum class Method { Average, TaskArithmetic, Ties };

const char* to_string(Method m) noexcept;
Method method_from_string(std::string_view name);

inline constexpr double kDefaultLambda = 0.3;

struct MergeConfig {
    Method method = Method::TaskArithmetic;
    double lambda = kDefaultLambda;
    std::optional<std::vector<double>> per_task_lambda;
    double ties_density = 1.0;

    /// Per-task coefficients: per_task_lambda when present, else lambda broadcast.
    std::vector<double> lambdas(std::size_t tasks) const;
    void validate(std::size_t tasks) const;
};

/// delta = finetuned - pretrained, tagged with the base index fingerprint.
/// The float rounding error of each element is kept in `residual`, which
/// task_arithmetic adds back, so task_arithmetic(pt, {tau}, 1) == finetuned.
TaskVector task_vector(const ParamVector& finetuned, const ParamVector& pretrained);

/// sum_i weights[i] * models[i], accumulated in ascending model order.
ParamVector weight_average(std::span<const ParamVector> models, std::span<const double> weights);

/// pretrained + sum_t lambdas[t] * taus[t] as an axpy chain in ascending task
/// order. `lambdas` is either one scalar (broadcast) or one entry per task.
ParamVector task_arithmetic(const ParamVector& pretrained, std::span<const TaskVector> taus,
                            std::span<const double> lambdas);
ParamVector task_arithmetic(const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda);

/// Stage outputs of a TIES merge, exposed for inspection.
struct TiesStages {
    std::vector<std::vector<float>> trimmed;  // per task
    std::vector<int> elected_sign;            // per coordinate, +1 or -1
    std::vector<float> merged;                // disjoint mean per coordinate
};

/// Trim each task vector to its top ceil(density * p) magnitudes, elect a
/// sign per coordinate from the summed magnitudes (ties elect +), average the
/// surviving entries that agree with the elected sign, and add lambda times
/// the result to `pretrained`.
ParamVector ties_merge(const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda,
                       double density, TiesStages* stages = nullptr);

/// Dispatches on config.method. `finetuned` is used by Average only; the
/// other methods use `taus`.
ParamVector merge_models(const MergeConfig& config, const ParamVector& pretrained,
                         std::span<const ParamVector> finetuned, std::span<const TaskVector> taus);

/// Throws a structural error naming the first task whose fingerprint does not
/// match `pretrained`.
void require_compatible(const ParamVector& pretrained, std::span<const TaskVector> taus);

}  // namespace mergelab::merge
