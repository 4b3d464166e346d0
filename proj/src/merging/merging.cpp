#include "merging/merging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core_math/error.hpp"

namespace mergelab::merge {

const char* to_string(Method m) noexcept {
    switch (m) {
    case Method::Average: return "average";
    case Method::TaskArithmetic: return "task_arithmetic";
    case Method::Ties: return "ties";
    }
    return "unknown";
}

Method method_from_string(std::string_view name) {
    if (name == "average") return Method::Average;
    if (name == "task_arithmetic") return Method::TaskArithmetic;
    if (name == "ties") return Method::Ties;
    fail(ErrorKind::Config, "unknown merge method '" + std::string(name) + "' (expected average, task_arithmetic or ties)");
}

std::vector<double> MergeConfig::lambdas(std::size_t tasks) const {
    if (per_task_lambda) return *per_task_lambda;
    return std::vector<double>(tasks, lambda);
}

void MergeConfig::validate(std::size_t tasks) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorKind::Domain, "merge lambda must be finite and >= 0");
    if (per_task_lambda) {
        if (per_task_lambda->size() != tasks)
            fail(ErrorKind::Structural, "per_task_lambda has " + std::to_string(per_task_lambda->size()) +
                                            " entries for " + std::to_string(tasks) + " tasks");
        for (double l : *per_task_lambda)
            if (!(l >= 0.0) || !std::isfinite(l)) fail(ErrorKind::Domain, "per_task_lambda entries must be >= 0");
    }
    if (!(ties_density > 0.0 && ties_density <= 1.0)) fail(ErrorKind::Domain, "ties_density must lie in (0, 1]");
}

void require_compatible(const ParamVector& pretrained, std::span<const TaskVector> taus) {
    const auto fp = pretrained.index().fingerprint();
    for (std::size_t t = 0; t < taus.size(); ++t)
        if (taus[t].base_fingerprint != fp || !(taus[t].delta.index() == pretrained.index()))
            fail(ErrorKind::Structural,
                 "task vector " + std::to_string(t + 1) + " was not derived from this pre-trained model's index");
    for (std::size_t t = 0; t < taus.size(); ++t)
        if (!taus[t].residual.empty() && taus[t].residual.size() != pretrained.size())
            fail(ErrorKind::Structural, "task vector " + std::to_string(t + 1) + " has a residual of the wrong length");
}

TaskVector task_vector(const ParamVector& finetuned, const ParamVector& pretrained) {
    require_same_index(finetuned.index(), pretrained.index(), "task_vector");
    ParamVector delta(finetuned);
    auto d = delta.values();
    auto base = pretrained.values();
    std::vector<float> residual(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        // TwoSum: the rounding error of a float difference is itself a float.
        const float a = d[i], b = -base[i];
        const float sum = a + b;
        const float bv = sum - a;
        residual[i] = (a - (sum - bv)) + (b - bv);
        d[i] = sum;
    }
    return {std::move(delta), pretrained.index().fingerprint(), std::move(residual)};
}

ParamVector weight_average(std::span<const ParamVector> models, std::span<const double> weights) {
    if (models.empty()) fail(ErrorKind::Structural, "weight_average needs at least one model");
    if (models.size() != weights.size())
        fail(ErrorKind::Structural, "weight_average: " + std::to_string(models.size()) + " models but " +
                                        std::to_string(weights.size()) + " weights");
    for (std::size_t m = 1; m < models.size(); ++m)
        require_same_index(models[0].index(), models[m].index(), "weight_average model " + std::to_string(m + 1));
    ParamVector out(models[0].index());
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < models.size(); ++m) acc += weights[m] * static_cast<double>(models[m].values()[i]);
        o[i] = static_cast<float>(acc);
    }
    return out;
}

ParamVector task_arithmetic(const ParamVector& pretrained, std::span<const TaskVector> taus,
                            std::span<const double> lambdas) {
    require_compatible(pretrained, taus);
    if (lambdas.size() != 1 && lambdas.size() != taus.size())
        fail(ErrorKind::Structural, "task_arithmetic: " + std::to_string(lambdas.size()) + " coefficients for " +
                                        std::to_string(taus.size()) + " task vectors");
    ParamVector out(pretrained);
    auto o = out.values();
    for (std::size_t t = 0; t < taus.size(); ++t) {
        const double lambda = lambdas.size() == 1 ? lambdas[0] : lambdas[t];
        const auto d = taus[t].delta.values();
        const auto& r = taus[t].residual;
        if (r.empty()) {
            out = axpy(lambda, taus[t].delta, out);
            o = out.values();
            continue;
        }
        for (std::size_t i = 0; i < o.size(); ++i)
            o[i] = static_cast<float>((static_cast<double>(o[i]) + lambda * d[i]) + lambda * r[i]);
    }
    return out;
}

ParamVector task_arithmetic(const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda) {
    return task_arithmetic(pretrained, taus, std::span<const double>(&lambda, 1));
}

ParamVector ties_merge(const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda,
                       double density, TiesStages* stages) {
    if (!(density > 0.0 && density <= 1.0)) fail(ErrorKind::Domain, "ties_merge: density must lie in (0, 1]");
    require_compatible(pretrained, taus);
    if (taus.empty()) fail(ErrorKind::Structural, "ties_merge needs at least one task vector");
    const std::size_t p = pretrained.size();
    // Shave a relative epsilon so products like 0.2 * 5 do not round up past an integer.
    std::size_t keep = static_cast<std::size_t>(std::ceil(density * static_cast<double>(p) * (1.0 - 1e-12)));
    keep = std::clamp<std::size_t>(keep, 1, p);

    std::vector<std::vector<float>> trimmed(taus.size());
    std::vector<std::size_t> order(p);
    for (std::size_t t = 0; t < taus.size(); ++t) {
        const auto v = taus[t].delta.values();
        trimmed[t].assign(p, 0.0f);
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto by_magnitude = [&](std::size_t a, std::size_t b) {
            const float ma = std::abs(v[a]), mb = std::abs(v[b]);
            return ma != mb ? ma > mb : a < b;
        };
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), by_magnitude);
        for (std::size_t k = 0; k < keep; ++k) trimmed[t][order[k]] = v[order[k]];
    }

    std::vector<int> sign(p);
    std::vector<float> merged(p);
    for (std::size_t i = 0; i < p; ++i) {
        double total = 0.0;
        for (const auto& tv : trimmed) total += tv[i];
        sign[i] = total >= 0.0 ? 1 : -1;
        double acc = 0.0;
        std::size_t count = 0;
        for (const auto& tv : trimmed) {
            if ((sign[i] > 0 && tv[i] > 0.0f) || (sign[i] < 0 && tv[i] < 0.0f)) {
                acc += tv[i];
                ++count;
            }
        }
        merged[i] = count ? static_cast<float>(acc / static_cast<double>(count)) : 0.0f;
    }

    ParamVector out(pretrained);
    auto o = out.values();
    for (std::size_t i = 0; i < p; ++i)
        o[i] = static_cast<float>(lambda * static_cast<double>(merged[i]) + static_cast<double>(o[i]));
    if (stages) *stages = {std::move(trimmed), std::move(sign), std::move(merged)};
    return out;
}

ParamVector merge_models(const MergeConfig& config, const ParamVector& pretrained,
                         std::span<const ParamVector> finetuned, std::span<const TaskVector> taus) {
    switch (config.method) {
    case Method::Average: {
        config.validate(finetuned.size());
        const auto weights = config.per_task_lambda
                                 ? *config.per_task_lambda
                                 : std::vector<double>(finetuned.size(), 1.0 / static_cast<double>(finetuned.size()));
        return weight_average(finetuned, weights);
    }
    case Method::TaskArithmetic: {
        config.validate(taus.size());
        const auto l = config.lambdas(taus.size());
        return task_arithmetic(pretrained, taus, l);
    }
    case Method::Ties:
        config.validate(taus.size());
        return ties_merge(pretrained, taus, config.lambda, config.ties_density);
    }
    fail(ErrorKind::Config, "unknown merge method");
}

}  // namespace mergelab::merge
