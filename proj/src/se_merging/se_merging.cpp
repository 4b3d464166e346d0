#include "se_merging/se_merging.hpp"

#include <algorithm>
#include <cmath>

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "core_math/parallel.hpp"
#include "merging/merging.hpp"

namespace mergelab::se {

namespace {

std::size_t argmin_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < v.size(); ++t)
        if (v[t] < v[best]) best = t;
    return best;
}

}  // namespace

SimilarityReport similarity_from_distances(std::span<const double> distances, double lambda, int layer) {
    if (distances.empty()) fail(ErrorKind::Domain, "similarity needs at least one distance");
    for (double d : distances)
        if (!(d >= 0.0) || !std::isfinite(d)) fail(ErrorKind::Domain, "distances must be finite and >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorKind::Domain, "lambda must be finite and >= 0");

    SimilarityReport r;
    r.layer = layer;
    r.distances.assign(distances.begin(), distances.end());
    const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
    r.similarities.resize(distances.size());
    for (std::size_t t = 0; t < distances.size(); ++t) r.similarities[t] = *hi - distances[t] + *lo;
    r.normalized = minmax_normalize(r.similarities);
    const auto weights = softmax(r.normalized);
    const double budget = static_cast<double>(distances.size()) * lambda;
    r.coefficients.resize(distances.size());
    for (std::size_t t = 0; t < distances.size(); ++t) r.coefficients[t] = weights[t] * budget;
    r.predicted_task = argmin_lowest(distances);
    return r;
}

std::vector<double> rescale_coefficients(std::span<const double> distances, std::size_t tasks, double lambda) {
    if (tasks < 1 || distances.size() != tasks)
        fail(ErrorKind::Structural, "rescale_coefficients: " + std::to_string(distances.size()) +
                                        " distances for T=" + std::to_string(tasks));
    return similarity_from_distances(distances, lambda, 0).coefficients;
}

std::vector<double> representation_distances(const nn::ModelSpec& spec, std::span<const float> x,
                                             const ParamVector& merged, std::span<const ParamVector> experts,
                                             int layer, DistanceMetric metric) {
    const auto r_merged = nn::forward_to_layer(spec, merged, x, layer);
    std::vector<double> d(experts.size());
    for (std::size_t t = 0; t < experts.size(); ++t) {
        const auto r_t = nn::forward_to_layer(spec, experts[t], x, layer);
        d[t] = distance(metric, r_merged.values, r_t.values);
    }
    return d;
}

std::vector<ParamVector> scaled_experts(const ParamVector& pretrained, std::span<const TaskVector> taus, double scale) {
    std::vector<ParamVector> out;
    out.reserve(taus.size());
    for (const auto& tau : taus) out.push_back(merge::task_arithmetic(pretrained, std::span(&tau, 1), scale));
    return out;
}

SimilarityReport compute_similarity(const nn::ModelSpec& spec, std::span<const float> x, const ParamVector& merged,
                                    const ParamVector& pretrained, std::span<const TaskVector> taus, double lambda,
                                    int layer, DistanceMetric metric) {
    if (taus.empty()) fail(ErrorKind::Domain, "compute_similarity needs T >= 1 task vectors");
    if (layer < 1 || layer > spec.layers())
        fail(ErrorKind::Domain, "layer " + std::to_string(layer) + " outside [1, " + std::to_string(spec.layers()) + "]");
    require_same_index(merged.index(), pretrained.index(), "compute_similarity");
    const auto experts = scaled_experts(pretrained, taus, lambda);
    const auto d = representation_distances(spec, x, merged, experts, layer, metric);
    return similarity_from_distances(d, lambda, layer);
}

SeMerger::SeMerger(nn::ModelSpec spec, ParamVector pretrained, std::vector<TaskVector> taus, SeOptions options)
    : spec_(std::move(spec)), pretrained_(std::move(pretrained)), taus_(std::move(taus)), options_(options) {
    nn::require_matches(spec_, pretrained_);
    if (taus_.empty()) fail(ErrorKind::Domain, "SE-Merging needs T >= 1 task vectors");
    if (!(options_.lambda >= 0.0) || !std::isfinite(options_.lambda))
        fail(ErrorKind::Domain, "SE-Merging lambda must be finite and >= 0");
    if (options_.layer) {
        layer_ = *options_.layer;
    } else {
        if (spec_.layers() < 2) fail(ErrorKind::Domain, "default layer L-1 needs a model with L >= 2");
        layer_ = spec_.layers() - 1;
    }
    if (layer_ < 1 || layer_ > spec_.layers())
        fail(ErrorKind::Domain, "layer " + std::to_string(layer_) + " outside [1, " + std::to_string(spec_.layers()) + "]");
    merged_ = merge::task_arithmetic(pretrained_, taus_, options_.lambda);
    experts_ = scaled_experts(pretrained_, taus_, options_.comparison_scale.value_or(options_.lambda));
    if (options_.route_hard) full_experts_ = scaled_experts(pretrained_, taus_, 1.0);
}

std::vector<double> SeMerger::distances(std::span<const float> x, int layer) const {
    return representation_distances(spec_, x, merged_, experts_, layer, options_.metric);
}

SimilarityReport SeMerger::similarity(std::span<const float> x) const {
    return similarity_from_distances(distances(x, layer_), options_.lambda, layer_);
}

void SeMerger::rescaled_params(std::span<const double> coefficients, ParamVector& out) const {
    if (coefficients.size() != taus_.size()) fail(ErrorKind::Structural, "one coefficient per task vector required");
    require_same_index(out.index(), merged_.index(), "rescaled_params");
    auto o = out.values();
    const auto m = merged_.values();
    std::vector<double> shift(coefficients.size());
    for (std::size_t t = 0; t < shift.size(); ++t) shift[t] = coefficients[t] - options_.lambda;
    for (std::size_t i = 0; i < o.size(); ++i) {
        double acc = m[i];
        for (std::size_t t = 0; t < shift.size(); ++t) acc += shift[t] * static_cast<double>(taus_[t].delta.values()[i]);
        o[i] = static_cast<float>(acc);
    }
}

ParamVector SeMerger::rescaled_params_direct(std::span<const double> coefficients) const {
    return merge::task_arithmetic(pretrained_, taus_, coefficients);
}

SeInference SeMerger::infer(std::span<const float> x, Scratch& scratch) const {
    SeInference out;
    out.report = similarity(x);
    rescaled_params(out.report.coefficients, scratch.params);
    out.logits = nn::forward(spec_, scratch.params, x);
    return out;
}

SeInference SeMerger::infer(std::span<const float> x) const {
    auto scratch = make_scratch();
    return infer(x, scratch);
}

ActivationVector SeMerger::infer_hard(std::span<const float> x, std::size_t predicted_task) const {
    if (full_experts_.empty()) {
        const auto expert = merge::task_arithmetic(pretrained_, std::span(&taus_.at(predicted_task), 1), 1.0);
        return nn::forward(spec_, expert, x);
    }
    return nn::forward(spec_, full_experts_.at(predicted_task), x);
}

namespace {

SeEvaluation evaluate_samples(std::span<const std::pair<const data::Split*, std::size_t>> sets, std::size_t tasks,
                              const SeMerger& merger, std::size_t threads) {
    std::vector<std::pair<std::size_t, std::size_t>> refs;  // (set, row)
    for (std::size_t s = 0; s < sets.size(); ++s)
        for (std::size_t i = 0; i < sets[s].first->size(); ++i) refs.emplace_back(s, i);
    if (refs.empty()) fail(ErrorKind::Domain, "se_evaluate: empty dataset");

    SeEvaluation eval;
    eval.samples.resize(refs.size());
    const bool hard = merger.options().route_hard;
    parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
        auto scratch = merger.make_scratch();
        for (std::size_t k = begin; k < end; ++k) {
            const auto& [set, row] = refs[k];
            const auto& split = *sets[set].first;
            auto inference = merger.infer(split.x(row), scratch);
            SampleRecord& rec = eval.samples[k];
            rec.sample_id = k;
            rec.true_task = sets[set].second;
            rec.label = split.labels[row];
            rec.predicted_label = nn::argmax(inference.logits.values);
            rec.correct = rec.predicted_label == rec.label;
            if (hard)
                rec.hard_correct =
                    nn::argmax(merger.infer_hard(split.x(row), inference.report.predicted_task).values) == rec.label;
            rec.report = std::move(inference.report);
        }
    });

    std::vector<std::size_t> count(tasks, 0), correct(tasks, 0), identified(tasks, 0);
    std::size_t hard_correct = 0, identified_total = 0;
    for (const auto& rec : eval.samples) {
        ++count[rec.true_task];
        correct[rec.true_task] += rec.correct;
        const bool id = rec.report.predicted_task == rec.true_task;
        identified[rec.true_task] += id;
        identified_total += id;
        hard_correct += rec.hard_correct;
    }
    double sum = 0.0;
    std::size_t present = 0;
    eval.per_task_accuracy.assign(tasks, 0.0);
    eval.per_task_identification.assign(tasks, 0.0);
    for (std::size_t t = 0; t < tasks; ++t) {
        if (!count[t]) continue;
        eval.per_task_accuracy[t] = static_cast<double>(correct[t]) / static_cast<double>(count[t]);
        eval.per_task_identification[t] = static_cast<double>(identified[t]) / static_cast<double>(count[t]);
        sum += eval.per_task_accuracy[t];
        ++present;
    }
    eval.mean_accuracy = sum / static_cast<double>(present);
    eval.task_identification_accuracy = static_cast<double>(identified_total) / static_cast<double>(refs.size());
    if (hard) eval.hard_route_accuracy = static_cast<double>(hard_correct) / static_cast<double>(refs.size());
    return eval;
}

}  // namespace

SeEvaluation se_evaluate(const data::TaskSuite& suite, const SeMerger& merger, std::size_t threads) {
    if (suite.task_count() != merger.tasks())
        fail(ErrorKind::Structural, "suite has " + std::to_string(suite.task_count()) + " tasks but " +
                                        std::to_string(merger.tasks()) + " task vectors were given");
    std::vector<std::pair<const data::Split*, std::size_t>> sets;
    for (const auto& t : suite.tasks) sets.emplace_back(&t.test, t.task_id);
    return evaluate_samples(sets, merger.tasks(), merger, threads);
}

SeEvaluation se_evaluate(const data::Split& split, std::size_t task_id, const SeMerger& merger, std::size_t threads) {
    if (task_id >= merger.tasks()) fail(ErrorKind::Domain, "task id out of range");
    const std::pair<const data::Split*, std::size_t> set{&split, task_id};
    return evaluate_samples(std::span(&set, 1), merger.tasks(), merger, threads);
}

std::string sample_report_csv(const SeEvaluation& eval, std::size_t tasks) {
    std::string out = "sample_id,true_task,predicted_task";
    for (std::size_t t = 1; t <= tasks; ++t) out += ",d_" + std::to_string(t);
    for (std::size_t t = 1; t <= tasks; ++t) out += ",lambda_" + std::to_string(t);
    out += ",correct\n";
    std::vector<const SampleRecord*> rows;
    for (const auto& r : eval.samples) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->sample_id < b->sample_id; });
    for (const auto* r : rows) {
        out += std::to_string(r->sample_id) + "," + std::to_string(r->true_task + 1) + "," +
               std::to_string(r->report.predicted_task + 1);
        for (double d : r->report.distances) out += "," + fixed6(d);
        for (double l : r->report.coefficients) out += "," + fixed6(l);
        out += r->correct ? ",1\n" : ",0\n";
    }
    return out;
}

}  // namespace mergelab::se
