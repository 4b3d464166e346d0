#include "diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "core_math/parallel.hpp"
#include "merging/merging.hpp"

namespace mergelab::diag {

namespace {

struct SampleRef {
    std::size_t task;
    std::size_t row;
};

std::vector<SampleRef> test_samples(const data::TaskSuite& suite) {
    std::vector<SampleRef> refs;
    for (const auto& t : suite.tasks)
        for (std::size_t i = 0; i < t.test.size(); ++i) refs.push_back({t.task_id, i});
    return refs;
}

double l2_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * x;
    return std::sqrt(acc);
}

/// Per-task mean of value(sample) over test samples, summed in sample order.
template <typename Fn>
std::vector<double> per_task_mean(const data::TaskSuite& suite, std::size_t threads, Fn&& value) {
    const auto refs = test_samples(suite);
    std::vector<double> values(refs.size());
    parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) values[k] = value(refs[k]);
    });
    std::vector<double> sum(suite.task_count(), 0.0);
    std::vector<std::size_t> count(suite.task_count(), 0);
    for (std::size_t k = 0; k < refs.size(); ++k) {
        sum[refs[k].task] += values[k];
        ++count[refs[k].task];
    }
    for (std::size_t t = 0; t < sum.size(); ++t) {
        if (!count[t]) fail(ErrorKind::Domain, "task " + std::to_string(t + 1) + " has an empty test split");
        sum[t] /= static_cast<double>(count[t]);
    }
    return sum;
}

}  // namespace

int distance_rank(std::span<const double> distances, std::size_t target) {
    std::vector<std::size_t> order(distances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
    return static_cast<int>(std::find(order.begin(), order.end(), target) - order.begin()) + 1;
}

double AccAtKReport::acc(std::size_t task, int layer, int k) const {
    if (k < 1 || static_cast<std::size_t>(k) > tasks)
        fail(ErrorKind::Domain, "k=" + std::to_string(k) + " outside [1, " + std::to_string(tasks) + "]");
    const auto it = std::find(layers.begin(), layers.end(), layer);
    if (it == layers.end()) fail(ErrorKind::Domain, "layer " + std::to_string(layer) + " was not measured");
    const auto& r = ranks.at(static_cast<std::size_t>(it - layers.begin())).at(task);
    if (r.empty()) fail(ErrorKind::Domain, "task " + std::to_string(task + 1) + " has no samples");
    const auto hits = std::count_if(r.begin(), r.end(), [k](int rank) { return rank <= k; });
    return static_cast<double>(hits) / static_cast<double>(r.size());
}

std::string AccAtKReport::csv() const {
    std::string out = "task,layer,k,acc\n";
    for (std::size_t t = 0; t < tasks; ++t)
        for (int layer : layers)
            for (int k = 1; k <= static_cast<int>(tasks); ++k)
                out += std::to_string(t + 1) + "," + std::to_string(layer) + "," + std::to_string(k) + "," +
                       fixed6(acc(t, layer, k)) + "\n";
    return out;
}

AccAtKReport acc_at_k(const data::TaskSuite& suite, const nn::ModelSpec& spec, const ParamVector& merged,
                      std::span<const ParamVector> comparison, std::span<const int> layers, DistanceMetric metric,
                      std::size_t threads) {
    if (comparison.size() != suite.task_count())
        fail(ErrorKind::Structural, "acc@k needs one comparison model per task");
    for (int l : layers)
        if (l < 1 || l > spec.layers())
            fail(ErrorKind::Domain, "layer " + std::to_string(l) + " outside [1, " + std::to_string(spec.layers()) + "]");
    AccAtKReport report;
    report.tasks = suite.task_count();
    report.layers.assign(layers.begin(), layers.end());
    const auto refs = test_samples(suite);
    // flat[k][layer position]
    std::vector<std::vector<int>> flat(refs.size(), std::vector<int>(layers.size()));
    parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto x = suite.tasks[refs[k].task].test.x(refs[k].row);
            for (std::size_t li = 0; li < layers.size(); ++li) {
                const auto d = se::representation_distances(spec, x, merged, comparison, layers[li], metric);
                flat[k][li] = distance_rank(d, refs[k].task);
            }
        }
    });
    report.ranks.assign(layers.size(), std::vector<std::vector<int>>(report.tasks));
    for (std::size_t k = 0; k < refs.size(); ++k)
        for (std::size_t li = 0; li < layers.size(); ++li) report.ranks[li][refs[k].task].push_back(flat[k][li]);
    return report;
}

AccAtKReport acc_at_k(const data::TaskSuite& suite, const nn::ModelSpec& spec, const ParamVector& pretrained,
                      std::span<const TaskVector> taus, double lambda, std::span<const int> layers,
                      DistanceMetric metric, std::size_t threads) {
    const auto merged = merge::task_arithmetic(pretrained, taus, lambda);
    const auto comparison = se::scaled_experts(pretrained, taus, lambda);
    return acc_at_k(suite, spec, merged, comparison, layers, metric, threads);
}

std::vector<double> representation_bias(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                        const ParamVector& merged, const ParamVector& pretrained,
                                        std::span<const TaskVector> taus, double lambda, std::size_t threads) {
    if (taus.size() != suite.task_count()) fail(ErrorKind::Structural, "representation_bias needs one task vector per task");
    nn::require_matches(spec, merged);
    const auto experts = se::scaled_experts(pretrained, taus, lambda);
    return per_task_mean(suite, threads, [&](const SampleRef& s) {
        const auto x = suite.tasks[s.task].test.x(s.row);
        return l1_distance(nn::forward(spec, merged, x), nn::forward(spec, experts[s.task], x));
    });
}

std::vector<double> representation_bias_se(const data::TaskSuite& suite, const se::SeMerger& merger,
                                           std::size_t threads) {
    if (merger.tasks() != suite.task_count()) fail(ErrorKind::Structural, "representation_bias needs one task vector per task");
    const auto experts = se::scaled_experts(merger.pretrained(), merger.taus(), merger.options().lambda);
    const auto refs = test_samples(suite);
    std::vector<double> values(refs.size());
    parallel_for(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
        auto scratch = merger.make_scratch();
        for (std::size_t k = begin; k < end; ++k) {
            const auto x = suite.tasks[refs[k].task].test.x(refs[k].row);
            const auto se_logits = merger.infer(x, scratch).logits;
            values[k] = l1_distance(se_logits, nn::forward(merger.spec(), experts[refs[k].task], x));
        }
    });
    std::vector<double> sum(suite.task_count(), 0.0);
    std::vector<std::size_t> count(suite.task_count(), 0);
    for (std::size_t k = 0; k < refs.size(); ++k) {
        sum[refs[k].task] += values[k];
        ++count[refs[k].task];
    }
    for (std::size_t t = 0; t < sum.size(); ++t) {
        if (!count[t]) fail(ErrorKind::Domain, "task " + std::to_string(t + 1) + " has an empty test split");
        sum[t] /= static_cast<double>(count[t]);
    }
    return sum;
}

void BiasReport::add(std::string name, std::vector<double> per_task) {
    if (tasks == 0) tasks = per_task.size();
    if (per_task.size() != tasks) fail(ErrorKind::Structural, "bias configuration has the wrong task count");
    configs.emplace_back(std::move(name), std::move(per_task));
}

std::string BiasReport::csv() const {
    std::string out = "task,config,bias\n";
    for (std::size_t t = 0; t < tasks; ++t)
        for (const auto& [name, values] : configs)
            out += std::to_string(t + 1) + "," + name + "," + fixed6(values[t]) + "\n";
    return out;
}

std::string DisentanglementReport::csv() const {
    std::string out = "task,alpha,residual,logit_norm,ratio\n";
    for (std::size_t t = 0; t < residual.size(); ++t)
        out += std::to_string(t + 1) + "," + fixed6(alphas[t]) + "," + fixed6(residual[t]) + "," +
               fixed6(logit_norm[t]) + "," + fixed6(ratio[t]) + "\n";
    out += "far_field,," + fixed6(far_field_residual) + "," + fixed6(far_field_norm) + "," + fixed6(far_field_ratio) + "\n";
    return out;
}

DisentanglementReport disentanglement_residual(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                               const ParamVector& pretrained, std::span<const TaskVector> taus,
                                               std::span<const double> alphas, const data::Split& far_field,
                                               std::size_t threads) {
    if (alphas.size() != taus.size())
        fail(ErrorKind::Structural, "disentanglement_residual: " + std::to_string(alphas.size()) + " alphas for " +
                                        std::to_string(taus.size()) + " task vectors");
    if (taus.size() != suite.task_count()) fail(ErrorKind::Structural, "one task vector per task required");
    for (double a : alphas)
        if (!std::isfinite(a)) fail(ErrorKind::Domain, "alphas must be finite");

    const auto combined = merge::task_arithmetic(pretrained, taus, alphas);
    std::vector<ParamVector> singles;
    for (std::size_t t = 0; t < taus.size(); ++t)
        singles.push_back(merge::task_arithmetic(pretrained, taus.subspan(t, 1), alphas.subspan(t, 1)));

    DisentanglementReport r;
    r.alphas.assign(alphas.begin(), alphas.end());
    r.residual = per_task_mean(suite, threads, [&](const SampleRef& s) {
        const auto x = suite.tasks[s.task].test.x(s.row);
        return l2_distance(nn::forward(spec, combined, x), nn::forward(spec, singles[s.task], x));
    });
    r.logit_norm = per_task_mean(suite, threads, [&](const SampleRef& s) {
        return l2_norm(nn::forward(spec, singles[s.task], suite.tasks[s.task].test.x(s.row)).values);
    });
    double res_sum = 0.0, norm_sum = 0.0;
    for (std::size_t t = 0; t < r.residual.size(); ++t) {
        r.ratio.push_back(r.logit_norm[t] > 0.0 ? r.residual[t] / r.logit_norm[t] : 0.0);
        res_sum += r.residual[t];
        norm_sum += r.logit_norm[t];
    }
    r.mean_ratio = norm_sum > 0.0 ? res_sum / norm_sum : 0.0;

    if (far_field.size() > 0) {
        double res = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < far_field.size(); ++i) {
            const auto base = nn::forward(spec, pretrained, far_field.x(i));
            res += l2_distance(nn::forward(spec, combined, far_field.x(i)), base);
            norm += l2_norm(base.values);
        }
        const auto n = static_cast<double>(far_field.size());
        r.far_field_residual = res / n;
        r.far_field_norm = norm / n;
        r.far_field_ratio = norm > 0.0 ? res / norm : 0.0;
    }
    return r;
}

std::size_t export_representations(const data::TaskSuite& suite, const nn::ModelSpec& spec,
                                   std::span<const std::pair<std::string, ParamVector>> models, int layer,
                                   const std::filesystem::path& path) {
    if (layer < 1 || layer > spec.layers())
        fail(ErrorKind::Domain, "layer " + std::to_string(layer) + " outside [1, " + std::to_string(spec.layers()) + "]");
    std::string out = "model_name,task_id,sample_id";
    for (std::size_t j = 1; j <= spec.width(layer); ++j) out += ",v_" + std::to_string(j);
    out += "\n";
    std::size_t rows = 0;
    for (const auto& [name, params] : models) {
        std::size_t sample_id = 0;
        for (const auto& task : suite.tasks) {
            for (std::size_t i = 0; i < task.test.size(); ++i, ++sample_id) {
                const auto r = nn::forward_to_layer(spec, params, task.test.x(i), layer);
                out += name + "," + std::to_string(task.task_id + 1) + "," + std::to_string(sample_id);
                for (float v : r.values) out += "," + float9(v);
                out += "\n";
                ++rows;
            }
        }
    }
    write_file(path, out);
    return rows;
}

}  // namespace mergelab::diag
