#include "runner/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numeric>

#include "core_math/error.hpp"
#include "core_math/hash.hpp"
#include "core_math/io_util.hpp"
#include "core_math/parallel.hpp"
#include "diagnostics/diagnostics.hpp"
#include "merging/merging.hpp"
#include "nn_model/checkpoint.hpp"
#include "se_merging/se_merging.hpp"
#include "trainer/trainer.hpp"

namespace mergelab::run {

using nlohmann::json;
namespace fs = std::filesystem;

double round6(double v) { return std::round(v * 1e6) / 1e6; }

namespace {

json round6_all(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) out.push_back(round6(x));
    return out;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct Trained {
    nn::ModelSpec spec;
    nn::Checkpoint pretrained;
    std::vector<nn::Checkpoint> experts;
    std::vector<TaskVector> taus;

    std::vector<ParamVector> expert_params() const {
        std::vector<ParamVector> out;
        for (const auto& e : experts) out.push_back(e.params);
        return out;
    }
};

fs::path pretrained_path(const RunConfig& cfg) { return cfg.checkpoint_dir() / "pretrained.ckpt"; }
fs::path expert_path(const RunConfig& cfg, std::size_t t) {
    return cfg.checkpoint_dir() / ("expert_" + std::to_string(t + 1) + ".ckpt");
}
fs::path merged_path(const RunConfig& cfg, merge::Method m) {
    return cfg.checkpoint_dir() / (std::string("merged_") + merge::to_string(m) + ".ckpt");
}

nn::Checkpoint load_artifact(const fs::path& path, const char* producer) {
    if (!fs::exists(path))
        fail(ErrorKind::Data, "missing artifact '" + path.string() + "'; run `" + producer + "` first");
    return nn::load_checkpoint(path);
}

data::TaskSuite load_suite(const RunConfig& cfg) {
    auto suite = data::read_suite(data::suite_dir(cfg.data_dir, cfg.suite.seed));
    if (!(suite.config == cfg.suite))
        fail(ErrorKind::Data, "dataset at '" + data::suite_dir(cfg.data_dir, cfg.suite.seed).string() +
                                  "' was generated with a different suite config; run `gen-data` again");
    return suite;
}

Trained load_trained(const RunConfig& cfg) {
    Trained t;
    t.spec = cfg.model;
    t.pretrained = load_artifact(pretrained_path(cfg), "train");
    if (!(t.pretrained.spec == cfg.model))
        fail(ErrorKind::Data, "checkpoint '" + pretrained_path(cfg).string() + "' does not match the configured model");
    for (std::size_t i = 0; i < cfg.suite.tasks; ++i) {
        t.experts.push_back(load_artifact(expert_path(cfg, i), "train"));
        t.taus.push_back(merge::task_vector(t.experts.back().params, t.pretrained.params));
    }
    return t;
}

fs::path rel(const RunConfig& cfg, const fs::path& p) { return p.lexically_relative(cfg.run_dir()); }

std::vector<double> per_task_accuracy(const nn::ModelSpec& spec, const ParamVector& params,
                                      const data::TaskSuite& suite, std::size_t threads) {
    std::vector<double> acc(suite.task_count());
    parallel_for(suite.task_count(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) acc[t] = train::evaluate(spec, params, suite.tasks[t].test).accuracy;
    });
    return acc;
}

se::SeMerger make_merger(const RunConfig& cfg, const Trained& t) {
    return se::SeMerger(t.spec, t.pretrained.params, t.taus, cfg.se);
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

CommandResult cmd_gen_data(const RunConfig& cfg) {
    const auto suite = data::generate_suite(cfg.suite);
    const auto dir = data::write_suite(cfg.data_dir, suite);
    CommandResult r;
    r.outputs.push_back(dir / "suite.json");
    r.summary = {{"suite_dir", dir.string()}, {"probe_accuracy", round6_all(suite.probe_accuracy)}};
    return r;
}

CommandResult cmd_train(const RunConfig& cfg) {
    const auto suite = load_suite(cfg);
    CommandResult r;

    auto pre = train::pretrain(cfg.model, suite, cfg.pretrain);
    nn::Checkpoint pre_ckpt{cfg.model, cfg.pretrain.seed, pre.params,
                            json{{"kind", "pretrained"}, {"suite_seed", cfg.suite.seed},
                                 {"test_accuracy", round6(pre.test_accuracy)}}};
    nn::save_checkpoint(pretrained_path(cfg), pre_ckpt);
    write_file(cfg.report_dir() / "train_pretrained.csv", train::curve_csv(pre.curve));
    r.outputs.push_back(rel(cfg, pretrained_path(cfg)));
    r.outputs.push_back("reports/train_pretrained.csv");

    const auto base_hash = nn::content_hash(pre.params);
    std::vector<double> expert_acc;
    for (std::size_t t = 0; t < suite.task_count(); ++t) {
        auto fcfg = cfg.finetune;
        fcfg.seed = cfg.finetune.seed + t;
        auto ft = train::finetune(cfg.model, pre.params, suite.tasks[t], fcfg);
        nn::Checkpoint ckpt{cfg.model, fcfg.seed, ft.params,
                            json{{"kind", "expert"}, {"task", t + 1}, {"base_hash", base_hash},
                                 {"test_accuracy", round6(ft.test_accuracy)}}};
        nn::save_checkpoint(expert_path(cfg, t), ckpt);
        const auto curve_name = "train_expert_" + std::to_string(t + 1) + ".csv";
        write_file(cfg.report_dir() / curve_name, train::curve_csv(ft.curve));
        r.outputs.push_back(rel(cfg, expert_path(cfg, t)));
        r.outputs.push_back(fs::path("reports") / curve_name);
        expert_acc.push_back(ft.test_accuracy);
    }
    r.summary = {{"pretrained_union_accuracy", round6(pre.test_accuracy)}, {"expert_accuracy", round6_all(expert_acc)}};
    write_file(cfg.report_dir() / "train.json", r.summary.dump(2) + "\n");
    r.outputs.push_back("reports/train.json");
    return r;
}

CommandResult cmd_merge(const RunConfig& cfg) {
    const auto t = load_trained(cfg);
    const auto finetuned = t.expert_params();
    const auto merged = merge::merge_models(cfg.merge, t.pretrained.params, finetuned, t.taus);
    json experts = json::array();
    for (const auto& e : t.experts) experts.push_back(nn::content_hash(e.params));
    json provenance = {
        {"kind", "merged"},
        {"method", merge::to_string(cfg.merge.method)},
        {"lambda", cfg.merge.lambda},
        {"per_task_lambda", cfg.merge.per_task_lambda ? json(*cfg.merge.per_task_lambda) : json(nullptr)},
        {"ties_density", cfg.merge.ties_density},
        {"inputs", {{"pretrained", nn::content_hash(t.pretrained.params)}, {"experts", experts}}},
    };
    const auto path = merged_path(cfg, cfg.merge.method);
    nn::save_checkpoint(path, nn::Checkpoint{cfg.model, cfg.seed, merged, provenance});
    CommandResult r;
    r.outputs.push_back(rel(cfg, path));
    r.summary = {{"method", merge::to_string(cfg.merge.method)}, {"content_hash", nn::content_hash(merged)}};
    return r;
}

CommandResult cmd_eval(const RunConfig& cfg) {
    const auto suite = load_suite(cfg);
    const auto t = load_trained(cfg);
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    rows.emplace_back("pretrained", per_task_accuracy(t.spec, t.pretrained.params, suite, cfg.threads));
    std::vector<double> ft(suite.task_count());
    for (std::size_t i = 0; i < suite.task_count(); ++i)
        ft[i] = train::evaluate(t.spec, t.experts[i].params, suite.tasks[i].test).accuracy;
    rows.emplace_back("finetuned", ft);
    for (auto m : {merge::Method::Average, merge::Method::TaskArithmetic, merge::Method::Ties}) {
        const auto path = merged_path(cfg, m);
        if (!fs::exists(path)) continue;
        const auto ckpt = nn::load_checkpoint(path);
        rows.emplace_back(std::string("merged_") + merge::to_string(m),
                          per_task_accuracy(t.spec, ckpt.params, suite, cfg.threads));
    }

    std::string csv = "model,task,accuracy\n";
    json summary = json::object();
    for (const auto& [name, acc] : rows) {
        for (std::size_t i = 0; i < acc.size(); ++i)
            csv += name + "," + std::to_string(i + 1) + "," + fixed6(acc[i]) + "\n";
        csv += name + ",mean," + fixed6(mean(acc)) + "\n";
        summary[name] = {{"per_task", round6_all(acc)}, {"mean", round6(mean(acc))}};
    }
    write_file(cfg.report_dir() / "eval.csv", csv);
    write_file(cfg.report_dir() / "eval.json", summary.dump(2) + "\n");
    CommandResult r;
    r.outputs = {"reports/eval.csv", "reports/eval.json"};
    r.summary = summary;
    return r;
}

CommandResult cmd_se_eval(const RunConfig& cfg) {
    const auto suite = load_suite(cfg);
    const auto t = load_trained(cfg);
    const auto merger = make_merger(cfg, t);
    const auto eval = se::se_evaluate(suite, merger, cfg.threads);
    const auto static_acc = per_task_accuracy(t.spec, merger.merged(), suite, cfg.threads);

    write_file(cfg.report_dir() / "se_samples.csv", se::sample_report_csv(eval, suite.task_count()));
    json summary = {
        {"lambda", cfg.se.lambda},
        {"layer", merger.layer()},
        {"distance", cfg.se.metric == DistanceMetric::L2 ? "l2" : "cosine"},
        {"per_task_accuracy", round6_all(eval.per_task_accuracy)},
        {"mean_accuracy", round6(eval.mean_accuracy)},
        {"task_identification_accuracy", round6(eval.task_identification_accuracy)},
        {"per_task_identification", round6_all(eval.per_task_identification)},
        {"static_task_arithmetic", {{"per_task_accuracy", round6_all(static_acc)}, {"mean_accuracy", round6(mean(static_acc))}}},
        {"gap_vs_static", round6(eval.mean_accuracy - mean(static_acc))},
    };
    if (eval.hard_route_accuracy) summary["hard_route_accuracy"] = round6(*eval.hard_route_accuracy);
    write_file(cfg.report_dir() / "se_eval.json", summary.dump(2) + "\n");
    CommandResult r;
    r.outputs = {"reports/se_samples.csv", "reports/se_eval.json"};
    r.summary = summary;
    return r;
}

CommandResult cmd_diagnose(const RunConfig& cfg) {
    const auto suite = load_suite(cfg);
    const auto t = load_trained(cfg);
    const auto merger = make_merger(cfg, t);
    const double lambda = cfg.se.lambda;

    std::vector<int> layers = cfg.diagnose.layers;
    if (layers.empty())
        for (int l = 1; l <= t.spec.layers(); ++l) layers.push_back(l);
    const auto acc = diag::acc_at_k(suite, t.spec, merger.merged(), merger.comparison_models(), layers,
                                    cfg.se.metric, cfg.threads);
    write_file(cfg.report_dir() / "acc_at_k.csv", acc.csv());

    diag::BiasReport bias;
    bias.add("task_arithmetic",
             diag::representation_bias(suite, t.spec, merger.merged(), t.pretrained.params, t.taus, lambda, cfg.threads));
    bias.add("se_merging", diag::representation_bias_se(suite, merger, cfg.threads));
    write_file(cfg.report_dir() / "bias.csv", bias.csv());

    const auto alphas = cfg.diagnose.alphas.empty() ? std::vector<double>(suite.task_count(), lambda) : cfg.diagnose.alphas;
    const auto far = data::far_field_samples(suite, cfg.diagnose.far_field_samples, cfg.suite.seed);
    const auto dis = diag::disentanglement_residual(suite, t.spec, t.pretrained.params, t.taus, alphas, far, cfg.threads);
    write_file(cfg.report_dir() / "disentanglement.csv", dis.csv());

    json acc_json = json::object();
    for (int l : layers) {
        json per_k = json::array();
        for (int k = 1; k <= static_cast<int>(suite.task_count()); ++k) {
            std::vector<double> v;
            for (std::size_t i = 0; i < suite.task_count(); ++i) v.push_back(acc.acc(i, l, k));
            per_k.push_back(round6_all(v));
        }
        acc_json[std::to_string(l)] = per_k;
    }
    std::size_t lower = 0;
    for (std::size_t i = 0; i < suite.task_count(); ++i)
        lower += bias.configs[1].second[i] < bias.configs[0].second[i];
    json summary = {
        {"layer", merger.layer()},
        {"acc_at_k", acc_json},
        {"bias", {{"task_arithmetic", round6_all(bias.configs[0].second)}, {"se_merging", round6_all(bias.configs[1].second)}}},
        {"bias_tasks_reduced", lower},
        {"disentanglement",
         {{"alphas", round6_all(dis.alphas)},
          {"residual", round6_all(dis.residual)},
          {"ratio", round6_all(dis.ratio)},
          {"mean_ratio", round6(dis.mean_ratio)},
          {"far_field_ratio", round6(dis.far_field_ratio)}}},
    };
    write_file(cfg.report_dir() / "diagnostics.json", summary.dump(2) + "\n");
    CommandResult r;
    r.outputs = {"reports/acc_at_k.csv", "reports/bias.csv", "reports/disentanglement.csv", "reports/diagnostics.json"};
    r.summary = summary;
    return r;
}

CommandResult cmd_export_reps(const RunConfig& cfg) {
    const auto suite = load_suite(cfg);
    const auto t = load_trained(cfg);
    if (!cfg.export_reps.layer && t.spec.layers() < 2)
        fail(ErrorKind::Config, "export.layer must be set for a model with a single layer");
    const int layer = cfg.export_reps.layer.value_or(t.spec.layers() - 1);
    std::vector<std::pair<std::string, ParamVector>> models;
    models.emplace_back("merged", merge::task_arithmetic(t.pretrained.params, t.taus, cfg.se.lambda));
    for (std::size_t i = 0; i < t.experts.size(); ++i)
        models.emplace_back("expert_" + std::to_string(i + 1), t.experts[i].params);
    if (cfg.export_reps.include_pretrained) models.emplace_back("pretrained", t.pretrained.params);
    const auto name = "representations_layer" + std::to_string(layer) + ".csv";
    const auto rows = diag::export_representations(suite, t.spec, models, layer, cfg.report_dir() / name);
    CommandResult r;
    r.outputs.push_back(fs::path("reports") / name);
    r.summary = {{"layer", layer}, {"rows", rows}, {"models", models.size()}};
    return r;
}

CommandResult cmd_reproduce(const RunConfig& cfg) {
    CommandResult r;
    auto absorb = [&](const CommandResult& c) { r.outputs.insert(r.outputs.end(), c.outputs.begin(), c.outputs.end()); };

    cmd_gen_data(cfg);
    const auto trained = cmd_train(cfg);
    absorb(trained);
    for (auto m : {merge::Method::Average, merge::Method::TaskArithmetic, merge::Method::Ties}) {
        auto mcfg = cfg;
        mcfg.merge.method = m;
        if (m == merge::Method::Average) mcfg.merge.per_task_lambda.reset();
        absorb(cmd_merge(mcfg));
    }
    const auto eval = cmd_eval(cfg);
    absorb(eval);
    const auto se_eval = cmd_se_eval(cfg);
    absorb(se_eval);
    const auto diagnose = cmd_diagnose(cfg);
    absorb(diagnose);
    absorb(cmd_export_reps(cfg));

    json files = json::array();
    for (const auto& p : r.outputs) files.push_back(p.generic_string());
    r.summary = {
        {"run_id", cfg.run_id},
        {"config", cfg.to_json()},
        {"mean_accuracy",
         {{"pretrained", eval.summary["pretrained"]["mean"]},
          {"finetuned", eval.summary["finetuned"]["mean"]},
          {"weight_average", eval.summary["merged_average"]["mean"]},
          {"task_arithmetic", eval.summary["merged_task_arithmetic"]["mean"]},
          {"ties", eval.summary["merged_ties"]["mean"]},
          {"se_merging", se_eval.summary["mean_accuracy"]}}},
        {"per_task_accuracy",
         {{"pretrained", eval.summary["pretrained"]["per_task"]},
          {"finetuned", eval.summary["finetuned"]["per_task"]},
          {"weight_average", eval.summary["merged_average"]["per_task"]},
          {"task_arithmetic", eval.summary["merged_task_arithmetic"]["per_task"]},
          {"ties", eval.summary["merged_ties"]["per_task"]},
          {"se_merging", se_eval.summary["per_task_accuracy"]}}},
        {"se_static_reference", se_eval.summary["static_task_arithmetic"]},
        {"se_gap_vs_static", se_eval.summary["gap_vs_static"]},
        {"task_identification_accuracy", se_eval.summary["task_identification_accuracy"]},
        {"pretrained_union_accuracy", trained.summary["pretrained_union_accuracy"]},
        {"diagnostics", diagnose.summary},
        {"files", files},
    };
    write_file(cfg.run_dir() / "summary.json", r.summary.dump(2) + "\n");
    r.outputs.push_back("summary.json");
    return r;
}

const std::vector<std::string_view>& command_names() {
    static const std::vector<std::string_view> names = {"gen-data", "train", "merge", "eval",
                                                        "se-eval", "diagnose", "export-reps", "reproduce"};
    return names;
}

CommandResult run_command(std::string_view name, const RunConfig& cfg) {
    const auto started = iso_now();
    CommandResult r;
    if (name == "gen-data") r = cmd_gen_data(cfg);
    else if (name == "train") r = cmd_train(cfg);
    else if (name == "merge") r = cmd_merge(cfg);
    else if (name == "eval") r = cmd_eval(cfg);
    else if (name == "se-eval") r = cmd_se_eval(cfg);
    else if (name == "diagnose") r = cmd_diagnose(cfg);
    else if (name == "export-reps") r = cmd_export_reps(cfg);
    else if (name == "reproduce") r = cmd_reproduce(cfg);
    else fail(ErrorKind::Config, "unknown command '" + std::string(name) + "'");

    if (name != "gen-data") {
        json outputs = json::object();
        for (const auto& p : r.outputs) {
            const auto full = cfg.run_dir() / p;
            if (fs::is_regular_file(full)) outputs[p.generic_string()] = sha256_hex(read_file(full));
        }
        const json meta = {{"run_id", cfg.run_id}, {"command", name},     {"started_at", started},
                           {"finished_at", iso_now()}, {"threads", resolve_threads(cfg.threads)}, {"outputs", outputs}};
        write_file(cfg.run_dir() / "meta.json", meta.dump(2) + "\n");
    }
    return r;
}

}  // namespace mergelab::run
