#include "runner/run_config.hpp"

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "nn_model/checkpoint.hpp"

namespace mergelab::run {

using nlohmann::json;

json default_config_json() {
    return json::parse(R"({
      "run_id": "default",
      "output_dir": "runs",
      "data_dir": "data",
      "seed": 0,
      "threads": 0,
      "suite": {
        "preset": "default",
        "seed": null, "tasks": null, "dim": null, "classes": null,
        "n_train": null, "n_test": null, "sigma": null,
        "task_separation": null, "class_separation": null,
        "region_scale": null, "class_scale": null, "class_sharing": null, "label_skew": null, "probe_threshold": null
      },
      "model": { "hidden_widths": [128], "activation": "tanh" },
      "pretrain": { "epochs": 20, "batch_size": 32, "learning_rate": 0.0025,
                    "optimizer": "sgd_momentum", "momentum": 0.9, "seed": null },
      "finetune": { "epochs": 10, "batch_size": 32, "learning_rate": 0.2,
                    "optimizer": "sgd", "momentum": 0.9, "seed": null },
      "merge": { "method": "task_arithmetic", "lambda": 0.3, "per_task_lambda": null, "ties_density": 1.0 },
      "se": { "lambda": 0.3, "layer": null, "distance": "l2", "comparison": "lambda", "route_hard": false },
      "diagnose": { "layers": null, "alphas": null, "far_field_samples": 256 },
      "export": { "layer": null, "include_pretrained": false }
    })");
}

json merge_config(const json& defaults, const json& user, const std::string& path) {
    if (!user.is_object()) fail(ErrorKind::Config, "config" + (path.empty() ? "" : " key '" + path + "'") + " must be a JSON object");
    json out = defaults;
    for (const auto& [key, value] : user.items()) {
        const std::string full = path.empty() ? key : path + "." + key;
        if (!defaults.contains(key)) fail(ErrorKind::Config, "unknown config key '" + full + "'");
        if (defaults[key].is_object() && !value.is_null())
            out[key] = merge_config(defaults[key], value, full);
        else
            out[key] = value;
    }
    return out;
}

namespace {

/// Typed accessor that names the key path on failure.
template <typename T>
T get(const json& j, const std::string& path) {
    const json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        cur = &cur->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    try {
        return cur->get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::Config, "config key '" + path + "' has the wrong type (got " + cur->dump() + ")");
    }
}

bool is_null(const json& j, const std::string& path) {
    const json* cur = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        cur = &cur->at(path.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return cur->is_null();
}

template <typename T>
void override_if_set(const json& j, const std::string& path, T& target) {
    if (!is_null(j, path)) target = get<T>(j, path);
}

train::TrainConfig parse_train(const json& j, const std::string& section, std::uint64_t default_seed) {
    train::TrainConfig c;
    c.epochs = get<int>(j, section + ".epochs");
    c.batch_size = get<std::size_t>(j, section + ".batch_size");
    c.learning_rate = get<double>(j, section + ".learning_rate");
    c.optimizer = train::optimizer_from_string(get<std::string>(j, section + ".optimizer"));
    c.momentum = get<double>(j, section + ".momentum");
    c.seed = is_null(j, section + ".seed") ? default_seed : get<std::uint64_t>(j, section + ".seed");
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, "config section '" + section + "': " + e.what());
    }
    return c;
}

}  // namespace

RunConfig parse_run_config(const json& user) {
    const json j = merge_config(default_config_json(), user);
    RunConfig c;
    c.run_id = get<std::string>(j, "run_id");
    if (c.run_id.empty() || c.run_id.find('/') != std::string::npos)
        fail(ErrorKind::Config, "config key 'run_id' must be a non-empty name without '/'");
    c.output_dir = get<std::string>(j, "output_dir");
    c.data_dir = get<std::string>(j, "data_dir");
    c.seed = get<std::uint64_t>(j, "seed");
    c.threads = get<std::size_t>(j, "threads");

    const auto preset = get<std::string>(j, "suite.preset");
    if (preset == "default")
        c.suite = data::SuiteConfig::default_suite(c.seed);
    else if (preset == "conflict")
        c.suite = data::SuiteConfig::conflict_suite(c.seed);
    else
        fail(ErrorKind::Config, "config key 'suite.preset' must be 'default' or 'conflict' (got '" + preset + "')");
    override_if_set(j, "suite.seed", c.suite.seed);
    override_if_set(j, "suite.tasks", c.suite.tasks);
    override_if_set(j, "suite.dim", c.suite.dim);
    override_if_set(j, "suite.classes", c.suite.classes);
    override_if_set(j, "suite.n_train", c.suite.n_train);
    override_if_set(j, "suite.n_test", c.suite.n_test);
    override_if_set(j, "suite.sigma", c.suite.sigma);
    override_if_set(j, "suite.task_separation", c.suite.task_separation);
    override_if_set(j, "suite.class_separation", c.suite.class_separation);
    override_if_set(j, "suite.region_scale", c.suite.region_scale);
    override_if_set(j, "suite.class_scale", c.suite.class_scale);
    override_if_set(j, "suite.class_sharing", c.suite.class_sharing);
    override_if_set(j, "suite.label_skew", c.suite.label_skew);
    override_if_set(j, "suite.probe_threshold", c.suite.probe_threshold);
    try {
        c.suite.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("config section 'suite': ") + e.what());
    }

    c.model.layer_widths = {c.suite.dim};
    for (auto w : get<std::vector<std::size_t>>(j, "model.hidden_widths")) c.model.layer_widths.push_back(w);
    c.model.layer_widths.push_back(c.suite.classes);
    c.model.activation = nn::activation_from_string(get<std::string>(j, "model.activation"));
    try {
        c.model.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("config section 'model': ") + e.what());
    }

    c.pretrain = parse_train(j, "pretrain", c.seed);
    c.finetune = parse_train(j, "finetune", c.seed + 1);

    c.merge.method = merge::method_from_string(get<std::string>(j, "merge.method"));
    c.merge.lambda = get<double>(j, "merge.lambda");
    if (!is_null(j, "merge.per_task_lambda")) c.merge.per_task_lambda = get<std::vector<double>>(j, "merge.per_task_lambda");
    c.merge.ties_density = get<double>(j, "merge.ties_density");
    try {
        c.merge.validate(c.suite.tasks);
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("config section 'merge': ") + e.what());
    }

    c.se.lambda = get<double>(j, "se.lambda");
    if (!is_null(j, "se.layer")) c.se.layer = get<int>(j, "se.layer");
    const auto distance = get<std::string>(j, "se.distance");
    if (distance == "l2")
        c.se.metric = DistanceMetric::L2;
    else if (distance == "cosine")
        c.se.metric = DistanceMetric::Cosine;
    else
        fail(ErrorKind::Config, "config key 'se.distance' must be 'l2' or 'cosine'");
    const auto comparison = get<std::string>(j, "se.comparison");
    if (comparison == "full")
        c.se.comparison_scale = 1.0;
    else if (comparison != "lambda")
        fail(ErrorKind::Config, "config key 'se.comparison' must be 'lambda' or 'full'");
    c.se.route_hard = get<bool>(j, "se.route_hard");
    if (!(c.se.lambda >= 0.0)) fail(ErrorKind::Config, "config key 'se.lambda' must be >= 0");
    if (c.se.layer && (*c.se.layer < 1 || *c.se.layer > c.model.layers()))
        fail(ErrorKind::Config, "config key 'se.layer' must lie in [1, " + std::to_string(c.model.layers()) + "]");

    if (!is_null(j, "diagnose.layers")) c.diagnose.layers = get<std::vector<int>>(j, "diagnose.layers");
    for (int l : c.diagnose.layers)
        if (l < 1 || l > c.model.layers()) fail(ErrorKind::Config, "config key 'diagnose.layers' has an out-of-range layer");
    if (!is_null(j, "diagnose.alphas")) {
        c.diagnose.alphas = get<std::vector<double>>(j, "diagnose.alphas");
        if (c.diagnose.alphas.size() != c.suite.tasks)
            fail(ErrorKind::Config, "config key 'diagnose.alphas' needs one entry per task");
    }
    c.diagnose.far_field_samples = get<std::size_t>(j, "diagnose.far_field_samples");

    if (!is_null(j, "export.layer")) c.export_reps.layer = get<int>(j, "export.layer");
    if (c.export_reps.layer && (*c.export_reps.layer < 1 || *c.export_reps.layer > c.model.layers()))
        fail(ErrorKind::Config, "config key 'export.layer' must lie in [1, " + std::to_string(c.model.layers()) + "]");
    c.export_reps.include_pretrained = get<bool>(j, "export.include_pretrained");
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const json& overrides) {
    json user = json::object();
    if (!path.empty()) {
        try {
            user = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Config, "config file '" + path.string() + "' is not valid JSON: " + e.what());
        }
    }
    if (!overrides.is_null() && !overrides.empty()) user = merge_config(merge_config(default_config_json(), user), overrides);
    return parse_run_config(user);
}

json RunConfig::to_json() const {
    auto tj = [](const train::TrainConfig& t) {
        return json{{"epochs", t.epochs},           {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
                    {"optimizer", to_string(t.optimizer)}, {"momentum", t.momentum},     {"seed", t.seed}};
    };
    json out = {
        {"run_id", run_id},
        {"output_dir", output_dir.string()},
        {"data_dir", data_dir.string()},
        {"seed", seed},
        {"suite", data::suite_config_to_json(suite)},
        {"model", nn::spec_to_json(model)},
        {"pretrain", tj(pretrain)},
        {"finetune", tj(finetune)},
        {"merge",
         {{"method", merge::to_string(merge.method)},
          {"lambda", merge.lambda},
          {"per_task_lambda", merge.per_task_lambda ? json(*merge.per_task_lambda) : json(nullptr)},
          {"ties_density", merge.ties_density}}},
        {"se",
         {{"lambda", se.lambda},
          {"layer", se.layer ? json(*se.layer) : json(nullptr)},
          {"distance", se.metric == DistanceMetric::L2 ? "l2" : "cosine"},
          {"comparison", se.comparison_scale ? "full" : "lambda"},
          {"route_hard", se.route_hard}}},
    };
    return out;
}

}  // namespace mergelab::run
