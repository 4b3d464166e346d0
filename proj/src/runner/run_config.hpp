#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_math/vector_ops.hpp"
#include "merging/merging.hpp"
#include "nn_model/model.hpp"
#include "se_merging/se_merging.hpp"
#include "task_suite/task_suite.hpp"
#include "trainer/trainer.hpp"

namespace mergelab::run {

struct DiagnoseConfig {
    std::vector<int> layers;       // empty = all layers 1..L
    std::vector<double> alphas;    // empty = merge lambda per task
    std::size_t far_field_samples = 256;
};

struct ExportConfig {
    std::optional<int> layer;      // default L-1
    bool include_pretrained = false;
};

/// Everything a run needs, parsed from one JSON document.
struct RunConfig {
    std::string run_id = "default";
    std::filesystem::path output_dir = "runs";
    std::filesystem::path data_dir = "data";
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0 = all cores

    data::SuiteConfig suite;
    nn::ModelSpec model;
    train::TrainConfig pretrain;
    train::TrainConfig finetune;
    merge::MergeConfig merge;
    se::SeOptions se;
    DiagnoseConfig diagnose;
    ExportConfig export_reps;

    std::filesystem::path run_dir() const { return output_dir / run_id; }
    std::filesystem::path checkpoint_dir() const { return run_dir() / "checkpoints"; }
    std::filesystem::path report_dir() const { return run_dir() / "reports"; }

    /// The resolved configuration (defaults filled in).
    nlohmann::json to_json() const;
};

/// Default document; every accepted key appears here.
nlohmann::json default_config_json();

/// Overlays `user` onto the defaults (objects merge recursively, other values
/// replace), rejecting keys that the defaults do not define. Throws a config
/// error naming the offending key path.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user, const std::string& path = "");

/// Parses a full config document (after merging with defaults).
RunConfig parse_run_config(const nlohmann::json& user);

/// Reads `path` (may be empty for defaults only) and applies `overrides`.
RunConfig load_run_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());

}  // namespace mergelab::run
