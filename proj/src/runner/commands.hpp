#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "runner/run_config.hpp"

namespace mergelab::run {

struct CommandResult {
    /// Files written, relative to the run directory (or data dir for gen-data).
    std::vector<std::filesystem::path> outputs;
    /// Machine-readable digest of what the command computed.
    nlohmann::json summary = nlohmann::json::object();
};

CommandResult cmd_gen_data(const RunConfig& cfg);
CommandResult cmd_train(const RunConfig& cfg);
CommandResult cmd_merge(const RunConfig& cfg);
CommandResult cmd_eval(const RunConfig& cfg);
CommandResult cmd_se_eval(const RunConfig& cfg);
CommandResult cmd_diagnose(const RunConfig& cfg);
CommandResult cmd_export_reps(const RunConfig& cfg);
/// gen-data -> train -> merge (all methods) -> eval -> se-eval -> diagnose ->
/// export-reps, then writes summary.json.
CommandResult cmd_reproduce(const RunConfig& cfg);

/// Names accepted by run_command.
const std::vector<std::string_view>& command_names();

/// Dispatches by subcommand name and records meta.json for the run.
CommandResult run_command(std::string_view name, const RunConfig& cfg);

/// Rounds to 6 decimals so JSON reports diff cleanly.
double round6(double v);

}  // namespace mergelab::run
