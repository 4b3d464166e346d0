// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mergelab/mergelab.h"

namespace {

struct Options {
    std::string config;
    std::string run_id;
    std::string output_dir;
    std::string data_dir;
    std::string preset;
    long long seed = -1;
    long long threads = -1;
    std::vector<std::string> sets;
    bool quiet = false;
};

// "a.b.c=<json>" -> {"a":{"b":{"c":<json>}}}; bare words are taken as strings.
void apply_set(nlohmann::json& overrides, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }
    nlohmann::json* cur = &overrides;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*cur)[part] = value;
            break;
        }
        cur = &(*cur)[part];
        start = dot + 1;
    }
}

nlohmann::json build_overrides(const Options& o) {
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& s : o.sets) apply_set(overrides, s);
    if (!o.run_id.empty()) overrides["run_id"] = o.run_id;
    if (!o.output_dir.empty()) overrides["output_dir"] = o.output_dir;
    if (!o.data_dir.empty()) overrides["data_dir"] = o.data_dir;
    if (!o.preset.empty()) overrides["suite"]["preset"] = o.preset;
    if (o.seed >= 0) overrides["seed"] = o.seed;

    // --threads beats MERGELAB_THREADS, which beats the config file.
    if (o.threads >= 0) {
        overrides["threads"] = o.threads;
    } else if (const char* env = std::getenv("MERGELAB_THREADS"); env && *env) {
        char* end = nullptr;
        const long long n = std::strtoll(env, &end, 10);
        if (*end != '\0' || n < 0) throw CLI::ValidationError("MERGELAB_THREADS", "must be a non-negative integer");
        overrides["threads"] = n;
    }
    return overrides;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mergelab: model merging experiments on synthetic task suites"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mlab_version()));

    Options opts;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "generate the synthetic task suite"},
        {"train", "pretrain the shared model and fine-tune one expert per task"},
        {"merge", "merge the experts into one checkpoint"},
        {"eval", "evaluate pretrained, expert and merged checkpoints"},
        {"se-eval", "evaluate per-sample rescaled merging"},
        {"diagnose", "acc@k, representation bias and disentanglement reports"},
        {"export-reps", "dump hidden representations as CSV"},
        {"reproduce", "run every step and write summary.json"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", opts.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--run-id", opts.run_id, "run name under the output directory");
        sub->add_option("--output-dir", opts.output_dir, "root for runs/<run-id>");
        sub->add_option("--data-dir", opts.data_dir, "dataset root");
        sub->add_option("--preset", opts.preset, "suite preset")->check(CLI::IsMember({"default", "conflict"}));
        sub->add_option("--seed", opts.seed, "global seed")->check(CLI::NonNegativeNumber);
        sub->add_option("--threads", opts.threads, "worker threads, 0 = all cores (env MERGELAB_THREADS)")
            ->check(CLI::NonNegativeNumber);
        sub->add_option("--set", opts.sets, "override a config key, e.g. --set merge.lambda=0.4");
        sub->add_flag("-q,--quiet", opts.quiet, "do not print the summary");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    nlohmann::json overrides;
    try {
        overrides = build_overrides(opts);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "error [config]: %s\n", e.what());
        return 2;
    }

    const std::string name = app.get_subcommands().front()->get_name();
    char* summary = nullptr;
    const std::string overrides_text = overrides.dump();
    const mlab_status st = mlab_run_command(name.c_str(), opts.config.empty() ? nullptr : opts.config.c_str(),
                                            overrides_text.c_str(), &summary);
    if (st != MLAB_OK) {
        std::fprintf(stderr, "error [%s]: %s\n", mlab_status_name(st), mlab_last_error());
        switch (st) {
            case MLAB_ERR_CONFIG: return 2;
            case MLAB_ERR_DATA: return 3;
            case MLAB_ERR_NUMERIC: return 4;
            case MLAB_ERR_IO: return 5;
            default: return 1;
        }
    }
    if (!opts.quiet && summary) std::printf("%s\n", summary);
    mlab_free_string(summary);
    return 0;
}
