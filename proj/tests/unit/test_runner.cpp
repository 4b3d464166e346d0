#include <doctest.h>

#include <filesystem>

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "runner/commands.hpp"
#include "runner/run_config.hpp"
#include "support.hpp"

using namespace mergelab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_overrides(const fs::path& root, const std::string& run_id, std::size_t threads) {
    return {
        {"run_id", run_id},
        {"output_dir", (root / "runs").string()},
        {"data_dir", (root / "data").string()},
        {"seed", 2},
        {"threads", threads},
        {"suite", {{"tasks", 2}, {"dim", 8}, {"n_train", 96}, {"n_test", 48}}},
        {"model", {{"hidden_widths", json::array({16})}}},
        {"pretrain", {{"epochs", 3}}},
        {"finetune", {{"epochs", 2}}},
        {"diagnose", {{"far_field_samples", 16}}},
    };
}

}  // namespace

TEST_SUITE("run config") {
    TEST_CASE("defaults parse and resolve") {
        const auto c = run::load_run_config("");
        CHECK(c.suite.tasks == 4);
        CHECK(c.suite.dim == 16);
        CHECK(c.model.layer_widths.front() == 16);
        CHECK(c.model.layer_widths.back() == 4);
        CHECK(c.merge.lambda == 0.3);
        CHECK(c.pretrain.seed == c.seed);
        CHECK(c.finetune.seed == c.seed + 1);
    }

    TEST_CASE("unknown keys are rejected by name") {
        for (const auto& [doc, key] : std::vector<std::pair<json, std::string>>{
                 {{{"bogus", 1}}, "bogus"},
                 {{{"merge", {{"lamda", 0.3}}}}, "merge.lamda"},
                 {{{"suite", {{"bogus_knob", 1}}}}, "suite.bogus_knob"}}) {
            try {
                (void)run::parse_run_config(doc);
                FAIL("accepted unknown key " << key);
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::Config);
                CHECK(std::string(e.what()).find("'" + key + "'") != std::string::npos);
            }
        }
    }

    TEST_CASE("wrong types and out-of-range values are config errors") {
        CHECK_THROWS_AS(run::parse_run_config({{"merge", {{"lambda", "high"}}}}), Error);
        CHECK_THROWS_AS(run::parse_run_config({{"merge", {{"method", "dare"}}}}), Error);
        CHECK_THROWS_AS(run::parse_run_config({{"model", "big"}}), Error);
    }

    TEST_CASE("resolved config reflects presets and overrides") {
        const json doc = {{"seed", 7}, {"suite", {{"preset", "conflict"}}}, {"merge", {{"lambda", 0.4}}}};
        const auto c = run::parse_run_config(doc);
        CHECK(c.suite.task_separation == 3.0);
        const auto j = c.to_json();
        CHECK(j["suite"]["task_separation"] == 3.0);
        CHECK(j["suite"]["seed"] == 7);
        CHECK(j["merge"]["lambda"] == 0.4);
        CHECK(j == run::parse_run_config(doc).to_json());
        CHECK(data::suite_config_from_json(j["suite"]) == c.suite);
    }

    TEST_CASE("config file with overrides") {
        const auto dir = testing::scratch_dir("cfg_file");
        write_file(dir / "c.json", R"({"seed": 5, "merge": {"lambda": 0.5}})");
        const auto c = run::load_run_config(dir / "c.json", {{"merge", {{"lambda", 0.2}}}});
        CHECK(c.seed == 5);
        CHECK(c.merge.lambda == 0.2);
        write_file(dir / "bad.json", "{ not json");
        CHECK_THROWS_AS(run::load_run_config(dir / "bad.json"), Error);
        CHECK_THROWS_AS(run::load_run_config(dir / "missing.json"), Error);
    }

    TEST_CASE("round6") {
        CHECK(run::round6(0.1234565) == doctest::Approx(0.123457));
        CHECK(run::round6(-0.0000001) == 0.0);
    }
}

TEST_SUITE("commands") {
    TEST_CASE("missing artifacts name the command to run first") {
        const auto root = testing::scratch_dir("cmd_missing");
        const auto cfg = run::parse_run_config(small_overrides(root, "r", 1));
        try {
            (void)run::run_command("merge", cfg);
            FAIL("merge without checkpoints");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Data);
            CHECK(std::string(e.what()).find("train") != std::string::npos);
        }
        CHECK_THROWS_AS(run::run_command("fly", cfg), Error);
    }

    TEST_CASE("reproduce is byte-identical across repeats and thread counts") {
        const auto root = testing::scratch_dir("cmd_repro");
        const auto a = run::parse_run_config(small_overrides(root, "a", 1));
        const auto b = run::parse_run_config(small_overrides(root, "b", 4));
        const auto ra = run::run_command("reproduce", a);
        (void)run::run_command("reproduce", b);

        CHECK(fs::exists(a.run_dir() / "meta.json"));
        CHECK(fs::exists(a.run_dir() / "summary.json"));
        CHECK(fs::exists(a.checkpoint_dir() / "pretrained.ckpt"));
        CHECK(fs::exists(a.checkpoint_dir() / "expert_2.ckpt"));
        CHECK(fs::exists(a.checkpoint_dir() / "merged_ties.ckpt"));

        for (const auto& p : ra.outputs) {
            if (p == "summary.json") continue;
            INFO(p.string());
            CHECK(read_file(a.run_dir() / p) == read_file(b.run_dir() / p));
        }
        // summary.json carries the run id, so compare it with that field removed.
        auto sa = json::parse(read_file(a.run_dir() / "summary.json"));
        auto sb = json::parse(read_file(b.run_dir() / "summary.json"));
        sa.erase("run_id");
        sb.erase("run_id");
        sa["config"].erase("run_id");
        sb["config"].erase("run_id");
        CHECK(sa == sb);

        const auto meta = json::parse(read_file(b.run_dir() / "meta.json"));
        CHECK(meta["command"] == "reproduce");
        CHECK(meta["threads"] == 4);
        CHECK(meta["outputs"].contains("checkpoints/pretrained.ckpt"));
    }

    TEST_CASE("merge twice writes identical checkpoints") {
        const auto root = testing::scratch_dir("cmd_merge");
        const auto cfg = run::parse_run_config(small_overrides(root, "m", 1));
        (void)run::run_command("gen-data", cfg);
        (void)run::run_command("train", cfg);
        const auto first = run::run_command("merge", cfg);
        std::vector<std::string> before;
        for (const auto& p : first.outputs) before.push_back(read_file(cfg.run_dir() / p));
        const auto second = run::run_command("merge", cfg);
        REQUIRE(second.outputs == first.outputs);
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(read_file(cfg.run_dir() / second.outputs[i]) == before[i]);
    }
}
