#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mergelab/mergelab.h"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::current_path() / "scratch" / "capi";

// Trains a tiny two-task run once and returns its checkpoint directory.
fs::path trained_run() {
    static const fs::path dir = [] {
        fs::remove_all(kRoot);
        const nlohmann::json o = {
            {"run_id", "c"},
            {"output_dir", (kRoot / "runs").string()},
            {"data_dir", (kRoot / "data").string()},
            {"threads", 1},
            {"seed", 3},
            {"suite", {{"tasks", 2}, {"dim", 8}, {"n_train", 128}, {"n_test", 64}}},
            {"model", {{"hidden_widths", {12}}}},
            {"pretrain", {{"epochs", 2}}},
            {"finetune", {{"epochs", 2}}},
        };
        const auto text = o.dump();
        REQUIRE(mlab_run_command("gen-data", nullptr, text.c_str(), nullptr) == MLAB_OK);
        char* summary = nullptr;
        REQUIRE(mlab_run_command("train", nullptr, text.c_str(), &summary) == MLAB_OK);
        REQUIRE(summary != nullptr);
        CHECK(nlohmann::json::parse(summary).contains("pretrained_union_accuracy"));
        mlab_free_string(summary);
        return kRoot / "runs" / "c" / "checkpoints";
    }();
    return dir;
}

struct Loaded {
    mlab_checkpoint* ckpt = nullptr;
    mlab_params* params = nullptr;
    explicit Loaded(const fs::path& p) {
        REQUIRE(mlab_checkpoint_load(p.c_str(), &ckpt) == MLAB_OK);
        REQUIRE(mlab_checkpoint_params(ckpt, &params) == MLAB_OK);
    }
    ~Loaded() {
        mlab_params_free(params);
        mlab_checkpoint_free(ckpt);
    }
    std::vector<float> values() const {
        std::vector<float> v(mlab_params_size(params));
        REQUIRE(mlab_params_copy_values(params, v.data(), v.size()) == MLAB_OK);
        return v;
    }
};

std::vector<float> values_of(const mlab_params* p) {
    std::vector<float> v(mlab_params_size(p));
    REQUIRE(mlab_params_copy_values(p, v.data(), v.size()) == MLAB_OK);
    return v;
}

}  // namespace

TEST_CASE("version, status names and empty last error") {
    CHECK(std::string(mlab_version()).size() > 0);
    CHECK(std::string(mlab_status_name(MLAB_OK)) != std::string(mlab_status_name(MLAB_ERR_CONFIG)));
    double out[2];
    const double d[2] = {1.0, 3.0};
    REQUIRE(mlab_rescale_coefficients(d, 2, 0.3, out) == MLAB_OK);
    CHECK(std::string(mlab_last_error()).empty());
}

TEST_CASE("rescale coefficients") {
    const double d[2] = {1.0, 3.0};
    double out[2];
    REQUIRE(mlab_rescale_coefficients(d, 2, 0.3, out) == MLAB_OK);
    CHECK(std::abs(out[0] - 0.4387) < 5e-4);
    CHECK(std::abs(out[1] - 0.1613) < 5e-4);
    CHECK(mlab_rescale_coefficients(nullptr, 2, 0.3, out) == MLAB_ERR_INVALID_ARG);
    CHECK(mlab_rescale_coefficients(d, 0, 0.3, out) != MLAB_OK);
    const double bad[2] = {1.0, NAN};
    CHECK(mlab_rescale_coefficients(bad, 2, 0.3, out) == MLAB_ERR_DOMAIN);
    CHECK(std::string(mlab_last_error()).size() > 0);
}

TEST_CASE("run_command error categories") {
    CHECK(mlab_run_command(nullptr, nullptr, nullptr, nullptr) == MLAB_ERR_INVALID_ARG);
    CHECK(mlab_run_command("train", nullptr, R"({"bogus": 1})", nullptr) == MLAB_ERR_CONFIG);
    CHECK(std::string(mlab_last_error()).find("bogus") != std::string::npos);
    CHECK(mlab_run_command("train", nullptr, "{not json", nullptr) == MLAB_ERR_CONFIG);
    const auto missing = R"({"run_id": "none", "output_dir": ")" + (kRoot.parent_path() / "capi_missing").string() +
                         R"(", "data_dir": ")" + (kRoot.parent_path() / "capi_missing_data").string() + R"("})";
    CHECK(mlab_run_command("merge", nullptr, missing.c_str(), nullptr) == MLAB_ERR_DATA);
    CHECK(mlab_run_command("train", "/nonexistent/config.json", nullptr, nullptr) != MLAB_OK);
}

TEST_CASE("checkpoint load, save and hash") {
    const auto dir = trained_run();
    Loaded pt(dir / "pretrained.ckpt");
    CHECK(mlab_params_size(pt.params) == 8 * 12 + 12 + 12 * 4 + 4);
    char h1[65], h2[65];
    REQUIRE(mlab_params_content_hash(pt.params, h1) == MLAB_OK);
    CHECK(std::strlen(h1) == 64);

    const auto copy = kRoot / "copy.ckpt";
    REQUIRE(mlab_checkpoint_save(pt.ckpt, copy.c_str()) == MLAB_OK);
    Loaded again(copy);
    REQUIRE(mlab_params_content_hash(again.params, h2) == MLAB_OK);
    CHECK(std::string(h1) == std::string(h2));
    CHECK(pt.values() == again.values());

    mlab_checkpoint* none = nullptr;
    CHECK(mlab_checkpoint_load((kRoot / "absent.ckpt").c_str(), &none) != MLAB_OK);
    CHECK(none == nullptr);
    CHECK(mlab_checkpoint_load(nullptr, &none) == MLAB_ERR_INVALID_ARG);
    std::vector<float> small(3);
    CHECK(mlab_params_copy_values(pt.params, small.data(), small.size()) != MLAB_OK);
}

TEST_CASE("task vector round trip and merges") {
    const auto dir = trained_run();
    Loaded pt(dir / "pretrained.ckpt"), e1(dir / "expert_1.ckpt"), e2(dir / "expert_2.ckpt");
    mlab_params *t1 = nullptr, *t2 = nullptr;
    REQUIRE(mlab_task_vector(e1.params, pt.params, &t1) == MLAB_OK);
    REQUIRE(mlab_task_vector(e2.params, pt.params, &t2) == MLAB_OK);

    const mlab_params* one[1] = {t1};
    const double unit[1] = {1.0};
    mlab_params* back = nullptr;
    REQUIRE(mlab_task_arithmetic(pt.params, one, unit, 1, &back) == MLAB_OK);
    CHECK(values_of(back) == e1.values());

    const mlab_params* both[2] = {t1, t2};
    const double lam[2] = {0.3, 0.3};
    mlab_params* ta = nullptr;
    REQUIRE(mlab_task_arithmetic(pt.params, both, lam, 2, &ta) == MLAB_OK);
    const auto p = pt.values(), a = e1.values(), b = e2.values(), m = values_of(ta);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double expect = double(p[i]) + 0.3 * double(a[i] - p[i]) + 0.3 * double(b[i] - p[i]);
        REQUIRE(std::abs(m[i] - expect) < 1e-6);
    }

    mlab_params* ties = nullptr;
    REQUIRE(mlab_ties_merge(pt.params, both, 2, 1.0, 1.0, &ties) == MLAB_OK);
    CHECK(mlab_params_size(ties) == mlab_params_size(pt.params));
    CHECK(mlab_ties_merge(pt.params, both, 2, 1.0, 0.0, &ties) == MLAB_ERR_DOMAIN);

    // Logits of the merged parameters through the pretrained checkpoint's spec.
    std::vector<float> x(8, 0.5f), out(4);
    REQUIRE(mlab_forward(pt.ckpt, ta, x.data(), x.size(), out.data(), out.size()) == MLAB_OK);
    for (float v : out) CHECK(std::isfinite(v));
    CHECK(mlab_forward(pt.ckpt, ta, x.data(), 7, out.data(), out.size()) != MLAB_OK);
    CHECK(mlab_forward(pt.ckpt, ta, x.data(), x.size(), out.data(), 3) != MLAB_OK);

    mlab_checkpoint* wrapped = nullptr;
    REQUIRE(mlab_checkpoint_with_params(pt.ckpt, ta, &wrapped) == MLAB_OK);
    const auto merged_path = kRoot / "merged.ckpt";
    REQUIRE(mlab_checkpoint_save(wrapped, merged_path.c_str()) == MLAB_OK);
    Loaded reread(merged_path);
    CHECK(reread.values() == m);

    mlab_checkpoint_free(wrapped);
    mlab_params_free(ties);
    mlab_params_free(ta);
    mlab_params_free(back);
    mlab_params_free(t1);
    mlab_params_free(t2);
}
