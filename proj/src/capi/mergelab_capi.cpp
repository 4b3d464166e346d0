#include "mergelab/mergelab.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_math/error.hpp"
#include "merging/merging.hpp"
#include "nn_model/checkpoint.hpp"
#include "runner/commands.hpp"
#include "runner/run_config.hpp"
#include "se_merging/se_merging.hpp"

struct mlab_params {
    mergelab::ParamVector value;
    std::vector<float> residual = {};  // set only for task vectors
};

struct mlab_checkpoint {
    mergelab::nn::Checkpoint value;
};

namespace {

thread_local std::string last_error;

mlab_status status_of(mergelab::ErrorKind kind) {
    using mergelab::ErrorKind;
    switch (kind) {
        case ErrorKind::Config: return MLAB_ERR_CONFIG;
        case ErrorKind::Data: return MLAB_ERR_DATA;
        case ErrorKind::Numeric: return MLAB_ERR_NUMERIC;
        case ErrorKind::Io: return MLAB_ERR_IO;
        case ErrorKind::Structural: return MLAB_ERR_STRUCTURAL;
        case ErrorKind::Domain: return MLAB_ERR_DOMAIN;
    }
    return MLAB_ERR_INTERNAL;
}

template <typename F>
mlab_status guarded(F&& body) {
    last_error.clear();
    try {
        body();
        return MLAB_OK;
    } catch (const mergelab::Error& e) {
        last_error = e.what();
        return status_of(e.kind());
    } catch (const nlohmann::json::exception& e) {
        last_error = std::string("invalid JSON: ") + e.what();
        return MLAB_ERR_CONFIG;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return MLAB_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return MLAB_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return MLAB_ERR_INTERNAL;
    }
}

mlab_status invalid(const char* what) {
    last_error = what;
    return MLAB_ERR_INVALID_ARG;
}

std::vector<mergelab::TaskVector> collect_taus(const mlab_params* pretrained, const mlab_params* const* taus,
                                               std::size_t n) {
    std::vector<mergelab::TaskVector> out;
    out.reserve(n);
    const auto fp = pretrained->value.index().fingerprint();
    for (std::size_t i = 0; i < n; ++i) {
        if (!taus[i]) mergelab::fail(mergelab::ErrorKind::Domain, "task vector " + std::to_string(i + 1) + " is null");
        out.push_back({taus[i]->value, fp, taus[i]->residual});
    }
    return out;
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* mlab_version(void) { return "0.1.0"; }

const char* mlab_last_error(void) { return last_error.c_str(); }

const char* mlab_status_name(mlab_status status) {
    switch (status) {
        case MLAB_OK: return "ok";
        case MLAB_ERR_CONFIG: return "config";
        case MLAB_ERR_DATA: return "data";
        case MLAB_ERR_NUMERIC: return "numeric";
        case MLAB_ERR_IO: return "io";
        case MLAB_ERR_STRUCTURAL: return "structural";
        case MLAB_ERR_DOMAIN: return "domain";
        case MLAB_ERR_INVALID_ARG: return "invalid_argument";
        case MLAB_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

mlab_status mlab_run_command(const char* name, const char* config_path, const char* overrides_json,
                             char** summary_json) {
    if (!name) return invalid("command name is null");
    if (summary_json) *summary_json = nullptr;
    return guarded([&] {
        auto overrides = nlohmann::json::object();
        if (overrides_json && *overrides_json) {
            try {
                overrides = nlohmann::json::parse(overrides_json);
            } catch (const nlohmann::json::parse_error& e) {
                mergelab::fail(mergelab::ErrorKind::Config, std::string("overrides are not valid JSON: ") + e.what());
            }
        }
        const auto cfg = mergelab::run::load_run_config(config_path ? config_path : "", overrides);
        const auto result = mergelab::run::run_command(name, cfg);
        if (summary_json) *summary_json = dup_string(result.summary.dump(2));
    });
}

void mlab_free_string(char* s) { std::free(s); }

mlab_status mlab_checkpoint_load(const char* path, mlab_checkpoint** out) {
    if (!path || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] { *out = new mlab_checkpoint{mergelab::nn::load_checkpoint(path)}; });
}

mlab_status mlab_checkpoint_save(const mlab_checkpoint* ckpt, const char* path) {
    if (!ckpt || !path) return invalid("null argument");
    return guarded([&] { mergelab::nn::save_checkpoint(path, ckpt->value); });
}

mlab_status mlab_checkpoint_params(const mlab_checkpoint* ckpt, mlab_params** out) {
    if (!ckpt || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] { *out = new mlab_params{ckpt->value.params}; });
}

mlab_status mlab_checkpoint_with_params(const mlab_checkpoint* like, const mlab_params* params,
                                        mlab_checkpoint** out) {
    if (!like || !params || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        mergelab::nn::require_matches(like->value.spec, params->value);
        *out = new mlab_checkpoint{{like->value.spec, like->value.seed, params->value, nlohmann::json::object()}};
    });
}

void mlab_checkpoint_free(mlab_checkpoint* ckpt) { delete ckpt; }

size_t mlab_params_size(const mlab_params* p) { return p ? p->value.size() : 0; }

mlab_status mlab_params_copy_values(const mlab_params* p, float* out, size_t n) {
    if (!p || !out) return invalid("null argument");
    if (n != p->value.size()) return invalid("output length does not match the parameter count");
    std::memcpy(out, p->value.values().data(), n * sizeof(float));
    return MLAB_OK;
}

mlab_status mlab_params_content_hash(const mlab_params* p, char out[65]) {
    if (!p || !out) return invalid("null argument");
    return guarded([&] {
        const auto h = mergelab::nn::content_hash(p->value);
        std::memcpy(out, h.c_str(), 65);
    });
}

void mlab_params_free(mlab_params* p) { delete p; }

mlab_status mlab_task_vector(const mlab_params* finetuned, const mlab_params* pretrained, mlab_params** out) {
    if (!finetuned || !pretrained || !out) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        auto tau = mergelab::merge::task_vector(finetuned->value, pretrained->value);
        *out = new mlab_params{std::move(tau.delta), std::move(tau.residual)};
    });
}

mlab_status mlab_task_arithmetic(const mlab_params* pretrained, const mlab_params* const* taus, const double* lambdas,
                                 size_t n, mlab_params** out) {
    if (!pretrained || !out || (n > 0 && (!taus || !lambdas))) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        const auto tv = collect_taus(pretrained, taus, n);
        *out = new mlab_params{mergelab::merge::task_arithmetic(pretrained->value, tv, std::span(lambdas, n))};
    });
}

mlab_status mlab_ties_merge(const mlab_params* pretrained, const mlab_params* const* taus, size_t n, double lambda,
                            double density, mlab_params** out) {
    if (!pretrained || !out || (n > 0 && !taus)) return invalid("null argument");
    *out = nullptr;
    return guarded([&] {
        const auto tv = collect_taus(pretrained, taus, n);
        *out = new mlab_params{mergelab::merge::ties_merge(pretrained->value, tv, lambda, density)};
    });
}

mlab_status mlab_rescale_coefficients(const double* distances, size_t n, double lambda, double* out) {
    if (!distances || !out) return invalid("null argument");
    return guarded([&] {
        const auto c = mergelab::se::rescale_coefficients(std::span(distances, n), n, lambda);
        std::copy(c.begin(), c.end(), out);
    });
}

mlab_status mlab_forward(const mlab_checkpoint* ckpt, const mlab_params* params, const float* x, size_t dim,
                         float* out, size_t classes) {
    if (!ckpt || !x || !out) return invalid("null argument");
    return guarded([&] {
        const auto& spec = ckpt->value.spec;
        if (dim != spec.input_dim())
            mergelab::fail(mergelab::ErrorKind::Structural, "input has " + std::to_string(dim) + " features, model expects " +
                                                                std::to_string(spec.input_dim()));
        if (classes != spec.classes())
            mergelab::fail(mergelab::ErrorKind::Structural, "output buffer does not match the class count");
        const auto& p = params ? params->value : ckpt->value.params;
        const auto logits = mergelab::nn::forward(spec, p, std::span(x, dim));
        std::copy(logits.values.begin(), logits.values.end(), out);
    });
}

}  // extern "C"
