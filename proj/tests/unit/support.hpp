#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core_math/param_vector.hpp"
#include "core_math/rng.hpp"
#include "nn_model/model.hpp"
#include "task_suite/task_suite.hpp"

namespace testing {

inline mergelab::ParamVector random_params(const mergelab::nn::ModelSpec& spec, std::uint64_t seed,
                                           double scale = 1.0) {
    mergelab::ParamVector p(spec.make_index());
    mergelab::CounterRng rng(seed, 77);
    for (auto& v : p.values()) v = static_cast<float>(rng.uniform(-scale, scale));
    return p;
}

inline std::vector<float> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    mergelab::CounterRng rng(seed, 78);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-scale, scale));
    return v;
}

/// Params with the same index as `like` holding `values`.
inline mergelab::ParamVector with_values(const mergelab::ParamVector& like, std::vector<float> values) {
    return mergelab::ParamVector(like.index(), std::move(values));
}

/// One-tensor parameter vector "w" of the given values.
inline mergelab::ParamVector flat(std::vector<float> values) {
    mergelab::TensorIndex idx;
    idx.add("w", {values.size()});
    return mergelab::ParamVector(std::move(idx), std::move(values));
}

/// Straight-line reference forward pass: affine maps written out as loops
/// over the raw value array, independent of the library's layer code.
inline std::vector<std::vector<double>> reference_layers(const mergelab::nn::ModelSpec& spec,
                                                         const mergelab::ParamVector& params,
                                                         std::span<const float> x) {
    std::vector<std::vector<double>> out;
    std::vector<double> h(x.begin(), x.end());
    const auto vals = params.values();
    std::size_t off = 0;
    for (int l = 1; l <= spec.layers(); ++l) {
        const std::size_t in = spec.width(l - 1), outw = spec.width(l);
        std::vector<double> z(outw);
        for (std::size_t r = 0; r < outw; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < in; ++c) s += double(vals[off + r * in + c]) * h[c];
            z[r] = s;
        }
        off += in * outw;
        for (std::size_t r = 0; r < outw; ++r) z[r] += vals[off + r];
        off += outw;
        if (l < spec.layers())
            for (auto& v : z)
                v = spec.activation == mergelab::nn::Activation::Relu ? std::max(0.0, v) : std::tanh(v);
        out.push_back(z);
        h = z;
    }
    return out;
}

/// Small, quick suite for tests that need real data.
inline mergelab::data::SuiteConfig small_suite(std::size_t tasks = 2, std::size_t dim = 8, std::uint64_t seed = 3) {
    auto c = mergelab::data::SuiteConfig::default_suite(seed);
    c.tasks = tasks;
    c.dim = dim;
    c.n_train = 128;
    c.n_test = 64;
    return c;
}

/// Fresh directory under the current working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
