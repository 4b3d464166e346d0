#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "core_math/param_vector.hpp"

namespace mergelab::nn {

enum class Activation { Relu, Tanh };

const char* to_string(Activation a) noexcept;
Activation activation_from_string(std::string_view name);

/// Fully-connected classifier [d_0, d_1, ..., d_L]. The activation is applied
/// to layers 1..L-1; layer L produces raw logits.
struct ModelSpec {
    std::vector<std::size_t> layer_widths;
    Activation activation = Activation::Relu;

    int layers() const noexcept { return static_cast<int>(layer_widths.size()) - 1; }
    std::size_t input_dim() const noexcept { return layer_widths.front(); }
    std::size_t classes() const noexcept { return layer_widths.back(); }
    std::size_t width(int layer) const { return layer_widths.at(static_cast<std::size_t>(layer)); }
    std::size_t parameter_count() const noexcept;

    /// Throws a domain error unless L >= 1 and every width >= 1.
    void validate() const;

    /// Tensors "layer<l>.weight" [d_l, d_{l-1}] (row-major) and "layer<l>.bias" [d_l], l = 1..L.
    TensorIndex make_index() const;

    bool operator==(const ModelSpec&) const = default;
};

struct RepresentationTrace {
    std::map<int, ActivationVector> per_layer;
    std::string sample_id;

    const ActivationVector& at(int layer) const;
};

/// Deterministic in (spec, seed): weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

/// Logits f(x; params).
ActivationVector forward(const ModelSpec& spec, const ParamVector& params, std::span<const float> x);

/// Post-activation output of `layer` (raw logits when layer == L).
ActivationVector forward_to_layer(const ModelSpec& spec, const ParamVector& params,
                                  std::span<const float> x, int layer);

/// Continues the forward pass from an activation at `from_layer` (0 = input)
/// through `to_layer`.
ActivationVector forward_range(const ModelSpec& spec, const ParamVector& params,
                               std::span<const float> h, int from_layer, int to_layer);

/// Captures exactly the requested layers, each in 1..L.
RepresentationTrace forward_traced(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const float> x, const std::set<int>& layers,
                                   std::string sample_id = {});

/// Cross-entropy gradient for one sample.
ParamVector backward(const ModelSpec& spec, const ParamVector& params, std::span<const float> x,
                     std::size_t label);

/// Adds the cross-entropy gradient of one sample into `grad` (length p) and
/// returns that sample's loss. Intermediate values are kept in double.
double accumulate_gradient(const ModelSpec& spec, const ParamVector& params, std::span<const float> x,
                           std::size_t label, std::span<double> grad);

/// Cross-entropy of one sample, using the same float forward pass as `forward`.
double cross_entropy(std::span<const float> logits, std::size_t label);

/// Index of the largest logit; the lowest index wins ties.
std::size_t argmax(std::span<const float> logits) noexcept;

/// Throws a structural error if `params` was not built for `spec`.
void require_matches(const ModelSpec& spec, const ParamVector& params);

}  // namespace mergelab::nn
