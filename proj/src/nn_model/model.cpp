#include "nn_model/model.hpp"

#include <algorithm>
#include <cmath>

#include "core_math/error.hpp"
#include "core_math/rng.hpp"

namespace mergelab::nn {

namespace {

struct LayerParams {
    std::span<const float> weight;  // [out, in]
    std::span<const float> bias;    // [out]
    std::size_t in = 0, out = 0;
};

LayerParams layer_params(const ModelSpec& spec, const ParamVector& params, int layer) {
    const auto& index = params.index();
    const auto& entries = index.entries();
    // make_index() stores weight, bias per layer in order.
    const auto& w = entries[2 * static_cast<std::size_t>(layer - 1)];
    const auto& b = entries[2 * static_cast<std::size_t>(layer - 1) + 1];
    auto values = params.values();
    return {values.subspan(w.offset, w.count()), values.subspan(b.offset, b.count()), spec.width(layer - 1),
            spec.width(layer)};
}

float activate(Activation act, double z) {
    return act == Activation::Relu ? static_cast<float>(z > 0.0 ? z : 0.0) : static_cast<float>(std::tanh(z));
}

void affine_float(const LayerParams& lp, std::span<const float> in, std::vector<float>& out, bool apply,
                  Activation act) {
    out.resize(lp.out);
    for (std::size_t o = 0; o < lp.out; ++o) {
        double acc = lp.bias[o];
        const float* row = lp.weight.data() + o * lp.in;
        for (std::size_t i = 0; i < lp.in; ++i) acc += static_cast<double>(row[i]) * static_cast<double>(in[i]);
        out[o] = apply ? activate(act, acc) : static_cast<float>(acc);
    }
}

void require_layer(const ModelSpec& spec, int layer, int lo) {
    if (layer < lo || layer > spec.layers())
        fail(ErrorKind::Domain, "layer " + std::to_string(layer) + " outside [" + std::to_string(lo) + ", " +
                                    std::to_string(spec.layers()) + "]");
}

}  // namespace

const char* to_string(Activation a) noexcept { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(std::string_view name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    fail(ErrorKind::Config, "unknown activation '" + std::string(name) + "' (expected relu or tanh)");
}

std::size_t ModelSpec::parameter_count() const noexcept {
    std::size_t p = 0;
    for (std::size_t l = 1; l < layer_widths.size(); ++l) p += layer_widths[l - 1] * layer_widths[l] + layer_widths[l];
    return p;
}

void ModelSpec::validate() const {
    if (layer_widths.size() < 2) fail(ErrorKind::Domain, "model spec needs at least an input and an output width");
    for (std::size_t w : layer_widths)
        if (w == 0) fail(ErrorKind::Domain, "model spec widths must be >= 1");
}

TensorIndex ModelSpec::make_index() const {
    validate();
    TensorIndex index;
    for (int l = 1; l <= layers(); ++l) {
        index.add("layer" + std::to_string(l) + ".weight", {width(l), width(l - 1)});
        index.add("layer" + std::to_string(l) + ".bias", {width(l)});
    }
    return index;
}

const ActivationVector& RepresentationTrace::at(int layer) const {
    auto it = per_layer.find(layer);
    if (it == per_layer.end()) fail(ErrorKind::Domain, "trace has no layer " + std::to_string(layer));
    return it->second;
}

void require_matches(const ModelSpec& spec, const ParamVector& params) {
    require_same_index(spec.make_index(), params.index(), "model parameters");
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    ParamVector params(spec.make_index());
    CounterRng rng(seed, /*stream=*/0x1417);
    for (int l = 1; l <= spec.layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.width(l - 1)));
        for (float& w : params.tensor("layer" + std::to_string(l) + ".weight"))
            w = static_cast<float>(rng.uniform(-bound, bound));
    }
    return params;
}

ActivationVector forward_range(const ModelSpec& spec, const ParamVector& params, std::span<const float> h,
                               int from_layer, int to_layer) {
    require_layer(spec, from_layer, 0);
    require_layer(spec, to_layer, from_layer);
    if (h.size() != spec.width(from_layer))
        fail(ErrorKind::Structural, "input has length " + std::to_string(h.size()) + ", layer " +
                                        std::to_string(from_layer) + " expects " +
                                        std::to_string(spec.width(from_layer)));
    std::vector<float> cur(h.begin(), h.end()), next;
    for (int l = from_layer + 1; l <= to_layer; ++l) {
        affine_float(layer_params(spec, params, l), cur, next, l < spec.layers(), spec.activation);
        cur.swap(next);
    }
    return {std::move(cur), to_layer};
}

ActivationVector forward_to_layer(const ModelSpec& spec, const ParamVector& params, std::span<const float> x,
                                  int layer) {
    require_matches(spec, params);
    return forward_range(spec, params, x, 0, layer);
}

ActivationVector forward(const ModelSpec& spec, const ParamVector& params, std::span<const float> x) {
    return forward_to_layer(spec, params, x, spec.layers());
}

RepresentationTrace forward_traced(const ModelSpec& spec, const ParamVector& params, std::span<const float> x,
                                   const std::set<int>& layers, std::string sample_id) {
    require_matches(spec, params);
    for (int l : layers) require_layer(spec, l, 1);
    if (x.size() != spec.input_dim())
        fail(ErrorKind::Structural, "input has length " + std::to_string(x.size()) + ", model expects " +
                                        std::to_string(spec.input_dim()));
    RepresentationTrace trace;
    trace.sample_id = std::move(sample_id);
    if (layers.empty()) return trace;
    const int last = *layers.rbegin();
    std::vector<float> cur(x.begin(), x.end()), next;
    for (int l = 1; l <= last; ++l) {
        affine_float(layer_params(spec, params, l), cur, next, l < spec.layers(), spec.activation);
        cur.swap(next);
        if (layers.contains(l)) trace.per_layer.emplace(l, ActivationVector{cur, l});
    }
    return trace;
}

double accumulate_gradient(const ModelSpec& spec, const ParamVector& params, std::span<const float> x,
                           std::size_t label, std::span<double> grad) {
    const int L = spec.layers();
    if (label >= spec.classes())
        fail(ErrorKind::Domain, "label " + std::to_string(label) + " outside [0, " + std::to_string(spec.classes()) + ")");
    if (x.size() != spec.input_dim())
        fail(ErrorKind::Structural, "input has length " + std::to_string(x.size()) + ", model expects " +
                                        std::to_string(spec.input_dim()));
    if (grad.size() != params.size()) fail(ErrorKind::Structural, "gradient buffer length mismatch");

    // acts[l] is the output of layer l (acts[0] = x); pre-activations are not
    // needed because both derivatives are expressible from the output.
    std::vector<std::vector<double>> acts(static_cast<std::size_t>(L) + 1);
    acts[0].assign(x.begin(), x.end());
    for (int l = 1; l <= L; ++l) {
        const auto lp = layer_params(spec, params, l);
        auto& out = acts[static_cast<std::size_t>(l)];
        const auto& in = acts[static_cast<std::size_t>(l) - 1];
        out.assign(lp.out, 0.0);
        for (std::size_t o = 0; o < lp.out; ++o) {
            double z = lp.bias[o];
            for (std::size_t i = 0; i < lp.in; ++i) z += static_cast<double>(lp.weight[o * lp.in + i]) * in[i];
            if (l < L) z = spec.activation == Activation::Relu ? std::max(z, 0.0) : std::tanh(z);
            out[o] = z;
        }
    }

    // Softmax cross-entropy on the logits.
    auto& logits = acts[static_cast<std::size_t>(L)];
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double loss = std::log(sum) + zmax - logits[label];
    std::vector<double> delta(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) delta[k] = std::exp(logits[k] - zmax) / sum;
    delta[label] -= 1.0;

    const auto& entries = params.index().entries();
    std::vector<double> prev;
    for (int l = L; l >= 1; --l) {
        const auto lp = layer_params(spec, params, l);
        const auto& in = acts[static_cast<std::size_t>(l) - 1];
        double* gw = grad.data() + entries[2 * static_cast<std::size_t>(l - 1)].offset;
        double* gb = grad.data() + entries[2 * static_cast<std::size_t>(l - 1) + 1].offset;
        for (std::size_t o = 0; o < lp.out; ++o) {
            gb[o] += delta[o];
            for (std::size_t i = 0; i < lp.in; ++i) gw[o * lp.in + i] += delta[o] * in[i];
        }
        if (l == 1) break;
        prev.assign(lp.in, 0.0);
        for (std::size_t o = 0; o < lp.out; ++o)
            for (std::size_t i = 0; i < lp.in; ++i) prev[i] += static_cast<double>(lp.weight[o * lp.in + i]) * delta[o];
        for (std::size_t i = 0; i < lp.in; ++i) {
            const double h = in[i];
            prev[i] *= spec.activation == Activation::Relu ? (h > 0.0 ? 1.0 : 0.0) : 1.0 - h * h;
        }
        delta.swap(prev);
    }
    return loss;
}

ParamVector backward(const ModelSpec& spec, const ParamVector& params, std::span<const float> x, std::size_t label) {
    require_matches(spec, params);
    std::vector<double> grad(params.size(), 0.0);
    accumulate_gradient(spec, params, x, label, grad);
    std::vector<float> values(grad.begin(), grad.end());
    return ParamVector(params.index(), std::move(values));
}

double cross_entropy(std::span<const float> logits, std::size_t label) {
    if (label >= logits.size()) fail(ErrorKind::Domain, "label outside logit range");
    double zmax = logits[0];
    for (float z : logits) zmax = std::max(zmax, static_cast<double>(z));
    double sum = 0.0;
    for (float z : logits) sum += std::exp(static_cast<double>(z) - zmax);
    return std::log(sum) + zmax - static_cast<double>(logits[label]);
}

std::size_t argmax(std::span<const float> logits) noexcept {
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = k;
    return best;
}

}  // namespace mergelab::nn
