#include "core_math/vector_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "core_math/error.hpp"

namespace mergelab {

namespace {

void require_same_length(std::span<const float> a, std::span<const float> b, const char* op) {
    if (a.size() != b.size())
        fail(ErrorKind::Structural, std::string(op) + ": length mismatch (" + std::to_string(a.size()) +
                                        " vs " + std::to_string(b.size()) + ")");
}

}  // namespace

double l2_distance(std::span<const float> a, std::span<const float> b) {
    require_same_length(a, b, "l2_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double l1_distance(std::span<const float> a, std::span<const float> b) {
    require_same_length(a, b, "l1_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    return acc;
}

double cosine_distance(std::span<const float> a, std::span<const float> b) {
    require_same_length(a, b, "cosine_distance");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i], y = b[i];
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) fail(ErrorKind::Domain, "cosine_distance: zero-norm vector");
    const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(1.0 - cos, 0.0, 2.0);
}

double l2_distance(const ActivationVector& a, const ActivationVector& b) { return l2_distance(a.values, b.values); }
double l1_distance(const ActivationVector& a, const ActivationVector& b) { return l1_distance(a.values, b.values); }
double cosine_distance(const ActivationVector& a, const ActivationVector& b) {
    return cosine_distance(a.values, b.values);
}

double distance(DistanceMetric metric, std::span<const float> a, std::span<const float> b) {
    return metric == DistanceMetric::Cosine ? cosine_distance(a, b) : l2_distance(a, b);
}

std::vector<double> minmax_normalize(std::span<const double> v) {
    if (v.empty()) fail(ErrorKind::Domain, "minmax_normalize: empty input");
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double min = *lo, max = *hi;
    std::vector<double> out(v.size(), 1.0);
    if (max == min) return out;
    const double range = max - min;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - min) / range;
    return out;
}

std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) fail(ErrorKind::Domain, "softmax: empty input");
    for (double x : v)
        if (!std::isfinite(x)) fail(ErrorKind::Domain, "softmax: non-finite input");
    const double max = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - max);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

}  // namespace mergelab
