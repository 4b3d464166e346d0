#pragma once

#include <span>
#include <vector>

#include "core_math/param_vector.hpp"

namespace mergelab {

// Distances accumulate in double. All of them throw a structural error on a
// length mismatch.
double l2_distance(std::span<const float> a, std::span<const float> b);
double l1_distance(std::span<const float> a, std::span<const float> b);
/// 1 - cos(a, b), clamped to [0, 2]. Throws a domain error on a zero-norm input.
double cosine_distance(std::span<const float> a, std::span<const float> b);

double l2_distance(const ActivationVector& a, const ActivationVector& b);
double l1_distance(const ActivationVector& a, const ActivationVector& b);
double cosine_distance(const ActivationVector& a, const ActivationVector& b);

enum class DistanceMetric { L2, Cosine };

double distance(DistanceMetric metric, std::span<const float> a, std::span<const float> b);

/// (v - min) / (max - min). A constant input maps to all ones so that the
/// downstream softmax is uniform.
std::vector<double> minmax_normalize(std::span<const double> v);

/// Max-subtracted softmax. Throws a domain error on empty or non-finite input.
std::vector<double> softmax(std::span<const double> v);

}  // namespace mergelab
