#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mergelab {

struct TensorEntry {
    std::string name;
    std::size_t offset = 0;
    std::vector<std::size_t> shape;

    std::size_t count() const noexcept;
    bool operator==(const TensorEntry&) const = default;
};

/// Ordered name -> (offset, shape) map. Offsets are assigned contiguously in
/// insertion order, so the index always covers [0, total()) without gaps.
class TensorIndex {
public:
    /// Appends a tensor after the current end. Throws on duplicate names.
    const TensorEntry& add(std::string name, std::vector<std::size_t> shape);

    const std::vector<TensorEntry>& entries() const noexcept { return entries_; }
    const TensorEntry* find(std::string_view name) const noexcept;
    const TensorEntry& at(std::string_view name) const;
    std::size_t total() const noexcept { return total_; }
    std::size_t size() const noexcept { return entries_.size(); }

    /// SHA-256 over a canonical rendering of names, offsets and shapes.
    std::string fingerprint() const;

    /// Name of the first tensor that differs from `other`, or nullopt when equal.
    std::optional<std::string> first_difference(const TensorIndex& other) const;

    bool operator==(const TensorIndex& other) const noexcept { return entries_ == other.entries_; }

private:
    std::vector<TensorEntry> entries_;
    std::size_t total_ = 0;
};

/// Flat float32 parameter store with a named-tensor index.
class ParamVector {
public:
    ParamVector() = default;
    /// Zero-filled vector covering `index`.
    explicit ParamVector(TensorIndex index);
    /// Takes ownership of `values`; throws if the length does not match the
    /// index or any value is non-finite.
    ParamVector(TensorIndex index, std::vector<float> values);

    const TensorIndex& index() const noexcept { return index_; }
    std::span<const float> values() const noexcept { return values_; }
    std::span<float> values() noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const float> tensor(std::string_view name) const;
    std::span<float> tensor(std::string_view name);

    /// Throws a numeric error naming the first tensor holding a NaN/Inf.
    void check_finite() const;

    bool operator==(const ParamVector& other) const noexcept;

private:
    TensorIndex index_;
    std::vector<float> values_;
};

/// Throws a structural error naming the first differing tensor.
void require_same_index(const TensorIndex& a, const TensorIndex& b, std::string_view context);

/// Parameter delta relative to a base model.
struct TaskVector {
    ParamVector delta;
    std::string base_fingerprint;
    /// Exact rounding error of delta (delta + residual == finetuned - pretrained
    /// in real arithmetic). Empty when the vector was built from raw values.
    std::vector<float> residual = {};
};

/// Activation f^(l)(x) of a single sample at layer `layer`.
struct ActivationVector {
    std::vector<float> values;
    int layer = 0;

    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const ActivationVector&) const = default;
};

/// Element-wise a*x + y, computed in double and rounded once per element.
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);

}  // namespace mergelab
