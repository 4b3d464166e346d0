#include "core_math/param_vector.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "core_math/error.hpp"
#include "core_math/hash.hpp"

namespace mergelab {

std::size_t TensorEntry::count() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

const TensorEntry& TensorIndex::add(std::string name, std::vector<std::size_t> shape) {
    if (find(name) != nullptr) fail(ErrorKind::Structural, "duplicate tensor name '" + name + "'");
    TensorEntry entry{std::move(name), total_, std::move(shape)};
    total_ += entry.count();
    entries_.push_back(std::move(entry));
    return entries_.back();
}

const TensorEntry* TensorIndex::find(std::string_view name) const noexcept {
    for (const auto& e : entries_)
        if (e.name == name) return &e;
    return nullptr;
}

const TensorEntry& TensorIndex::at(std::string_view name) const {
    if (const auto* e = find(name)) return *e;
    fail(ErrorKind::Structural, "no tensor named '" + std::string(name) + "'");
}

std::string TensorIndex::fingerprint() const {
    std::string canon;
    for (const auto& e : entries_) {
        canon += e.name;
        canon += '@';
        canon += std::to_string(e.offset);
        canon += '[';
        for (std::size_t i = 0; i < e.shape.size(); ++i) {
            if (i) canon += ',';
            canon += std::to_string(e.shape[i]);
        }
        canon += "];";
    }
    return sha256_hex(canon);
}

std::optional<std::string> TensorIndex::first_difference(const TensorIndex& other) const {
    const std::size_t n = std::min(entries_.size(), other.entries_.size());
    for (std::size_t i = 0; i < n; ++i)
        if (!(entries_[i] == other.entries_[i])) return entries_[i].name;
    if (entries_.size() > n) return entries_[n].name;
    if (other.entries_.size() > n) return other.entries_[n].name;
    return std::nullopt;
}

void require_same_index(const TensorIndex& a, const TensorIndex& b, std::string_view context) {
    if (auto diff = a.first_difference(b))
        fail(ErrorKind::Structural,
             std::string(context) + ": parameter index mismatch at tensor '" + *diff + "'");
}

ParamVector::ParamVector(TensorIndex index) : index_(std::move(index)), values_(index_.total(), 0.0f) {}

ParamVector::ParamVector(TensorIndex index, std::vector<float> values)
    : index_(std::move(index)), values_(std::move(values)) {
    if (values_.size() != index_.total())
        fail(ErrorKind::Structural, "parameter vector has " + std::to_string(values_.size()) +
                                        " values but index covers " + std::to_string(index_.total()));
    check_finite();
}

std::span<const float> ParamVector::tensor(std::string_view name) const {
    const auto& e = index_.at(name);
    return std::span<const float>(values_).subspan(e.offset, e.count());
}

std::span<float> ParamVector::tensor(std::string_view name) {
    const auto& e = index_.at(name);
    return std::span<float>(values_).subspan(e.offset, e.count());
}

void ParamVector::check_finite() const {
    for (const auto& e : index_.entries())
        for (std::size_t i = e.offset; i < e.offset + e.count(); ++i)
            if (!std::isfinite(values_[i]))
                fail(ErrorKind::Numeric, "non-finite value in tensor '" + e.name + "'");
}

bool ParamVector::operator==(const ParamVector& other) const noexcept {
    // Bitwise comparison, so +0/-0 and payload differences count.
    return index_ == other.index_ && values_.size() == other.values_.size() &&
           std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(float)) == 0;
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
    require_same_index(x.index(), y.index(), "axpy");
    ParamVector out(y);
    auto xs = x.values();
    auto os = out.values();
    for (std::size_t i = 0; i < os.size(); ++i)
        os[i] = static_cast<float>(a * static_cast<double>(xs[i]) + static_cast<double>(os[i]));
    return out;
}

}  // namespace mergelab
