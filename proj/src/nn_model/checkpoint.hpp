#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "core_math/param_vector.hpp"
#include "nn_model/model.hpp"

namespace mergelab::nn {

// Checkpoint container layout (all integers little-endian):
//
//   "MLCK"          4-byte magic
//   u32             format version (1)
//   u64             manifest length in bytes
//   manifest        UTF-8 JSON: spec, seed, tensors (name/shape/offset),
//                   parameter_count, content_hash, provenance
//   payload         parameter_count float32 values in index order
//
// content_hash is the SHA-256 of the payload bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelSpec spec;
    std::uint64_t seed = 0;
    ParamVector params;
    nlohmann::json provenance = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 of the little-endian float32 payload.
std::string content_hash(const ParamVector& params);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

}  // namespace mergelab::nn
