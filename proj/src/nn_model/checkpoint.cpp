#include "nn_model/checkpoint.hpp"

#include "core_math/error.hpp"
#include "core_math/hash.hpp"
#include "core_math/io_util.hpp"

namespace mergelab::nn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'L', 'C', 'K'};
constexpr std::size_t kHeaderBytes = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);

[[noreturn]] void corrupt(const std::string& origin, const std::string& why) {
    fail(ErrorKind::Data, "checkpoint '" + origin + "': " + why);
}

}  // namespace

json spec_to_json(const ModelSpec& spec) {
    return {{"layer_widths", spec.layer_widths}, {"activation", to_string(spec.activation)}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec spec;
    spec.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    spec.activation = activation_from_string(j.at("activation").get<std::string>());
    spec.validate();
    return spec;
}

std::string content_hash(const ParamVector& params) {
    const auto bytes = as_chars(params.values());
    return sha256_hex(bytes);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    require_matches(ckpt.spec, ckpt.params);
    json tensors = json::array();
    for (const auto& e : ckpt.params.index().entries())
        tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
    json manifest = {
        {"format", "mergelab-checkpoint"},
        {"spec", spec_to_json(ckpt.spec)},
        {"seed", ckpt.seed},
        {"tensors", std::move(tensors)},
        {"parameter_count", ckpt.params.size()},
        {"content_hash", content_hash(ckpt.params)},
        {"provenance", ckpt.provenance},
    };
    const std::string text = manifest.dump();
    const auto payload = as_chars(ckpt.params.values());

    std::string out;
    out.reserve(kHeaderBytes + text.size() + payload.size());
    out.append(kMagic, 4);
    append_pod(out, kCheckpointVersion);
    append_pod(out, static_cast<std::uint64_t>(text.size()));
    out += text;
    out += payload;
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& origin) {
    if (bytes.size() < kHeaderBytes || bytes.substr(0, 4) != std::string_view(kMagic, 4))
        corrupt(origin, "not a mergelab checkpoint (bad magic)");
    const auto version = read_pod<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion) corrupt(origin, "unsupported format version " + std::to_string(version));
    const auto manifest_len = read_pod<std::uint64_t>(bytes, 8);
    if (manifest_len > bytes.size() - kHeaderBytes) corrupt(origin, "truncated manifest");

    json manifest;
    try {
        manifest = json::parse(bytes.substr(kHeaderBytes, manifest_len));
    } catch (const json::exception& e) {
        corrupt(origin, std::string("manifest is not valid JSON: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        ckpt.spec = spec_from_json(manifest.at("spec"));
        ckpt.seed = manifest.at("seed").get<std::uint64_t>();
        ckpt.provenance = manifest.value("provenance", json::object());

        TensorIndex index;
        for (const auto& t : manifest.at("tensors")) {
            const auto& e = index.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>());
            if (e.offset != t.at("offset").get<std::size_t>()) corrupt(origin, "non-contiguous offset for " + e.name);
        }
        require_same_index(ckpt.spec.make_index(), index, "checkpoint '" + origin + "'");

        const auto count = manifest.at("parameter_count").get<std::size_t>();
        if (count != index.total()) corrupt(origin, "parameter_count disagrees with tensor index");
        const std::size_t payload_at = kHeaderBytes + manifest_len;
        if (bytes.size() - payload_at != count * sizeof(float))
            corrupt(origin, "payload holds " + std::to_string(bytes.size() - payload_at) + " bytes, expected " +
                                std::to_string(count * sizeof(float)));
        std::vector<float> values(count);
        std::memcpy(values.data(), bytes.data() + payload_at, count * sizeof(float));
        ckpt.params = ParamVector(std::move(index), std::move(values));
    } catch (const json::exception& e) {
        corrupt(origin, std::string("malformed manifest: ") + e.what());
    }
    if (content_hash(ckpt.params) != manifest.at("content_hash").get<std::string>())
        corrupt(origin, "content hash mismatch");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path), path.string());
}

}  // namespace mergelab::nn
