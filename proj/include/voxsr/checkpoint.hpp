#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsr/errors.hpp"
#include "voxsr/networks.hpp"
#include "voxsr/volume_io.hpp"

namespace voxsr {

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
    j = {{"variant", to_string(c.variant)},
         {"base_channels", c.base_channels},
         {"num_blocks", c.num_blocks},
         {"convs_per_block", c.convs_per_block},
         {"growth_rate", c.growth_rate},
         {"out_channels", c.out_channels}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
    c.variant = encoder_variant_from_string(j.at("variant").get<std::string>());
    c.base_channels = j.at("base_channels").get<std::size_t>();
    c.num_blocks = j.at("num_blocks").get<std::size_t>();
    c.convs_per_block = j.at("convs_per_block").get<std::size_t>();
    c.growth_rate = j.at("growth_rate").get<std::size_t>();
    c.out_channels = j.at("out_channels").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const DecoderConfig& c) {
    j = {{"feature_channels", c.feature_channels}, {"hidden_width", c.hidden_width}};
}

inline void from_json(const nlohmann::json& j, DecoderConfig& c) {
    c.feature_channels = j.at("feature_channels").get<std::size_t>();
    c.hidden_width = j.at("hidden_width").get<std::size_t>();
}

// ---------------------------------------------------------------------------
// Checkpoint container: magic, u64 manifest length, manifest JSON, then one
// contiguous little-endian float32 blob per tensor in manifest order.
// ---------------------------------------------------------------------------

namespace ckpt {
constexpr char kMagic[8] = {'V', 'X', 'S', 'R', 'C', 'K', 'P', '1'};
}

inline void save_checkpoint(const SRModel<float>& m, const std::filesystem::path& path) {
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["config"] = {{"encoder", m.encoder_cfg}, {"decoder", m.decoder_cfg}};
    auto& tensors = manifest["tensors"];
    tensors = nlohmann::json::array();
    std::size_t payload = 0;
    m.for_each_param([&](const Param<float>& p) {
        tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"dtype", "f32le"}});
        payload += p.numel() * 4;
    });
    const std::string mj = manifest.dump();

    std::vector<unsigned char> out;
    out.reserve(8 + 8 + mj.size() + payload);
    out.insert(out.end(), ckpt::kMagic, ckpt::kMagic + 8);
    const auto mlen = static_cast<std::uint64_t>(mj.size());
    const auto* lp = reinterpret_cast<const unsigned char*>(&mlen);
    out.insert(out.end(), lp, lp + 8);
    out.insert(out.end(), mj.begin(), mj.end());
    m.for_each_param([&](const Param<float>& p) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
        out.insert(out.end(), bytes, bytes + p.numel() * 4);
    });
    detail::atomic_write_file(path, out.data(), out.size());
}

inline SRModel<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    f.read(magic, 8);
    if (f.gcount() != 8 || std::memcmp(magic, ckpt::kMagic, 8) != 0)
        throw MalformedCheckpoint("bad checkpoint magic: " + path.string());
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), 8);
    if (f.gcount() != 8) throw MalformedCheckpoint("truncated checkpoint: " + path.string());
    std::string mj(mlen, '\0');
    f.read(mj.data(), static_cast<std::streamsize>(mlen));
    if (static_cast<std::uint64_t>(f.gcount()) != mlen)
        throw MalformedCheckpoint("truncated manifest: " + path.string());

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mj);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedCheckpoint("unparseable manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1)
        throw MalformedCheckpoint("unsupported checkpoint version");

    EncoderConfig ec = manifest.at("config").at("encoder").get<EncoderConfig>();
    DecoderConfig dc = manifest.at("config").at("decoder").get<DecoderConfig>();
    SRModel<float> m(ec, dc);

    const auto& tensors = manifest.at("tensors");
    std::size_t idx = 0;
    m.for_each_param([&](Param<float>& p) {
        if (idx >= tensors.size())
            throw MalformedCheckpoint("manifest lists fewer tensors than the model needs");
        const auto& t = tensors[idx++];
        if (t.at("name").get<std::string>() != p.name)
            throw MalformedCheckpoint("tensor name mismatch: expected " + p.name);
        if (t.at("dtype").get<std::string>() != "f32le")
            throw MalformedCheckpoint("tensor dtype must be f32le: " + p.name);
        if (t.at("shape").get<std::vector<std::size_t>>() != p.shape)
            throw MalformedCheckpoint("tensor shape mismatch: " + p.name);
        f.read(reinterpret_cast<char*>(p.value.data()),
               static_cast<std::streamsize>(p.numel() * 4));
        if (static_cast<std::size_t>(f.gcount()) != p.numel() * 4)
            throw MalformedCheckpoint("payload missing for tensor " + p.name);
    });
    if (idx != tensors.size())
        throw MalformedCheckpoint("manifest lists tensors the model does not declare");
    char extra;
    if (f.read(&extra, 1)) throw MalformedCheckpoint("trailing bytes after payload");
    return m;
}

} // namespace voxsr
