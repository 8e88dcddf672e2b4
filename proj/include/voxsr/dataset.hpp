#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsr/errors.hpp"
#include "voxsr/patches.hpp"
#include "voxsr/volume_io.hpp"

namespace voxsr {

/// Write a patch-pair set as vvol directories plus an index.json manifest
/// listing (lr_path, hr_path, effective_scale) relative to `dir`.
inline std::filesystem::path write_pairs_dataset(const std::filesystem::path& dir,
                                                 const std::vector<PatchPair>& pairs,
                                                 std::size_t start_index = 0,
                                                 const nlohmann::json& extra_meta = {}) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    nlohmann::json index;
    const auto index_path = dir / "index.json";
    if (std::filesystem::exists(index_path)) {
        std::ifstream f(index_path);
        f >> index;
    } else {
        index["pairs"] = nlohmann::json::array();
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const std::string stem = "pair" + std::to_string(start_index + i);
        const std::string lr_rel = stem + ".lr.vvol";
        const std::string hr_rel = stem + ".hr.vvol";
        vvol::write(pairs[i].lr, dir / lr_rel);
        vvol::write(pairs[i].hr, dir / hr_rel);
        index["pairs"].push_back({{"lr_path", lr_rel},
                                  {"hr_path", hr_rel},
                                  {"effective_scale", pairs[i].effective_scale}});
    }
    if (!extra_meta.is_null() && !extra_meta.empty())
        for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it)
            index[it.key()] = it.value();
    const std::string s = index.dump(2) + "\n";
    detail::atomic_write_file(index_path, s.data(), s.size());
    return index_path;
}

inline std::vector<PatchPair> load_pairs_dataset(const std::filesystem::path& index_path) {
    std::ifstream f(index_path);
    if (!f) throw IoError("cannot open pair index: " + index_path.string());
    nlohmann::json index;
    try {
        f >> index;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeader("invalid index.json: " + std::string(e.what()));
    }
    if (!index.contains("pairs") || !index["pairs"].is_array())
        throw MalformedHeader("index.json: missing pairs array");
    const auto base = index_path.parent_path();
    std::vector<PatchPair> pairs;
    pairs.reserve(index["pairs"].size());
    for (const auto& e : index["pairs"]) {
        PatchPair p;
        p.lr = vvol::read(base / e.at("lr_path").get<std::string>());
        p.hr = vvol::read(base / e.at("hr_path").get<std::string>());
        p.effective_scale = e.at("effective_scale").get<double>();
        pairs.push_back(std::move(p));
    }
    return pairs;
}

} // namespace voxsr
