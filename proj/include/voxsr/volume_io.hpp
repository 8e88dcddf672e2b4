#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "voxsr/errors.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

static_assert(std::endian::native == std::endian::little,
              "volume_io assumes a little-endian host");

enum class VolumeFormat { nifti1, vvol };

namespace detail {

inline std::string temp_sibling(const std::filesystem::path& p) {
    return p.string() + ".tmp-" + std::to_string(::getpid());
}

/// Write bytes to a sibling temp file, then rename into place.
inline void atomic_write_file(const std::filesystem::path& path, const void* bytes,
                              std::size_t n) {
    const std::filesystem::path tmp = temp_sibling(path);
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + tmp.string());
        f.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
        if (!f) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("short write: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename into place: " + path.string());
    }
}

template <class T>
T read_le(const unsigned char* p) {
    T x;
    std::memcpy(&x, p, sizeof(T));
    return x;
}

template <class T>
void write_le(unsigned char* p, T x) {
    std::memcpy(p, &x, sizeof(T));
}

} // namespace detail

// ---------------------------------------------------------------------------
// NIfTI-1, uncompressed single-file .nii. Little-endian, datatypes
// uint8/int16/float32, geometry taken from pixdim only. dim[i+1] carries
// shape[i] and the payload is the volume's C-order buffer.
// ---------------------------------------------------------------------------

namespace nifti {

constexpr std::size_t kHeaderSize = 348;
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

inline Volume read(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    std::vector<unsigned char> hdr(kHeaderSize);
    f.read(reinterpret_cast<char*>(hdr.data()), kHeaderSize);
    if (static_cast<std::size_t>(f.gcount()) != kHeaderSize)
        throw MalformedHeader("file shorter than the 348-byte header: " + path.string());

    const auto sizeof_hdr = detail::read_le<std::int32_t>(&hdr[0]);
    if (sizeof_hdr != 348) {
        if (sizeof_hdr == 0x5c010000)
            throw MalformedHeader("big-endian file not supported: " + path.string());
        throw MalformedHeader("sizeof_hdr != 348: " + path.string());
    }
    const char* magic = reinterpret_cast<const char*>(&hdr[344]);
    if (std::memcmp(magic, "n+1\0", 4) != 0)
        throw MalformedHeader("bad magic (only single-file n+1 supported): " + path.string());

    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = detail::read_le<std::int16_t>(&hdr[40 + 2 * i]);
    if (dim[0] < 3) throw ShapeError("not a 3D image (dim[0] < 3): " + path.string());
    for (int i = 4; i <= dim[0] && i < 8; ++i)
        if (dim[i] > 1) throw ShapeError("not a 3D image (extra dimensions): " + path.string());
    if (dim[1] < 1 || dim[2] < 1 || dim[3] < 1)
        throw ShapeError("non-positive dimension: " + path.string());

    const auto datatype = detail::read_le<std::int16_t>(&hdr[70]);
    const auto vox_offset = detail::read_le<float>(&hdr[108]);
    const auto scl_slope = detail::read_le<float>(&hdr[112]);
    const auto scl_inter = detail::read_le<float>(&hdr[116]);
    if (vox_offset < static_cast<float>(kHeaderSize))
        throw MalformedHeader("vox_offset before end of header: " + path.string());

    Volume v(static_cast<std::size_t>(dim[1]), static_cast<std::size_t>(dim[2]),
             static_cast<std::size_t>(dim[3]));
    for (int a = 0; a < 3; ++a) {
        const float pd = detail::read_le<float>(&hdr[76 + 4 * (a + 1)]);
        v.voxel_size_mm[a] = pd > 0.0f ? static_cast<double>(pd) : 1.0;
    }

    const std::size_t n = v.numel();
    f.seekg(static_cast<std::streamoff>(vox_offset));
    auto read_payload = [&](auto* dst, std::size_t bytes) {
        f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
        if (static_cast<std::size_t>(f.gcount()) != bytes)
            throw IoError("truncated voxel payload: " + path.string());
    };
    switch (datatype) {
        case kDtFloat32:
            read_payload(v.data.data(), n * 4);
            break;
        case kDtInt16: {
            std::vector<std::int16_t> raw(n);
            read_payload(raw.data(), n * 2);
            for (std::size_t i = 0; i < n; ++i) v.data[i] = static_cast<float>(raw[i]);
            break;
        }
        case kDtUint8: {
            std::vector<std::uint8_t> raw(n);
            read_payload(raw.data(), n);
            for (std::size_t i = 0; i < n; ++i) v.data[i] = static_cast<float>(raw[i]);
            break;
        }
        default:
            throw MalformedHeader("unsupported datatype code " + std::to_string(datatype) +
                                  ": " + path.string());
    }
    if (scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f))
        for (float& x : v.data) x = x * scl_slope + scl_inter;
    if (!v.finite()) throw NumericalError("non-finite intensities in " + path.string());
    v.update_range();
    return v;
}

inline void write(const Volume& v, const std::filesystem::path& path) {
    v.require_valid("nifti::write");
    std::vector<unsigned char> out(352 + v.numel() * 4, 0);
    detail::write_le<std::int32_t>(&out[0], 348);
    detail::write_le<std::int16_t>(&out[40], 3); // dim[0]
    for (int a = 0; a < 3; ++a)
        detail::write_le<std::int16_t>(&out[40 + 2 * (a + 1)],
                                       static_cast<std::int16_t>(v.shape[a]));
    for (int i = 4; i < 8; ++i) detail::write_le<std::int16_t>(&out[40 + 2 * i], 1);
    detail::write_le<std::int16_t>(&out[70], kDtFloat32);
    detail::write_le<std::int16_t>(&out[72], 32); // bitpix
    detail::write_le<float>(&out[76], 1.0f);      // pixdim[0] (qfac)
    for (int a = 0; a < 3; ++a)
        detail::write_le<float>(&out[76 + 4 * (a + 1)], static_cast<float>(v.voxel_size_mm[a]));
    detail::write_le<float>(&out[108], 352.0f); // vox_offset
    detail::write_le<float>(&out[112], 1.0f);   // scl_slope
    detail::write_le<float>(&out[116], 0.0f);   // scl_inter
    std::memcpy(&out[344], "n+1\0", 4);
    // bytes 348..351 stay zero: no header extensions
    std::memcpy(&out[352], v.data.data(), v.numel() * 4);
    detail::atomic_write_file(path, out.data(), out.size());
}

} // namespace nifti

// ---------------------------------------------------------------------------
// vvol: a directory holding header.json + data.raw (little-endian float32,
// C order). The dependency-free fixture format; round trips are bit exact.
// ---------------------------------------------------------------------------

namespace vvol {

inline Volume read(const std::filesystem::path& dir) {
    const auto header_path = dir / "header.json";
    std::ifstream hf(header_path);
    if (!hf) throw IoError("cannot open: " + header_path.string());
    nlohmann::json j;
    try {
        hf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedHeader("invalid header.json: " + std::string(e.what()));
    }
    if (!j.contains("shape") || !j["shape"].is_array() || j["shape"].size() != 3)
        throw MalformedHeader("header.json: shape must be a 3-array");
    if (j.value("dtype", "") != "f32le")
        throw MalformedHeader("header.json: dtype must be f32le");
    if (j.value("order", "") != "C") throw MalformedHeader("header.json: order must be C");

    Volume v;
    for (int a = 0; a < 3; ++a) {
        const auto s = j["shape"][a].get<std::int64_t>();
        if (s < 1) throw ShapeError("header.json: shape components must be >= 1");
        v.shape[a] = static_cast<std::size_t>(s);
    }
    if (j.contains("voxel_size_mm")) {
        if (!j["voxel_size_mm"].is_array() || j["voxel_size_mm"].size() != 3)
            throw MalformedHeader("header.json: voxel_size_mm must be a 3-array");
        for (int a = 0; a < 3; ++a) {
            v.voxel_size_mm[a] = j["voxel_size_mm"][a].get<double>();
            if (!(v.voxel_size_mm[a] > 0))
                throw MalformedHeader("header.json: voxel_size_mm must be positive");
        }
    }
    v.data.resize(v.numel());

    const auto data_path = dir / "data.raw";
    std::ifstream df(data_path, std::ios::binary);
    if (!df) throw IoError("cannot open: " + data_path.string());
    df.read(reinterpret_cast<char*>(v.data.data()),
            static_cast<std::streamsize>(v.numel() * 4));
    if (static_cast<std::size_t>(df.gcount()) != v.numel() * 4)
        throw IoError("data.raw shorter than header declares: " + data_path.string());
    char extra;
    if (df.read(&extra, 1))
        throw MalformedHeader("data.raw longer than header declares: " + data_path.string());
    if (!v.finite()) throw NumericalError("non-finite intensities in " + data_path.string());
    v.update_range();
    return v;
}

inline void write(const Volume& v, const std::filesystem::path& dir) {
    v.require_valid("vvol::write");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    nlohmann::json j;
    j["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
    j["voxel_size_mm"] = {v.voxel_size_mm[0], v.voxel_size_mm[1], v.voxel_size_mm[2]};
    j["dtype"] = "f32le";
    j["order"] = "C";
    const std::string header = j.dump(2) + "\n";
    detail::atomic_write_file(dir / "data.raw", v.data.data(), v.numel() * 4);
    detail::atomic_write_file(dir / "header.json", header.data(), header.size());
}

} // namespace vvol

inline Volume read_volume(const std::filesystem::path& path, VolumeFormat format) {
    return format == VolumeFormat::nifti1 ? nifti::read(path) : vvol::read(path);
}

inline void write_volume(const Volume& v, const std::filesystem::path& path,
                         VolumeFormat format) {
    if (format == VolumeFormat::nifti1)
        nifti::write(v, path);
    else
        vvol::write(v, path);
}

/// .nii files are NIfTI-1; anything else (notably directories) is vvol.
inline VolumeFormat guess_format(const std::filesystem::path& path) {
    return path.extension() == ".nii" ? VolumeFormat::nifti1 : VolumeFormat::vvol;
}

} // namespace voxsr
