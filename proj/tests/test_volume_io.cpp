#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "voxsr/rng.hpp"
#include "voxsr/volume_io.hpp"

namespace fs = std::filesystem;
using voxsr::Volume;

namespace {

fs::path temp_dir() {
    auto p = fs::temp_directory_path() /
             ("voxsr_io_test_" + std::to_string(::getpid()) + "_" +
              std::to_string(reinterpret_cast<std::uintptr_t>(&temp_dir) & 0xffff));
    fs::create_directories(p);
    return p;
}

Volume random_volume(std::size_t d, std::size_t h, std::size_t w, std::uint64_t seed) {
    Volume v(d, h, w, 0.5, 1.25, 2.0);
    voxsr::Rng rng(seed);
    for (float& x : v.data) x = static_cast<float>(rng.uniform01());
    v.update_range();
    return v;
}

} // namespace

TEST_CASE("nifti round trip is bit exact", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(3, 4, 5, 42);
    const auto path = dir / "rt.nii";
    voxsr::nifti::write(v, path);
    Volume r = voxsr::nifti::read(path);
    CHECK(r.shape == v.shape);
    CHECK(r.data == v.data);
    CHECK(r.voxel_size_mm == v.voxel_size_mm);
    fs::remove_all(dir);
}

TEST_CASE("nifti header carries dim = [3, d, h, w, 1...]", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(3, 4, 5, 1);
    const auto path = dir / "dims.nii";
    voxsr::nifti::write(v, path);
    std::ifstream f(path, std::ios::binary);
    unsigned char hdr[348];
    f.read(reinterpret_cast<char*>(hdr), 348);
    std::int16_t dim[8];
    std::memcpy(dim, hdr + 40, sizeof(dim));
    CHECK(dim[0] == 3);
    CHECK(dim[1] == 3);
    CHECK(dim[2] == 4);
    CHECK(dim[3] == 5);
    for (int i = 4; i < 8; ++i) CHECK(dim[i] == 1);
    std::int16_t datatype;
    std::memcpy(&datatype, hdr + 70, 2);
    CHECK(datatype == 16);
    CHECK(std::memcmp(hdr + 344, "n+1\0", 4) == 0);
    fs::remove_all(dir);
}

TEST_CASE("nifti reader accepts float32 files with scl scaling", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(4, 4, 4, 9);
    const auto path = dir / "scl.nii";
    voxsr::nifti::write(v, path);
    // patch scl_slope=2, scl_inter=1
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        const float slope = 2.0f, inter = 1.0f;
        f.seekp(112);
        f.write(reinterpret_cast<const char*>(&slope), 4);
        f.write(reinterpret_cast<const char*>(&inter), 4);
    }
    Volume r = voxsr::nifti::read(path);
    for (std::size_t i = 0; i < v.numel(); ++i)
        CHECK(r.data[i] == v.data[i] * 2.0f + 1.0f);
    fs::remove_all(dir);
}

TEST_CASE("nifti reader rejects unsupported datatype 64", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(4, 4, 4, 10);
    const auto path = dir / "f64.nii";
    voxsr::nifti::write(v, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        const std::int16_t dt = 64;
        f.seekp(70);
        f.write(reinterpret_cast<const char*>(&dt), 2);
    }
    CHECK_THROWS_AS(voxsr::nifti::read(path), voxsr::MalformedHeader);
    fs::remove_all(dir);
}

TEST_CASE("nifti reader rejects files shorter than 348 bytes", "[volume_io]") {
    const auto dir = temp_dir();
    const auto path = dir / "short.nii";
    {
        std::ofstream f(path, std::ios::binary);
        std::vector<char> junk(200, 0x5a);
        f.write(junk.data(), static_cast<std::streamsize>(junk.size()));
    }
    CHECK_THROWS_AS(voxsr::nifti::read(path), voxsr::MalformedHeader);
    fs::remove_all(dir);
}

TEST_CASE("nifti reader rejects 4D images", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(4, 4, 4, 12);
    const auto path = dir / "fourd.nii";
    voxsr::nifti::write(v, path);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        std::int16_t dims[8] = {4, 4, 4, 4, 2, 1, 1, 1};
        f.seekp(40);
        f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    }
    CHECK_THROWS_AS(voxsr::nifti::read(path), voxsr::ShapeError);
    fs::remove_all(dir);
}

TEST_CASE("vvol stores exactly the given values in C order", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v(2, 2, 2);
    for (std::size_t i = 0; i < 8; ++i) v.data[i] = static_cast<float>(i) * 0.125f;
    v.update_range();
    voxsr::vvol::write(v, dir / "cube.vvol");
    // raw payload is the same 8 floats
    std::ifstream f(dir / "cube.vvol" / "data.raw", std::ios::binary);
    float raw[8];
    f.read(reinterpret_cast<char*>(raw), sizeof(raw));
    for (std::size_t i = 0; i < 8; ++i) CHECK(raw[i] == v.data[i]);
    Volume r = voxsr::vvol::read(dir / "cube.vvol");
    CHECK(r.data == v.data);
    CHECK(r.shape == v.shape);
    fs::remove_all(dir);
}

TEST_CASE("volume IO round-trip law holds for both formats", "[volume_io]") {
    const auto dir = temp_dir();
    for (int it = 0; it < 8; ++it) {
        voxsr::Rng rng(100 + it);
        Volume v(1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
        v.voxel_size_mm = {0.25 * (1 + it % 3), 0.5, 1.0};
        for (float& x : v.data) x = static_cast<float>(rng.uniform(-3.0, 3.0));
        v.update_range();

        const auto nii = dir / ("p" + std::to_string(it) + ".nii");
        voxsr::write_volume(v, nii, voxsr::VolumeFormat::nifti1);
        Volume rn = voxsr::read_volume(nii, voxsr::VolumeFormat::nifti1);
        CHECK(rn.data == v.data);
        CHECK(rn.shape == v.shape);
        CHECK(rn.voxel_size_mm == v.voxel_size_mm);

        const auto vv = dir / ("p" + std::to_string(it) + ".vvol");
        voxsr::write_volume(v, vv, voxsr::VolumeFormat::vvol);
        Volume rv = voxsr::read_volume(vv, voxsr::VolumeFormat::vvol);
        CHECK(rv.data == v.data);
        CHECK(rv.shape == v.shape);
        CHECK(rv.voxel_size_mm == v.voxel_size_mm);
    }
    fs::remove_all(dir);
}

TEST_CASE("write to an unwritable path raises IoError", "[volume_io]") {
    Volume v = random_volume(2, 2, 2, 3);
    CHECK_THROWS_AS(voxsr::nifti::write(v, "/proc/not_writable/x.nii"), voxsr::IoError);
    CHECK_THROWS_AS(voxsr::vvol::write(v, "/proc/not_writable/x.vvol"), voxsr::IoError);
}

TEST_CASE("vvol rejects truncated payloads", "[volume_io]") {
    const auto dir = temp_dir();
    Volume v = random_volume(2, 2, 2, 4);
    voxsr::vvol::write(v, dir / "t.vvol");
    fs::resize_file(dir / "t.vvol" / "data.raw", 8);
    CHECK_THROWS_AS(voxsr::vvol::read(dir / "t.vvol"), voxsr::IoError);
    fs::remove_all(dir);
}
