#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "voxsr/resample.hpp"
#include "voxsr/rng.hpp"

using voxsr::Volume;

namespace {
Volume ramp_volume(std::size_t n) {
    Volume v(n, n, n);
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x)
                v.at(z, y, x) = static_cast<float>(z + y + x);
    v.update_range();
    return v;
}
} // namespace

TEST_CASE("cubic kernel is an interpolating partition of unity", "[resample]") {
    CHECK(voxsr::cubic::kernel(0.0) == 1.0);
    CHECK(voxsr::cubic::kernel(1.0) == 0.0);
    CHECK(voxsr::cubic::kernel(2.0) == 0.0);
    voxsr::Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const double t = rng.uniform01();
        const double sum = voxsr::cubic::kernel(t + 1.0) + voxsr::cubic::kernel(t) +
                           voxsr::cubic::kernel(1.0 - t) + voxsr::cubic::kernel(2.0 - t);
        CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("cubic_downsample output shape is floor(dim/k)", "[resample]") {
    Volume v(40, 40, 40);
    Volume out = voxsr::cubic_downsample(v, 2.0);
    CHECK(out.shape == std::array<std::size_t, 3>{20, 20, 20});
    CHECK(out.voxel_size_mm[0] == 2.0);

    Volume v2(10, 12, 14);
    Volume o2 = voxsr::cubic_downsample(v2, 2.5);
    CHECK(o2.shape == std::array<std::size_t, 3>{4, 4, 5});
}

TEST_CASE("cubic_downsample rejects empty outputs", "[resample]") {
    Volume v(3, 3, 3);
    CHECK_THROWS_AS(voxsr::cubic_downsample(v, 4.0), voxsr::ShapeError);
}

TEST_CASE("constant volumes stay constant under any factor", "[resample]") {
    Volume v(17, 13, 11);
    std::fill(v.data.begin(), v.data.end(), 0.37f);
    for (double k : {1.3, 2.0, 2.73, 3.9}) {
        Volume out = voxsr::cubic_downsample(v, k);
        for (float x : out.data) CHECK_THAT(x, Catch::Matchers::WithinAbs(0.37, 1e-6));
    }
}

TEST_CASE("cubic downsampling reproduces a linear ramp at interior centers", "[resample]") {
    // independent oracle: the analytic ramp value at the mapped source
    // coordinate (out+0.5)*(in/out) - 0.5 per axis; degree-1 reproduction
    // holds wherever all four taps are interior.
    const std::size_t n = 40;
    Volume v = ramp_volume(n);
    const double k = 2.0;
    Volume out = voxsr::cubic_downsample(v, k);
    REQUIRE(out.shape[0] == 20);
    const double ratio = static_cast<double>(n) / 20.0;
    auto mapped = [&](std::size_t o) { return (static_cast<double>(o) + 0.5) * ratio - 0.5; };
    for (std::size_t z = 1; z < 19; ++z)
        for (std::size_t y = 1; y < 19; ++y)
            for (std::size_t x = 1; x < 19; ++x) {
                const double expect = mapped(z) + mapped(y) + mapped(x);
                CHECK_THAT(out.at(z, y, x), Catch::Matchers::WithinAbs(expect, 1e-5));
            }
}

TEST_CASE("factor 1 is a bit-exact no-op", "[resample]") {
    voxsr::Rng rng(5);
    Volume v(9, 8, 7);
    for (float& x : v.data) x = static_cast<float>(rng.uniform01());
    Volume out = voxsr::cubic_downsample(v, 1.0);
    CHECK(out.data == v.data);

    Volume once = voxsr::cubic_downsample(v, 1.7);
    Volume then_identity = voxsr::cubic_downsample(once, 1.0);
    CHECK(then_identity.data == once.data);
}

TEST_CASE("cubic_resample upsamples to an explicit shape", "[resample]") {
    Volume v = ramp_volume(8);
    Volume up = voxsr::cubic_resample(v, {16, 16, 16});
    CHECK(up.shape == std::array<std::size_t, 3>{16, 16, 16});
    // interior linearity survives upsampling as well
    const double ratio = 0.5;
    auto mapped = [&](std::size_t o) { return (static_cast<double>(o) + 0.5) * ratio - 0.5; };
    for (std::size_t z = 4; z < 12; ++z)
        CHECK_THAT(up.at(z, 8, 8),
                   Catch::Matchers::WithinAbs(mapped(z) + 2.0 * mapped(8), 1e-5));
}
