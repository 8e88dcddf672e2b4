#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "voxsr/field.hpp"
#include "voxsr/rng.hpp"

using voxsr::CoordinateBatch;
using voxsr::FeatureGrid;

namespace {

FeatureGrid<double> random_grid(std::size_t d, std::size_t h, std::size_t w, std::size_t c,
                                voxsr::Rng& rng) {
    FeatureGrid<double> g(d, h, w, c);
    for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
    return g;
}

/// Brute-force reference for the 8-neighbor sub-cuboid weighting: the weight
/// of corner k is the volume of the box spanned by the query and the corner
/// diagonal to k, normalized by the summed volumes. Written independently of
/// the production kernel.
std::vector<double> oracle_interpolate(const FeatureGrid<double>& grid,
                                       const std::array<double, 3>& coord) {
    double g[3];
    long lo[3];
    for (int a = 0; a < 3; ++a) {
        g[a] = (coord[a] + 1.0) * 0.5 * static_cast<double>(grid.shape[a]) - 0.5;
        lo[a] = static_cast<long>(std::floor(g[a]));
    }
    double s_total = 0.0;
    double s_k[8];
    for (int corner = 0; corner < 8; ++corner) {
        double vol = 1.0;
        for (int a = 0; a < 3; ++a) {
            const bool hi = corner & (1 << (2 - a));
            const double corner_pos = static_cast<double>(lo[a] + (hi ? 1 : 0));
            const double diag_pos = static_cast<double>(lo[a] + (hi ? 0 : 1));
            vol *= std::fabs(g[a] - diag_pos);
            (void)corner_pos;
        }
        s_k[corner] = vol;
        s_total += vol;
    }
    std::vector<double> out(grid.channels, 0.0);
    for (int corner = 0; corner < 8; ++corner) {
        const std::size_t z = static_cast<std::size_t>(lo[0] + ((corner & 4) ? 1 : 0));
        const std::size_t y = static_cast<std::size_t>(lo[1] + ((corner & 2) ? 1 : 0));
        const std::size_t x = static_cast<std::size_t>(lo[2] + ((corner & 1) ? 1 : 0));
        const double* v = grid.at(z, y, x);
        for (std::size_t ch = 0; ch < grid.channels; ++ch)
            out[ch] += s_k[corner] / s_total * v[ch];
    }
    return out;
}

/// Uniform in-hull query: a continuous lattice position strictly inside the
/// outermost voxel centers, converted back to the normalized domain.
std::array<double, 3> random_in_hull(const FeatureGrid<double>& grid, voxsr::Rng& rng) {
    std::array<double, 3> c{};
    for (int a = 0; a < 3; ++a) {
        const double n = static_cast<double>(grid.shape[a]);
        const double g = rng.uniform(0.01, n - 1.01);
        c[a] = 2.0 * (g + 0.5) / n - 1.0;
    }
    return c;
}

} // namespace

TEST_CASE("make_hr_grid matches the voxel-center formula", "[field]") {
    auto batch = voxsr::make_hr_grid({10, 10, 10}, 2.0);
    REQUIRE(batch.size() == 8000);
    CHECK_THAT(batch.coords[0][0], Catch::Matchers::WithinAbs(-0.95, 1e-12));
    CHECK_THAT(batch.coords[0][1], Catch::Matchers::WithinAbs(-0.95, 1e-12));
    CHECK_THAT(batch.coords[0][2], Catch::Matchers::WithinAbs(-0.95, 1e-12));
    // C order: the second entry advances the last axis
    CHECK(batch.coords[1][2] > batch.coords[0][2]);
    CHECK(batch.coords[1][0] == batch.coords[0][0]);
}

TEST_CASE("make_hr_grid with k=1 is congruent with the LR lattice", "[field]") {
    auto batch = voxsr::make_hr_grid({3, 4, 5}, 1.0);
    REQUIRE(batch.size() == 60);
    std::size_t i = 0;
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 5; ++x, ++i) {
                CHECK(batch.coords[i][0] == voxsr::voxel_center_coord(z, 3));
                CHECK(batch.coords[i][1] == voxsr::voxel_center_coord(y, 4));
                CHECK(batch.coords[i][2] == voxsr::voxel_center_coord(x, 5));
            }
}

TEST_CASE("make_hr_grid applies the floor rule per axis", "[field]") {
    auto batch = voxsr::make_hr_grid({10, 12, 14}, 2.5);
    CHECK(batch.size() == 25u * 30u * 35u);
}

TEST_CASE("queries at lattice points reproduce the stored vector exactly", "[field]") {
    voxsr::Rng rng(11);
    auto grid = random_grid(4, 8, 4, 3, rng);
    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
                CoordinateBatch b;
                b.coords.push_back({voxsr::voxel_center_coord(z, 4),
                                    voxsr::voxel_center_coord(y, 8),
                                    voxsr::voxel_center_coord(x, 4)});
                auto out = voxsr::trilinear_interpolate(grid, b);
                const double* v = grid.at(z, y, x);
                for (std::size_t ch = 0; ch < 3; ++ch) CHECK(out.v[ch] == v[ch]);
            }
}

TEST_CASE("queries at cell centers average the 8 corners", "[field]") {
    voxsr::Rng rng(12);
    auto grid = random_grid(4, 4, 4, 2, rng);
    CoordinateBatch b;
    // lattice position (1.5, 1.5, 1.5) on a size-4 axis -> normalized 0
    b.coords.push_back({0.0, 0.0, 0.0});
    auto out = voxsr::trilinear_interpolate(grid, b);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        for (int corner = 0; corner < 8; ++corner)
            mean += grid.at(1 + ((corner & 4) ? 1 : 0), 1 + ((corner & 2) ? 1 : 0),
                            1 + ((corner & 1) ? 1 : 0))[ch] /
                    8.0;
        CHECK_THAT(out.v[ch], Catch::Matchers::WithinAbs(mean, 1e-12));
    }
}

TEST_CASE("trilinear kernel matches the brute-force oracle", "[field]") {
    voxsr::Rng rng(2025);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t d = 4 + rng.below(5), h = 4 + rng.below(5), w = 4 + rng.below(5);
        const std::size_t c = std::array<std::size_t, 3>{1, 2, 8}[trial % 3];
        auto grid = random_grid(d, h, w, c, rng);
        CoordinateBatch batch;
        for (int q = 0; q < 200; ++q) batch.coords.push_back(random_in_hull(grid, rng));
        auto out = voxsr::trilinear_interpolate(grid, batch);
        for (std::size_t q = 0; q < batch.size(); ++q) {
            auto expect = oracle_interpolate(grid, batch.coords[q]);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double got = out.v[q * c + ch];
                const double tol = 1e-6 * std::max(1.0, std::fabs(expect[ch]));
                CHECK(std::fabs(got - expect[ch]) <= tol);
            }
        }
    }
}

TEST_CASE("interpolation is a convex combination of the gathered corners", "[field]") {
    voxsr::Rng rng(77);
    auto grid = random_grid(5, 5, 5, 4, rng);
    for (int q = 0; q < 500; ++q) {
        CoordinateBatch b;
        b.coords.push_back(random_in_hull(grid, rng));
        auto out = voxsr::trilinear_interpolate(grid, b);
        // corner bounds per channel from an independent gather
        double g[3];
        long lo[3];
        for (int a = 0; a < 3; ++a) {
            g[a] = (b.coords[0][a] + 1.0) * 0.5 * 5.0 - 0.5;
            lo[a] = static_cast<long>(std::floor(g[a]));
        }
        for (std::size_t ch = 0; ch < 4; ++ch) {
            double mn = 1e300, mx = -1e300;
            for (int corner = 0; corner < 8; ++corner) {
                const double v = grid.at(lo[0] + ((corner & 4) ? 1 : 0),
                                         lo[1] + ((corner & 2) ? 1 : 0),
                                         lo[2] + ((corner & 1) ? 1 : 0))[ch];
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            CHECK(out.v[ch] >= mn - 1e-12);
            CHECK(out.v[ch] <= mx + 1e-12);
        }
    }
}

TEST_CASE("interpolation is linear in the grid", "[field]") {
    voxsr::Rng rng(13);
    auto ga = random_grid(4, 5, 6, 3, rng);
    auto gb = random_grid(4, 5, 6, 3, rng);
    const double alpha = 0.7, beta = -1.3;
    FeatureGrid<double> mix(4, 5, 6, 3);
    for (std::size_t i = 0; i < mix.v.size(); ++i) mix.v[i] = alpha * ga.v[i] + beta * gb.v[i];

    CoordinateBatch batch;
    for (int q = 0; q < 300; ++q) batch.coords.push_back(random_in_hull(ga, rng));
    auto out_mix = voxsr::trilinear_interpolate(mix, batch);
    auto out_a = voxsr::trilinear_interpolate(ga, batch);
    auto out_b = voxsr::trilinear_interpolate(gb, batch);
    for (std::size_t i = 0; i < out_mix.v.size(); ++i)
        CHECK_THAT(out_mix.v[i],
                   Catch::Matchers::WithinAbs(alpha * out_a.v[i] + beta * out_b.v[i], 1e-6));
}

TEST_CASE("affine feature fields are reproduced exactly", "[field]") {
    FeatureGrid<double> grid(6, 6, 6, 1);
    const double a = 0.3, b = 1.7, c = -0.9, d = 0.45;
    for (std::size_t z = 0; z < 6; ++z)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x)
                grid.at(z, y, x)[0] = a + b * static_cast<double>(z) +
                                      c * static_cast<double>(y) + d * static_cast<double>(x);
    voxsr::Rng rng(4);
    for (int q = 0; q < 500; ++q) {
        CoordinateBatch batch;
        batch.coords.push_back(random_in_hull(grid, rng));
        double g[3];
        for (int ax = 0; ax < 3; ++ax)
            g[ax] = (batch.coords[0][ax] + 1.0) * 0.5 * 6.0 - 0.5;
        auto out = voxsr::trilinear_interpolate(grid, batch);
        CHECK_THAT(out.v[0],
                   Catch::Matchers::WithinAbs(a + b * g[0] + c * g[1] + d * g[2], 1e-5));
    }
}

TEST_CASE("k=1 grid enumeration + interpolation is the identity", "[field]") {
    voxsr::Rng rng(9);
    auto grid = random_grid(3, 5, 7, 2, rng);
    auto batch = voxsr::make_hr_grid({3, 5, 7}, 1.0);
    auto out = voxsr::trilinear_interpolate(grid, batch);
    REQUIRE(out.v.size() == grid.v.size());
    CHECK(out.v == grid.v);
}

TEST_CASE("coordinates outside the domain raise DomainError", "[field]") {
    voxsr::Rng rng(3);
    auto grid = random_grid(4, 4, 4, 1, rng);
    CoordinateBatch b;
    b.coords.push_back({1.0 + 1e-6, 0.0, 0.0});
    CHECK_THROWS_AS(voxsr::trilinear_interpolate(grid, b), voxsr::DomainError);
    // within tolerance is accepted
    CoordinateBatch ok;
    ok.coords.push_back({1.0 + 1e-10, 0.0, 0.0});
    CHECK_NOTHROW(voxsr::trilinear_interpolate(grid, ok));
}

TEST_CASE("sample_coordinates with K = voxel count is a permutation", "[field]") {
    voxsr::Volume hr(20, 20, 20);
    voxsr::Rng vr(1);
    for (float& x : hr.data) x = static_cast<float>(vr.uniform01());
    voxsr::Rng rng(55);
    auto batch = voxsr::sample_coordinates(hr, 8000, rng);
    REQUIRE(batch.size() == 8000);
    // every voxel appears exactly once: reconstruct flat indices
    std::vector<int> seen(8000, 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto idx_of = [](double c, std::size_t n) {
            return static_cast<std::size_t>(
                std::llround(((c + 1.0) * static_cast<double>(n) / 2.0) - 0.5));
        };
        const std::size_t z = idx_of(batch.coords[i][0], 20);
        const std::size_t y = idx_of(batch.coords[i][1], 20);
        const std::size_t x = idx_of(batch.coords[i][2], 20);
        seen[(z * 20 + y) * 20 + x] += 1;
        CHECK(batch.targets[i] == hr.at(z, y, x));
    }
    for (int s : seen) CHECK(s == 1);
}

TEST_CASE("sample_coordinates edge cases", "[field]") {
    voxsr::Volume hr(4, 4, 4);
    for (std::size_t i = 0; i < hr.numel(); ++i) hr.data[i] = static_cast<float>(i);
    voxsr::Rng rng(2);
    auto one = voxsr::sample_coordinates(hr, 1, rng);
    REQUIRE(one.size() == 1);
    // the (coord, intensity) pair is present in the volume
    bool found = false;
    for (std::size_t i = 0; i < hr.numel(); ++i)
        if (hr.data[i] == one.targets[0]) found = true;
    CHECK(found);

    voxsr::Rng ra(7), rb(7);
    auto sa = voxsr::sample_coordinates(hr, 10, ra);
    auto sb = voxsr::sample_coordinates(hr, 10, rb);
    CHECK(sa.coords == sb.coords);
    CHECK(sa.targets == sb.targets);

    voxsr::Rng rc(8);
    CHECK_THROWS_AS(voxsr::sample_coordinates(hr, 65, rc), voxsr::ShapeError);
}
