#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/field.hpp"
#include "voxsr/networks.hpp"
#include "voxsr/shape_rules.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

struct SRRequest {
    double scale = 2.0;
    std::size_t chunk_size = 65536; // max coordinates decoded per batch
    bool clamp_output = true;
    // encode in overlapping z-slabs when the LR volume exceeds this many voxels
    std::size_t encode_tile_budget = 2u << 20;

    void validate() const {
        if (!(scale >= 1.0)) throw ConfigError("SRRequest: scale must be >= 1");
        if (chunk_size < 1) throw ConfigError("SRRequest: chunk_size must be >= 1");
    }
};

/// Whole-volume feature extraction, falling back to overlapping z-slab tiles
/// (overlap = the encoder's receptive radius) when the input exceeds the
/// budget. Tiling is exact: interiors are stitched, so the result equals the
/// whole-volume encoding bitwise.
template <class T>
FeatureGrid<T> encode_features(const SRModel<T>& m, const Volume& lr, std::size_t tile_budget,
                               unsigned threads = 1) {
    const std::size_t d = lr.shape[0], h = lr.shape[1], w = lr.shape[2];
    if (lr.numel() <= tile_budget || d <= 1) return encoder_forward(m, lr, threads);

    const std::size_t r = m.receptive_radius();
    std::size_t core = tile_budget / (h * w);
    core = std::max<std::size_t>(core > 2 * r ? core - 2 * r : 1, 1);

    FeatureGrid<T> grid(d, h, w, m.encoder_cfg.out_channels);
    const std::size_t c = grid.channels;
    for (std::size_t z0 = 0; z0 < d; z0 += core) {
        const std::size_t z1 = std::min(d, z0 + core);
        const std::size_t lo = z0 > r ? z0 - r : 0;
        const std::size_t hi = std::min(d, z1 + r);
        const Volume tile = extract_block(lr, {lo, 0, 0}, {hi - lo, h, w});
        FeatureGrid<T> part = encoder_forward(m, tile, threads);
        std::copy(part.v.begin() + static_cast<std::ptrdiff_t>((z0 - lo) * h * w * c),
                  part.v.begin() + static_cast<std::ptrdiff_t>((z1 - lo) * h * w * c),
                  grid.v.begin() + static_cast<std::ptrdiff_t>(z0 * h * w * c));
    }
    return grid;
}

/// Arbitrary-scale super-resolution: encode once, then decode the dense HR
/// voxel-center grid in chunks. Chunking is pure partitioning; outputs are
/// bitwise independent of chunk_size.
template <class T>
Volume super_resolve(const SRModel<T>& m, const Volume& lr, const SRRequest& req,
                     unsigned threads = 1) {
    req.validate();
    lr.require_valid("super_resolve");

    const FeatureGrid<T> grid = encode_features(m, lr, req.encode_tile_budget, threads);

    std::array<std::size_t, 3> os{};
    for (int a = 0; a < 3; ++a) os[a] = scaled_up_dim(lr.shape[a], req.scale);
    Volume out(os[0], os[1], os[2]);
    for (int a = 0; a < 3; ++a)
        out.voxel_size_mm[a] = lr.voxel_size_mm[a] * static_cast<double>(lr.shape[a]) /
                               static_cast<double>(os[a]);

    const std::size_t total = out.numel();
    const std::size_t hw = os[1] * os[2];
    CoordinateBatch chunk;
    for (std::size_t start = 0; start < total; start += req.chunk_size) {
        const std::size_t end = std::min(total, start + req.chunk_size);
        chunk.coords.resize(end - start);
        for (std::size_t i = start; i < end; ++i) {
            const std::size_t z = i / hw, rem = i % hw;
            chunk.coords[i - start] = {voxel_center_coord(z, os[0]),
                                       voxel_center_coord(rem / os[2], os[1]),
                                       voxel_center_coord(rem % os[2], os[2])};
        }
        const Tensor<T> feats = trilinear_interpolate(grid, chunk);
        const Tensor<T> pred = decoder_forward(m, chunk, feats, threads);
        for (std::size_t i = start; i < end; ++i) {
            const double y = static_cast<double>(pred.v[i - start]);
            if (!std::isfinite(y)) throw NumericalError("super_resolve: non-finite output");
            out.data[i] = static_cast<float>(y);
        }
    }
    if (req.clamp_output)
        for (float& x : out.data) x = std::clamp(x, 0.0f, 1.0f);
    out.update_range();
    return out;
}

} // namespace voxsr
