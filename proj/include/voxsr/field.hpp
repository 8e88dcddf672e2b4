#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/rng.hpp"
#include "voxsr/shape_rules.hpp"
#include "voxsr/tensor.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

/// Continuous query coordinates in the normalized field domain [-1,1]^3,
/// optionally paired with target intensities. Component a of a coordinate
/// addresses volume axis a ((depth, height, width) order, like Volume).
struct CoordinateBatch {
    std::vector<std::array<double, 3>> coords;
    std::vector<float> targets; // empty or aligned with coords

    std::size_t size() const { return coords.size(); }
    bool has_targets() const { return !targets.empty(); }
};

/// Per-voxel latent feature field over a lattice, shape (d, h, w, C), C order.
template <class T>
struct FeatureGrid {
    std::array<std::size_t, 3> shape{0, 0, 0};
    std::size_t channels = 0;
    std::vector<T> v;

    FeatureGrid() = default;
    FeatureGrid(std::size_t d, std::size_t h, std::size_t w, std::size_t c)
        : shape{d, h, w}, channels(c), v(d * h * w * c, T(0)) {}

    std::size_t numel() const { return v.size(); }
    T* at(std::size_t z, std::size_t y, std::size_t x) {
        return &v[((z * shape[1] + y) * shape[2] + x) * channels];
    }
    const T* at(std::size_t z, std::size_t y, std::size_t x) const {
        return &v[((z * shape[1] + y) * shape[2] + x) * channels];
    }
};

/// Normalized coordinate of voxel center i on an axis of size n: 2(i+0.5)/n - 1.
inline double voxel_center_coord(std::size_t i, std::size_t n) {
    return 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n) - 1.0;
}

/// Dense voxel-center grid of the up-scaled lattice, enumerated in C order
/// (last axis fastest). Output axis sizes are floor(k * dim).
inline CoordinateBatch make_hr_grid(const std::array<std::size_t, 3>& lr_shape, double k) {
    if (!(k >= 1.0)) throw ShapeError("make_hr_grid: scale must be >= 1");
    std::array<std::size_t, 3> hs{};
    for (int a = 0; a < 3; ++a) hs[a] = scaled_up_dim(lr_shape[a], k);

    CoordinateBatch batch;
    batch.coords.resize(hs[0] * hs[1] * hs[2]);
    std::size_t n = 0;
    for (std::size_t z = 0; z < hs[0]; ++z) {
        const double cz = voxel_center_coord(z, hs[0]);
        for (std::size_t y = 0; y < hs[1]; ++y) {
            const double cy = voxel_center_coord(y, hs[1]);
            for (std::size_t x = 0; x < hs[2]; ++x)
                batch.coords[n++] = {cz, cy, voxel_center_coord(x, hs[2])};
        }
    }
    return batch;
}

namespace detail {

struct LatticeCell {
    std::size_t lo[3], hi[3]; // clamped neighbor indices per axis
    double t[3];              // per-axis fraction toward hi
};

template <class T>
LatticeCell locate(const FeatureGrid<T>& grid, const std::array<double, 3>& c) {
    LatticeCell cell{};
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(c[a]) > 1.0 + 1e-9)
            throw DomainError("coordinate outside [-1,1]");
        const auto n = static_cast<double>(grid.shape[a]);
        const double g = (c[a] + 1.0) * 0.5 * n - 0.5;
        const double f = std::floor(g);
        auto i0 = static_cast<long>(f);
        double t = g - f;
        // snap rounding dust so lattice-aligned queries reproduce exactly
        if (t < 1e-9) {
            t = 0.0;
        } else if (t > 1.0 - 1e-9) {
            t = 0.0;
            ++i0;
        }
        const long last = static_cast<long>(grid.shape[a]) - 1;
        cell.lo[a] = static_cast<std::size_t>(std::clamp(i0, 0L, last));
        cell.hi[a] = static_cast<std::size_t>(std::clamp(i0 + 1, 0L, last));
        cell.t[a] = t;
    }
    return cell;
}

} // namespace detail

/// Resample the feature grid at each query by trilinear weighting of the 8
/// lattice neighbors (sub-cuboid volume ratios). Border queries clamp the
/// neighbor indices, which replicates the edge feature. Returns an N x C tensor.
template <class T>
Tensor<T> trilinear_interpolate(const FeatureGrid<T>& grid, const CoordinateBatch& batch) {
    const std::size_t c = grid.channels;
    Tensor<T> out({batch.size(), c});
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto cell = detail::locate(grid, batch.coords[n]);
        T* dst = out.data() + n * c;
        for (int corner = 0; corner < 8; ++corner) {
            const bool bz = corner & 4, by = corner & 2, bx = corner & 1;
            const double w = (bz ? cell.t[0] : 1.0 - cell.t[0]) *
                             (by ? cell.t[1] : 1.0 - cell.t[1]) *
                             (bx ? cell.t[2] : 1.0 - cell.t[2]);
            if (w == 0.0) continue;
            const T wt = static_cast<T>(w);
            const T* src =
                grid.at(bz ? cell.hi[0] : cell.lo[0], by ? cell.hi[1] : cell.lo[1],
                        bx ? cell.hi[2] : cell.lo[2]);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wt * src[ch];
        }
    }
    return out;
}

/// Adjoint of trilinear_interpolate: scatter per-query output gradients back
/// onto the lattice with the same weights.
template <class T>
void trilinear_backward(FeatureGrid<T>& grid_grad, const CoordinateBatch& batch,
                        const Tensor<T>& grad_out) {
    const std::size_t c = grid_grad.channels;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto cell = detail::locate(grid_grad, batch.coords[n]);
        const T* g = grad_out.data() + n * c;
        for (int corner = 0; corner < 8; ++corner) {
            const bool bz = corner & 4, by = corner & 2, bx = corner & 1;
            const double w = (bz ? cell.t[0] : 1.0 - cell.t[0]) *
                             (by ? cell.t[1] : 1.0 - cell.t[1]) *
                             (bx ? cell.t[2] : 1.0 - cell.t[2]);
            if (w == 0.0) continue;
            const T wt = static_cast<T>(w);
            T* dst = grid_grad.at(bz ? cell.hi[0] : cell.lo[0], by ? cell.hi[1] : cell.lo[1],
                                  bx ? cell.hi[2] : cell.lo[2]);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wt * g[ch];
        }
    }
}

/// K distinct voxel centers of `hr`, drawn uniformly without replacement,
/// paired with their intensities. Coordinates follow the voxel-center
/// convention over hr's own shape.
inline CoordinateBatch sample_coordinates(const Volume& hr, std::size_t k, Rng& rng) {
    hr.require_valid("sample_coordinates");
    const std::size_t n = hr.numel();
    if (k > n) throw ShapeError("sample_coordinates: K exceeds the voxel count");
    const auto picks = rng.sample_without_replacement(n, k);

    CoordinateBatch batch;
    batch.coords.resize(k);
    batch.targets.resize(k);
    const std::size_t hw = hr.shape[1] * hr.shape[2];
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t flat = picks[i];
        const std::size_t z = flat / hw;
        const std::size_t y = (flat % hw) / hr.shape[2];
        const std::size_t x = flat % hr.shape[2];
        batch.coords[i] = {voxel_center_coord(z, hr.shape[0]),
                           voxel_center_coord(y, hr.shape[1]),
                           voxel_center_coord(x, hr.shape[2])};
        batch.targets[i] = hr.data[flat];
    }
    return batch;
}

} // namespace voxsr
