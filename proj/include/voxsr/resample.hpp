#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/shape_rules.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

namespace cubic {

/// Keys cubic kernel, a = -0.5 (Catmull-Rom). Interpolating; the four taps
/// covering any point have weights that sum to 1.
inline double kernel(double s) {
    s = std::fabs(s);
    if (s < 1.0) return (1.5 * s - 2.5) * s * s + 1.0;
    if (s < 2.0) return ((-0.5 * s + 2.5) * s - 4.0) * s + 2.0;
    return 0.0;
}

/// Mirror indexing without edge duplication: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
inline std::size_t mirror(long i, std::size_t n) {
    if (n == 1) return 0;
    const long period = 2 * static_cast<long>(n) - 2;
    long m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<long>(n)) m = period - m;
    return static_cast<std::size_t>(m);
}

/// One separable pass along `axis`, voxel-center aligned:
/// source coordinate = (out_index + 0.5) * (in_dim / out_dim) - 0.5.
inline Volume resample_axis(const Volume& v, int axis, std::size_t out_n) {
    const std::size_t in_n = v.shape[axis];
    if (out_n == in_n) return v; // identity pass is exact by construction

    std::array<std::size_t, 3> os = v.shape;
    os[axis] = out_n;
    Volume out(os[0], os[1], os[2], v.voxel_size_mm[0], v.voxel_size_mm[1], v.voxel_size_mm[2]);
    out.voxel_size_mm[axis] *= static_cast<double>(in_n) / static_cast<double>(out_n);

    const double ratio = static_cast<double>(in_n) / static_cast<double>(out_n);
    // per-output-index taps and weights, shared across all lines
    std::vector<std::array<std::size_t, 4>> taps(out_n);
    std::vector<std::array<double, 4>> wts(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
        const double c = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        const long i0 = static_cast<long>(std::floor(c));
        const double t = c - static_cast<double>(i0);
        for (int j = 0; j < 4; ++j) {
            taps[o][j] = mirror(i0 - 1 + j, in_n);
            wts[o][j] = kernel(t - static_cast<double>(j - 1));
        }
    }

    const std::size_t stride = axis == 0 ? v.shape[1] * v.shape[2]
                              : axis == 1 ? v.shape[2]
                                          : 1;
    const std::size_t out_stride = axis == 0 ? os[1] * os[2] : axis == 1 ? os[2] : 1;
    // iterate over all lines orthogonal to `axis`
    std::array<std::size_t, 3> other{};
    int oi = 0;
    for (int a = 0; a < 3; ++a)
        if (a != axis) other[oi++] = static_cast<std::size_t>(a);
    for (std::size_t p = 0; p < v.shape[other[0]]; ++p)
        for (std::size_t q = 0; q < v.shape[other[1]]; ++q) {
            std::array<std::size_t, 3> idx{};
            idx[other[0]] = p;
            idx[other[1]] = q;
            idx[axis] = 0;
            const float* src = &v.at(idx[0], idx[1], idx[2]);
            float* dst = &out.at(idx[0], idx[1], idx[2]);
            for (std::size_t o = 0; o < out_n; ++o) {
                double acc = 0.0;
                for (int j = 0; j < 4; ++j)
                    acc += wts[o][j] * static_cast<double>(src[taps[o][j] * stride]);
                dst[o * out_stride] = static_cast<float>(acc);
            }
        }
    return out;
}

} // namespace cubic

/// Separable Catmull-Rom resampling to an explicit target shape.
inline Volume cubic_resample(const Volume& v, const std::array<std::size_t, 3>& out_shape) {
    v.require_valid("cubic_resample");
    for (std::size_t n : out_shape)
        if (n < 1) throw ShapeError("cubic_resample: output axis would be empty");
    Volume out = v;
    for (int axis = 0; axis < 3; ++axis) out = cubic::resample_axis(out, axis, out_shape[axis]);
    out.update_range();
    return out;
}

/// Downsample by isotropic factor k >= 1; output shape is floor(dim/k).
inline Volume cubic_downsample(const Volume& v, double k) {
    if (!(k >= 1.0)) throw ShapeError("cubic_downsample: factor must be >= 1");
    std::array<std::size_t, 3> os{};
    for (int a = 0; a < 3; ++a) {
        os[a] = scaled_down_dim(v.shape[a], k);
        if (os[a] < 1) throw ShapeError("cubic_downsample: output axis would be empty");
    }
    return cubic_resample(v, os);
}

} // namespace voxsr
