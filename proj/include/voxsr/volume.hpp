#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "voxsr/errors.hpp"

namespace voxsr {

/// A 3D scalar intensity grid. Axis order is (depth, height, width); data is
/// stored in C order with the width index varying fastest.
struct Volume {
    std::array<std::size_t, 3> shape{0, 0, 0};
    std::array<double, 3> voxel_size_mm{1.0, 1.0, 1.0};
    std::vector<float> data;
    std::pair<float, float> intensity_range{0.0f, 0.0f};

    Volume() = default;
    Volume(std::size_t d, std::size_t h, std::size_t w, double vz = 1.0, double vy = 1.0,
           double vx = 1.0)
        : shape{d, h, w}, voxel_size_mm{vz, vy, vx}, data(d * h * w, 0.0f) {}

    std::size_t numel() const { return shape[0] * shape[1] * shape[2]; }

    float& at(std::size_t z, std::size_t y, std::size_t x) {
        return data[(z * shape[1] + y) * shape[2] + x];
    }
    const float& at(std::size_t z, std::size_t y, std::size_t x) const {
        return data[(z * shape[1] + y) * shape[2] + x];
    }

    void update_range() {
        if (data.empty()) {
            intensity_range = {0.0f, 0.0f};
            return;
        }
        auto [lo, hi] = std::minmax_element(data.begin(), data.end());
        intensity_range = {*lo, *hi};
    }

    bool finite() const {
        for (float x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void require_valid(const char* who) const {
        if (shape[0] < 1 || shape[1] < 1 || shape[2] < 1)
            throw ShapeError(std::string(who) + ": volume has an empty axis");
        if (data.size() != numel())
            throw ShapeError(std::string(who) + ": data size does not match shape");
    }
};

/// Rescale intensities to [0, 1] by the per-volume min/max affine map.
/// A constant volume maps to all zeros.
inline Volume normalize_intensity(const Volume& v) {
    Volume out = v;
    const auto [lo, hi] = [&] {
        float mn = std::numeric_limits<float>::infinity();
        float mx = -std::numeric_limits<float>::infinity();
        for (float x : v.data) {
            mn = std::min(mn, x);
            mx = std::max(mx, x);
        }
        return std::pair<float, float>{mn, mx};
    }();
    if (!(hi > lo)) {
        std::fill(out.data.begin(), out.data.end(), 0.0f);
    } else {
        const float scale = 1.0f / (hi - lo);
        for (float& x : out.data) x = (x - lo) * scale;
    }
    out.update_range();
    return out;
}

/// Copy a contiguous block of `size` voxels starting at `off`.
inline Volume extract_block(const Volume& v, const std::array<std::size_t, 3>& off,
                            const std::array<std::size_t, 3>& size) {
    for (int a = 0; a < 3; ++a)
        if (off[a] + size[a] > v.shape[a])
            throw ShapeError("extract_block: block exceeds volume bounds");
    Volume out(size[0], size[1], size[2], v.voxel_size_mm[0], v.voxel_size_mm[1],
               v.voxel_size_mm[2]);
    for (std::size_t z = 0; z < size[0]; ++z)
        for (std::size_t y = 0; y < size[1]; ++y) {
            const float* src = &v.at(off[0] + z, off[1] + y, off[2]);
            std::copy(src, src + size[2], &out.at(z, y, 0));
        }
    out.update_range();
    return out;
}

/// Center-crop axes that exceed the target and zero-pad axes below it.
/// For an odd difference the extra voxel goes to the high side of the axis.
inline Volume crop_pad(const Volume& v, const std::array<std::size_t, 3>& target) {
    v.require_valid("crop_pad");
    for (std::size_t t : target)
        if (t < 1) throw ShapeError("crop_pad: target axis must be >= 1");

    Volume out(target[0], target[1], target[2], v.voxel_size_mm[0], v.voxel_size_mm[1],
               v.voxel_size_mm[2]);
    // src_off: first source index copied; dst_off: where it lands in the output
    std::array<std::size_t, 3> src_off{}, dst_off{}, span{};
    for (int a = 0; a < 3; ++a) {
        if (v.shape[a] >= target[a]) {
            src_off[a] = (v.shape[a] - target[a]) / 2;
            dst_off[a] = 0;
            span[a] = target[a];
        } else {
            src_off[a] = 0;
            dst_off[a] = (target[a] - v.shape[a]) / 2;
            span[a] = v.shape[a];
        }
    }
    for (std::size_t z = 0; z < span[0]; ++z)
        for (std::size_t y = 0; y < span[1]; ++y) {
            const float* src = &v.at(src_off[0] + z, src_off[1] + y, src_off[2]);
            float* dst = &out.at(dst_off[0] + z, dst_off[1] + y, dst_off[2]);
            std::copy(src, src + span[2], dst);
        }
    out.update_range();
    return out;
}

} // namespace voxsr
