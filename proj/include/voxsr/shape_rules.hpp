#pragma once

#include <cmath>
#include <cstddef>

namespace voxsr {

/// floor(k * dim), with a tiny forward nudge so that products that are exact
/// in real arithmetic (2.5 * 12, q/p * p, ...) do not fall one short when the
/// double rounds just below the integer.
inline std::size_t scaled_up_dim(std::size_t dim, double k) {
    return static_cast<std::size_t>(std::floor(k * static_cast<double>(dim) + 1e-9));
}

/// floor(dim / k), same guard.
inline std::size_t scaled_down_dim(std::size_t dim, double k) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(dim) / k + 1e-9));
}

} // namespace voxsr
