#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace voxsr {

/// Dense row-major (C order) array of scalars. Storage only; the compute
/// kernels in nn.hpp index raw pointers with explicit strides.
template <class T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), v(count(shape), T(0)) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t numel() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(T(0)); }

    bool finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

} // namespace voxsr
