#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/rng.hpp"
#include "voxsr/threads.hpp"

namespace voxsr {

/// A named learnable tensor plus its gradient accumulator.
template <class T>
struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
        std::size_t count = 1;
        for (std::size_t d : shape) count *= d;
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }
    std::size_t numel() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Fan-in scaled uniform init for ReLU stacks: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <class T>
void kaiming_uniform(Param<T>& p, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& x : p.value) x = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
void relu_forward(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

/// Uses post-activation values as the mask (y > 0 iff the pre-activation was).
template <class T>
void relu_backward(const T* y, const T* gy, T* gx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gx[i] = y[i] > T(0) ? gy[i] : T(0);
}

/// In-place ReLU on a channel slice of width `ch` inside rows of `stride`
/// channels (used for dense-concat buffers).
template <class T>
void relu_forward_slice(T* buf, std::size_t stride, std::size_t ch, std::size_t rows) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* p = buf + r * stride;
        for (std::size_t c = 0; c < ch; ++c)
            if (p[c] < T(0)) p[c] = T(0);
    }
}

template <class T>
void add_inplace(T* dst, const T* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

// ---------------------------------------------------------------------------
// 3D convolution, stride 1, zero padding (ks-1)/2 (shape preserving).
// Activation layout is (d, h, w, C) with channels fastest; `in_stride` /
// `out_stride` give the per-voxel channel pitch so a conv can read or write a
// channel slice of a wider (concatenated) buffer in place. Weights are
// (ks^3, cin, cout). Every output element is accumulated in one fixed
// tap-then-channel order, so results are bitwise identical regardless of how
// space is tiled or threaded.
// ---------------------------------------------------------------------------

template <class T>
struct Conv3d {
    std::size_t cin = 0, cout = 0;
    int ks = 3;
    Param<T> w, b;

    Conv3d() = default;
    Conv3d(const std::string& name, std::size_t cin_, std::size_t cout_, int ks_)
        : cin(cin_), cout(cout_), ks(ks_),
          w(name + ".w",
            {static_cast<std::size_t>(ks_), static_cast<std::size_t>(ks_),
             static_cast<std::size_t>(ks_), cin_, cout_}),
          b(name + ".b", {cout_}) {}

    void init(Rng& rng) {
        kaiming_uniform(w, cin * static_cast<std::size_t>(ks) * ks * ks, rng);
        std::fill(b.value.begin(), b.value.end(), T(0));
    }

    void forward(const T* in, std::size_t in_stride, T* out, std::size_t out_stride,
                 std::size_t d, std::size_t h, std::size_t wd, unsigned threads = 1) const {
        const int r = (ks - 1) / 2;
        const T* __restrict wts = w.value.data();
        const T* __restrict bias = b.value.data();
        parallel_for(d * h, threads, [&](std::size_t row0, std::size_t row1) {
            for (std::size_t row = row0; row < row1; ++row) {
                const auto z = static_cast<long>(row / h);
                const auto y = static_cast<long>(row % h);
                for (long x = 0; x < static_cast<long>(wd); ++x) {
                    T* __restrict o = out + (row * wd + static_cast<std::size_t>(x)) * out_stride;
                    for (std::size_t co = 0; co < cout; ++co) o[co] = bias[co];
                    for (int dz = -r; dz <= r; ++dz) {
                        const long zz = z + dz;
                        if (zz < 0 || zz >= static_cast<long>(d)) continue;
                        for (int dy = -r; dy <= r; ++dy) {
                            const long yy = y + dy;
                            if (yy < 0 || yy >= static_cast<long>(h)) continue;
                            const std::size_t plane =
                                (static_cast<std::size_t>(zz) * h + static_cast<std::size_t>(yy)) *
                                wd;
                            const std::size_t tap_zy =
                                (static_cast<std::size_t>(dz + r) * ks +
                                 static_cast<std::size_t>(dy + r)) *
                                ks;
                            for (int dx = -r; dx <= r; ++dx) {
                                const long xx = x + dx;
                                if (xx < 0 || xx >= static_cast<long>(wd)) continue;
                                const T* __restrict iv =
                                    in + (plane + static_cast<std::size_t>(xx)) * in_stride;
                                const T* __restrict wt =
                                    wts + (tap_zy + static_cast<std::size_t>(dx + r)) * cin * cout;
                                for (std::size_t ci = 0; ci < cin; ++ci) {
                                    const T a = iv[ci];
                                    const T* __restrict wr = wt + ci * cout;
                                    for (std::size_t co = 0; co < cout; ++co) o[co] += a * wr[co];
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    /// Gradient w.r.t. the input. With accumulate=false the slice is overwritten.
    void backward_input(const T* gout, std::size_t gout_stride, T* gin, std::size_t gin_stride,
                        std::size_t d, std::size_t h, std::size_t wd, bool accumulate,
                        unsigned threads = 1) const {
        const int r = (ks - 1) / 2;
        const T* __restrict wts = w.value.data();
        parallel_for(d * h, threads, [&](std::size_t row0, std::size_t row1) {
            for (std::size_t row = row0; row < row1; ++row) {
                const auto z = static_cast<long>(row / h);
                const auto y = static_cast<long>(row % h);
                for (long x = 0; x < static_cast<long>(wd); ++x) {
                    T* __restrict gi = gin + (row * wd + static_cast<std::size_t>(x)) * gin_stride;
                    if (!accumulate)
                        for (std::size_t ci = 0; ci < cin; ++ci) gi[ci] = T(0);
                    for (int dz = -r; dz <= r; ++dz) {
                        const long oz = z - dz;
                        if (oz < 0 || oz >= static_cast<long>(d)) continue;
                        for (int dy = -r; dy <= r; ++dy) {
                            const long oy = y - dy;
                            if (oy < 0 || oy >= static_cast<long>(h)) continue;
                            const std::size_t plane =
                                (static_cast<std::size_t>(oz) * h + static_cast<std::size_t>(oy)) *
                                wd;
                            const std::size_t tap_zy =
                                (static_cast<std::size_t>(dz + r) * ks +
                                 static_cast<std::size_t>(dy + r)) *
                                ks;
                            for (int dx = -r; dx <= r; ++dx) {
                                const long ox = x - dx;
                                if (ox < 0 || ox >= static_cast<long>(wd)) continue;
                                const T* __restrict go =
                                    gout + (plane + static_cast<std::size_t>(ox)) * gout_stride;
                                const T* __restrict wt =
                                    wts + (tap_zy + static_cast<std::size_t>(dx + r)) * cin * cout;
                                for (std::size_t ci = 0; ci < cin; ++ci) {
                                    const T* __restrict wr = wt + ci * cout;
                                    T acc = T(0);
                                    for (std::size_t co = 0; co < cout; ++co)
                                        acc += go[co] * wr[co];
                                    gi[ci] += acc;
                                }
                            }
                        }
                    }
                }
            }
        });
    }

    /// Accumulate weight/bias gradients. Single-threaded (shared accumulators).
    void accumulate_param_grads(const T* in, std::size_t in_stride, const T* gout,
                                std::size_t gout_stride, std::size_t d, std::size_t h,
                                std::size_t wd) {
        const int r = (ks - 1) / 2;
        T* __restrict gw = w.grad.data();
        T* __restrict gb = b.grad.data();
        for (long z = 0; z < static_cast<long>(d); ++z)
            for (long y = 0; y < static_cast<long>(h); ++y)
                for (long x = 0; x < static_cast<long>(wd); ++x) {
                    const T* __restrict go =
                        gout +
                        ((static_cast<std::size_t>(z) * h + static_cast<std::size_t>(y)) * wd +
                         static_cast<std::size_t>(x)) *
                            gout_stride;
                    for (std::size_t co = 0; co < cout; ++co) gb[co] += go[co];
                    for (int dz = -r; dz <= r; ++dz) {
                        const long zz = z + dz;
                        if (zz < 0 || zz >= static_cast<long>(d)) continue;
                        for (int dy = -r; dy <= r; ++dy) {
                            const long yy = y + dy;
                            if (yy < 0 || yy >= static_cast<long>(h)) continue;
                            const std::size_t plane =
                                (static_cast<std::size_t>(zz) * h + static_cast<std::size_t>(yy)) *
                                wd;
                            const std::size_t tap_zy =
                                (static_cast<std::size_t>(dz + r) * ks +
                                 static_cast<std::size_t>(dy + r)) *
                                ks;
                            for (int dx = -r; dx <= r; ++dx) {
                                const long xx = x + dx;
                                if (xx < 0 || xx >= static_cast<long>(wd)) continue;
                                const T* __restrict iv =
                                    in + (plane + static_cast<std::size_t>(xx)) * in_stride;
                                T* __restrict gwt =
                                    gw + (tap_zy + static_cast<std::size_t>(dx + r)) * cin * cout;
                                for (std::size_t ci = 0; ci < cin; ++ci) {
                                    const T a = iv[ci];
                                    T* __restrict gwr = gwt + ci * cout;
                                    for (std::size_t co = 0; co < cout; ++co)
                                        gwr[co] += a * go[co];
                                }
                            }
                        }
                    }
                }
    }
};

// ---------------------------------------------------------------------------
// Fully-connected layer over row batches. Activations (n, width) row-major;
// weights (in, out). Row results never depend on the batch partition.
// ---------------------------------------------------------------------------

template <class T>
struct Linear {
    std::size_t in_w = 0, out_w = 0;
    Param<T> w, b;

    Linear() = default;
    Linear(const std::string& name, std::size_t in_, std::size_t out_)
        : in_w(in_), out_w(out_), w(name + ".w", {in_, out_}), b(name + ".b", {out_}) {}

    void init(Rng& rng) {
        kaiming_uniform(w, in_w, rng);
        std::fill(b.value.begin(), b.value.end(), T(0));
    }

    void forward(const T* x, T* y, std::size_t rows, unsigned threads = 1) const {
        const T* __restrict wts = w.value.data();
        const T* __restrict bias = b.value.data();
        parallel_for(rows, threads, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
                const T* __restrict xr = x + r * in_w;
                T* __restrict yr = y + r * out_w;
                for (std::size_t j = 0; j < out_w; ++j) yr[j] = bias[j];
                for (std::size_t i = 0; i < in_w; ++i) {
                    const T a = xr[i];
                    const T* __restrict wr = wts + i * out_w;
                    for (std::size_t j = 0; j < out_w; ++j) yr[j] += a * wr[j];
                }
            }
        });
    }

    void backward_input(const T* gy, T* gx, std::size_t rows, unsigned threads = 1) const {
        const T* __restrict wts = w.value.data();
        parallel_for(rows, threads, [&](std::size_t r0, std::size_t r1) {
            for (std::size_t r = r0; r < r1; ++r) {
                const T* __restrict gyr = gy + r * out_w;
                T* __restrict gxr = gx + r * in_w;
                for (std::size_t i = 0; i < in_w; ++i) {
                    const T* __restrict wr = wts + i * out_w;
                    T acc = T(0);
                    for (std::size_t j = 0; j < out_w; ++j) acc += gyr[j] * wr[j];
                    gxr[i] = acc;
                }
            }
        });
    }

    void accumulate_param_grads(const T* x, const T* gy, std::size_t rows) {
        T* __restrict gw = w.grad.data();
        T* __restrict gb = b.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* __restrict xr = x + r * in_w;
            const T* __restrict gyr = gy + r * out_w;
            for (std::size_t j = 0; j < out_w; ++j) gb[j] += gyr[j];
            for (std::size_t i = 0; i < in_w; ++i) {
                const T a = xr[i];
                T* __restrict gwr = gw + i * out_w;
                for (std::size_t j = 0; j < out_w; ++j) gwr[j] += a * gyr[j];
            }
        }
    }
};

} // namespace voxsr
