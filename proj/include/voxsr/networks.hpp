#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/field.hpp"
#include "voxsr/nn.hpp"
#include "voxsr/rng.hpp"
#include "voxsr/tensor.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

enum class EncoderVariant { rdn, rescnn_style, srresnet_style };

inline const char* to_string(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::rdn: return "rdn";
        case EncoderVariant::rescnn_style: return "rescnn_style";
        case EncoderVariant::srresnet_style: return "srresnet_style";
    }
    return "rdn";
}

inline EncoderVariant encoder_variant_from_string(const std::string& s) {
    if (s == "rdn") return EncoderVariant::rdn;
    if (s == "rescnn_style") return EncoderVariant::rescnn_style;
    if (s == "srresnet_style") return EncoderVariant::srresnet_style;
    throw ConfigError("unknown encoder variant: " + s);
}

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::rdn;
    std::size_t base_channels = 64;  // trunk width
    std::size_t num_blocks = 8;      // dense/residual block count
    std::size_t convs_per_block = 3; // convs inside a dense block (rdn only)
    std::size_t growth_rate = 64;    // channels added per dense conv (rdn only)
    std::size_t out_channels = 128;  // feature field width C

    void validate() const {
        if (base_channels < 1 || num_blocks < 1 || convs_per_block < 1 || growth_rate < 1 ||
            out_channels < 1)
            throw ConfigError("EncoderConfig: all sizes must be positive");
    }
};

struct DecoderConfig {
    std::size_t feature_channels = 128; // must equal EncoderConfig::out_channels
    std::size_t hidden_width = 256;

    std::size_t input_width() const { return feature_channels + 3; }
    void validate() const {
        if (feature_channels < 1 || hidden_width < 1)
            throw ConfigError("DecoderConfig: all sizes must be positive");
    }
};

namespace detail {

/// dst[i·stride_d + c] (+)= src[i·stride_s + c] for c < ch
template <class T>
void copy_slice(T* dst, std::size_t stride_d, const T* src, std::size_t stride_s, std::size_t ch,
                std::size_t rows, bool add = false) {
    for (std::size_t r = 0; r < rows; ++r) {
        T* d = dst + r * stride_d;
        const T* s = src + r * stride_s;
        if (add)
            for (std::size_t c = 0; c < ch; ++c) d[c] += s[c];
        else
            for (std::size_t c = 0; c < ch; ++c) d[c] = s[c];
    }
}

/// gx[slice] = gy[slice] where post-activation > 0, else 0; contiguous result.
template <class T>
void relu_mask_slice(const T* post, std::size_t stride_p, const T* gy, std::size_t stride_g,
                     T* gx, std::size_t ch, std::size_t rows) {
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = post + r * stride_p;
        const T* g = gy + r * stride_g;
        T* o = gx + r * ch;
        for (std::size_t c = 0; c < ch; ++c) o[c] = p[c] > T(0) ? g[c] : T(0);
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Dense-residual encoder (default). Two shallow convs, num_blocks dense
// blocks (convs_per_block growing convs + 1x1 fusion + local skip), global
// 1x1+3x3 fusion over the concatenated block outputs, global skip onto the
// first shallow feature, and a 3x3 head to out_channels. No upscaling stage;
// the output lattice matches the input.
// ---------------------------------------------------------------------------

template <class T>
class RdnEncoder {
public:
    EncoderConfig cfg;
    Conv3d<T> sfe1, sfe2;
    struct Rdb {
        std::vector<Conv3d<T>> convs;
        Conv3d<T> lff;
    };
    std::vector<Rdb> rdbs;
    Conv3d<T> gff1, gff2, head;

    explicit RdnEncoder(const EncoderConfig& c)
        : cfg(c), sfe1("encoder.sfe1", 1, c.base_channels, 3),
          sfe2("encoder.sfe2", c.base_channels, c.base_channels, 3),
          gff1("encoder.gff1", c.num_blocks * c.base_channels, c.base_channels, 1),
          gff2("encoder.gff2", c.base_channels, c.base_channels, 3),
          head("encoder.head", c.base_channels, c.out_channels, 3) {
        rdbs.reserve(c.num_blocks);
        for (std::size_t i = 0; i < c.num_blocks; ++i) {
            Rdb r;
            const std::string base = "encoder.rdb" + std::to_string(i);
            for (std::size_t j = 0; j < c.convs_per_block; ++j)
                r.convs.emplace_back(base + ".conv" + std::to_string(j),
                                     c.base_channels + j * c.growth_rate, c.growth_rate, 3);
            r.lff = Conv3d<T>(base + ".lff", c.base_channels + c.convs_per_block * c.growth_rate,
                              c.base_channels, 1);
            rdbs.push_back(std::move(r));
        }
    }

    void init(Rng& rng) {
        sfe1.init(rng);
        sfe2.init(rng);
        for (auto& r : rdbs) {
            for (auto& cv : r.convs) cv.init(rng);
            r.lff.init(rng);
        }
        gff1.init(rng);
        gff2.init(rng);
        head.init(rng);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn(sfe1.w); fn(sfe1.b);
        fn(sfe2.w); fn(sfe2.b);
        for (auto& r : rdbs) {
            for (auto& cv : r.convs) { fn(cv.w); fn(cv.b); }
            fn(r.lff.w); fn(r.lff.b);
        }
        fn(gff1.w); fn(gff1.b);
        fn(gff2.w); fn(gff2.b);
        fn(head.w); fn(head.b);
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        fn(sfe1.w); fn(sfe1.b);
        fn(sfe2.w); fn(sfe2.b);
        for (const auto& r : rdbs) {
            for (const auto& cv : r.convs) { fn(cv.w); fn(cv.b); }
            fn(r.lff.w); fn(r.lff.b);
        }
        fn(gff1.w); fn(gff1.b);
        fn(gff2.w); fn(gff2.b);
        fn(head.w); fn(head.b);
    }

    static std::size_t param_count(const EncoderConfig& c) {
        const std::size_t g0 = c.base_channels, g = c.growth_rate;
        auto conv = [](std::size_t ci, std::size_t co, std::size_t k) { return k * k * k * ci * co + co; };
        std::size_t n = conv(1, g0, 3) + conv(g0, g0, 3);
        for (std::size_t j = 0; j < c.convs_per_block; ++j) n += c.num_blocks * conv(g0 + j * g, g, 3);
        n += c.num_blocks * conv(g0 + c.convs_per_block * g, g0, 1);
        n += conv(c.num_blocks * g0, g0, 1) + conv(g0, g0, 3) + conv(g0, c.out_channels, 3);
        return n;
    }

    /// Voxels farther than this (Chebyshev) from a query voxel cannot affect
    /// its feature: one lattice step per 3^3 conv on the deepest path.
    static std::size_t receptive_radius(const EncoderConfig& c) {
        return 2 + c.num_blocks * c.convs_per_block + 1 + 1;
    }

    struct State {
        std::size_t d = 0, h = 0, w = 0, n = 0;
        bool retained = false;
        std::vector<T> input;              // n (only kept when retained)
        std::vector<T> x0, x1;             // n*g0
        std::vector<std::vector<T>> cats;  // dense buffers, n*cat_ch
        std::vector<T> gffcat;             // n*(num_blocks*g0); holds every block output
        std::vector<T> g1, g2;             // n*g0 (g2 becomes the fused trunk)
        std::vector<T> features;           // n*out_channels
        std::vector<T> tmp;                // n*growth scratch
    };

    void forward(const T* in, std::size_t d, std::size_t h, std::size_t w, State& st, bool retain,
                 unsigned threads) const {
        const std::size_t g0 = cfg.base_channels, g = cfg.growth_rate;
        const std::size_t blocks = cfg.num_blocks, convs = cfg.convs_per_block;
        const std::size_t cat_ch = g0 + convs * g;
        const std::size_t gff_ch = blocks * g0;
        const std::size_t n = d * h * w;
        st.d = d; st.h = h; st.w = w; st.n = n;
        st.retained = retain;
        if (retain) st.input.assign(in, in + n);

        st.x0.resize(n * g0);
        sfe1.forward(in, 1, st.x0.data(), g0, d, h, w, threads);
        st.x1.resize(n * g0);
        sfe2.forward(st.x0.data(), g0, st.x1.data(), g0, d, h, w, threads);

        st.cats.resize(retain ? blocks : 1);
        st.gffcat.resize(n * gff_ch);
        st.tmp.resize(n * g);

        const T* prev = st.x1.data();
        std::size_t prev_stride = g0;
        for (std::size_t i = 0; i < blocks; ++i) {
            auto& cat = st.cats[retain ? i : 0];
            cat.resize(n * cat_ch);
            detail::copy_slice(cat.data(), cat_ch, prev, prev_stride, g0, n);
            for (std::size_t j = 0; j < convs; ++j) {
                rdbs[i].convs[j].forward(cat.data(), cat_ch, st.tmp.data(), g, d, h, w, threads);
                // ReLU while scattering into the dense buffer
                for (std::size_t v = 0; v < n; ++v) {
                    const T* s = st.tmp.data() + v * g;
                    T* dst = cat.data() + v * cat_ch + g0 + j * g;
                    for (std::size_t cch = 0; cch < g; ++cch)
                        dst[cch] = s[cch] > T(0) ? s[cch] : T(0);
                }
            }
            T* out_i = st.gffcat.data() + i * g0;
            rdbs[i].lff.forward(cat.data(), cat_ch, out_i, gff_ch, d, h, w, threads);
            detail::copy_slice(out_i, gff_ch, prev, prev_stride, g0, n, /*add=*/true);
            prev = out_i;
            prev_stride = gff_ch;
        }

        st.g1.resize(n * g0);
        gff1.forward(st.gffcat.data(), gff_ch, st.g1.data(), g0, d, h, w, threads);
        st.g2.resize(n * g0);
        gff2.forward(st.g1.data(), g0, st.g2.data(), g0, d, h, w, threads);
        add_inplace(st.g2.data(), st.x0.data(), n * g0); // global skip
        st.features.resize(n * cfg.out_channels);
        head.forward(st.g2.data(), g0, st.features.data(), cfg.out_channels, d, h, w, threads);
    }

    /// Accumulates parameter gradients; the input image gradient is not needed.
    void backward(State& st, const std::vector<T>& g_features, unsigned threads) {
        if (!st.retained) throw ConfigError("encoder backward needs a retained forward pass");
        const std::size_t g0 = cfg.base_channels, g = cfg.growth_rate;
        const std::size_t blocks = cfg.num_blocks, convs = cfg.convs_per_block;
        const std::size_t cat_ch = g0 + convs * g;
        const std::size_t gff_ch = blocks * g0;
        const std::size_t n = st.n;
        const std::size_t d = st.d, h = st.h, w = st.w;

        std::vector<T> g_fused(n * g0), g_g1(n * g0), g_gffcat(n * gff_ch);
        head.backward_input(g_features.data(), cfg.out_channels, g_fused.data(), g0, d, h, w,
                            false, threads);
        head.accumulate_param_grads(st.g2.data(), g0, g_features.data(), cfg.out_channels, d, h, w);

        // fused = gff2(g1) + x0
        gff2.backward_input(g_fused.data(), g0, g_g1.data(), g0, d, h, w, false, threads);
        gff2.accumulate_param_grads(st.g1.data(), g0, g_fused.data(), g0, d, h, w);
        gff1.backward_input(g_g1.data(), g0, g_gffcat.data(), gff_ch, d, h, w, false, threads);
        gff1.accumulate_param_grads(st.gffcat.data(), gff_ch, g_g1.data(), g0, d, h, w);

        // g_prev starts zero; after block i it carries the chain grad on block
        // i's input, which is block i-1's output.
        std::vector<T> g_out(n * g0), g_cat(n * cat_ch), g_tmp(n * g), g_prev(n * g0);
        for (std::size_t i = blocks; i-- > 0;) {
            // grad on block output: its slice of the fusion concat + the chain
            detail::copy_slice(g_out.data(), g0, g_gffcat.data() + i * g0, gff_ch, g0, n);
            add_inplace(g_out.data(), g_prev.data(), n * g0);

            auto& cat = st.cats[i];
            std::fill(g_cat.begin(), g_cat.end(), T(0));
            rdbs[i].lff.backward_input(g_out.data(), g0, g_cat.data(), cat_ch, d, h, w, true,
                                       threads);
            rdbs[i].lff.accumulate_param_grads(cat.data(), cat_ch, g_out.data(), g0, d, h, w);
            for (std::size_t j = convs; j-- > 0;) {
                detail::relu_mask_slice(cat.data() + g0 + j * g, cat_ch,
                                        g_cat.data() + g0 + j * g, cat_ch, g_tmp.data(), g, n);
                rdbs[i].convs[j].backward_input(g_tmp.data(), g, g_cat.data(), cat_ch, d, h, w,
                                                true, threads);
                rdbs[i].convs[j].accumulate_param_grads(cat.data(), cat_ch, g_tmp.data(), g, d, h,
                                                        w);
            }
            // block input grad = dense-path grad + local skip
            detail::copy_slice(g_prev.data(), g0, g_cat.data(), cat_ch, g0, n);
            add_inplace(g_prev.data(), g_out.data(), n * g0);
        }

        // g_prev is now the grad on x1 = sfe2(x0); add its input grad onto the
        // global-skip contribution already sitting in g_fused
        sfe2.backward_input(g_prev.data(), g0, g_fused.data(), g0, d, h, w, true, threads);
        sfe2.accumulate_param_grads(st.x0.data(), g0, g_prev.data(), g0, d, h, w);
        sfe1.accumulate_param_grads(st.input.data(), 1, g_fused.data(), g0, d, h, w);
    }

};

// ---------------------------------------------------------------------------
// Plain residual conv stack: one lifting conv, num_blocks 3x3 convs with ReLU,
// a single global skip, and a 3x3 head to out_channels.
// ---------------------------------------------------------------------------

template <class T>
class ResConvEncoder {
public:
    EncoderConfig cfg;
    Conv3d<T> conv_in;
    std::vector<Conv3d<T>> blocks;
    Conv3d<T> head;

    explicit ResConvEncoder(const EncoderConfig& c)
        : cfg(c), conv_in("encoder.conv_in", 1, c.base_channels, 3),
          head("encoder.head", c.base_channels, c.out_channels, 3) {
        for (std::size_t i = 0; i < c.num_blocks; ++i)
            blocks.emplace_back("encoder.block" + std::to_string(i), c.base_channels,
                                c.base_channels, 3);
    }

    void init(Rng& rng) {
        conv_in.init(rng);
        for (auto& b : blocks) b.init(rng);
        head.init(rng);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn(conv_in.w); fn(conv_in.b);
        for (auto& b : blocks) { fn(b.w); fn(b.b); }
        fn(head.w); fn(head.b);
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        fn(conv_in.w); fn(conv_in.b);
        for (const auto& b : blocks) { fn(b.w); fn(b.b); }
        fn(head.w); fn(head.b);
    }

    static std::size_t param_count(const EncoderConfig& c) {
        const std::size_t g0 = c.base_channels;
        const std::size_t conv_in_n = 27 * g0 + g0;
        const std::size_t body = c.num_blocks * (27 * g0 * g0 + g0);
        return conv_in_n + body + 27 * g0 * c.out_channels + c.out_channels;
    }

    static std::size_t receptive_radius(const EncoderConfig& c) { return 1 + c.num_blocks + 1; }

    struct State {
        std::size_t d = 0, h = 0, w = 0, n = 0;
        bool retained = false;
        std::vector<T> input;
        std::vector<std::vector<T>> stages; // post-relu: stages[0]=t0, stages[i+1]=block i out
        std::vector<T> fused;
        std::vector<T> features;
    };

    void forward(const T* in, std::size_t d, std::size_t h, std::size_t w, State& st, bool retain,
                 unsigned threads) const {
        const std::size_t g0 = cfg.base_channels;
        const std::size_t n = d * h * w;
        st.d = d; st.h = h; st.w = w; st.n = n;
        st.retained = retain;
        if (retain) st.input.assign(in, in + n);
        st.stages.resize(cfg.num_blocks + 1);
        for (auto& s : st.stages) s.resize(n * g0);

        conv_in.forward(in, 1, st.stages[0].data(), g0, d, h, w, threads);
        relu_forward(st.stages[0].data(), st.stages[0].data(), n * g0);
        for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
            blocks[i].forward(st.stages[i].data(), g0, st.stages[i + 1].data(), g0, d, h, w,
                              threads);
            relu_forward(st.stages[i + 1].data(), st.stages[i + 1].data(), n * g0);
        }
        st.fused = st.stages[cfg.num_blocks];
        add_inplace(st.fused.data(), st.stages[0].data(), n * g0);
        st.features.resize(n * cfg.out_channels);
        head.forward(st.fused.data(), g0, st.features.data(), cfg.out_channels, d, h, w, threads);
    }

    void backward(State& st, const std::vector<T>& g_features, unsigned threads) {
        if (!st.retained) throw ConfigError("encoder backward needs a retained forward pass");
        const std::size_t g0 = cfg.base_channels;
        const std::size_t n = st.n, d = st.d, h = st.h, w = st.w;
        std::vector<T> g_fused(n * g0), g_cur(n * g0), g_next(n * g0);
        head.backward_input(g_features.data(), cfg.out_channels, g_fused.data(), g0, d, h, w,
                            false, threads);
        head.accumulate_param_grads(st.fused.data(), g0, g_features.data(), cfg.out_channels, d,
                                    h, w);
        g_cur = g_fused; // grad on the last stage; g_fused keeps the skip share for stage 0
        for (std::size_t i = cfg.num_blocks; i-- > 0;) {
            relu_backward(st.stages[i + 1].data(), g_cur.data(), g_cur.data(), n * g0);
            blocks[i].backward_input(g_cur.data(), g0, g_next.data(), g0, d, h, w, false, threads);
            blocks[i].accumulate_param_grads(st.stages[i].data(), g0, g_cur.data(), g0, d, h, w);
            std::swap(g_cur, g_next);
        }
        add_inplace(g_cur.data(), g_fused.data(), n * g0);
        relu_backward(st.stages[0].data(), g_cur.data(), g_cur.data(), n * g0);
        conv_in.accumulate_param_grads(st.input.data(), 1, g_cur.data(), g0, d, h, w);
    }
};

// ---------------------------------------------------------------------------
// Two-conv residual blocks with a trunk conv and global skip (the classic SR
// generator body, minus normalization and the upscaler), 3x3 head to C.
// ---------------------------------------------------------------------------

template <class T>
class SrResNetEncoder {
public:
    EncoderConfig cfg;
    Conv3d<T> conv_in;
    struct Block {
        Conv3d<T> a, b;
    };
    std::vector<Block> blocks;
    Conv3d<T> post, head;

    explicit SrResNetEncoder(const EncoderConfig& c)
        : cfg(c), conv_in("encoder.conv_in", 1, c.base_channels, 3),
          post("encoder.post", c.base_channels, c.base_channels, 3),
          head("encoder.head", c.base_channels, c.out_channels, 3) {
        for (std::size_t i = 0; i < c.num_blocks; ++i) {
            const std::string base = "encoder.block" + std::to_string(i);
            blocks.push_back(Block{Conv3d<T>(base + ".a", c.base_channels, c.base_channels, 3),
                                   Conv3d<T>(base + ".b", c.base_channels, c.base_channels, 3)});
        }
    }

    void init(Rng& rng) {
        conv_in.init(rng);
        for (auto& b : blocks) { b.a.init(rng); b.b.init(rng); }
        post.init(rng);
        head.init(rng);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        fn(conv_in.w); fn(conv_in.b);
        for (auto& b : blocks) { fn(b.a.w); fn(b.a.b); fn(b.b.w); fn(b.b.b); }
        fn(post.w); fn(post.b);
        fn(head.w); fn(head.b);
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        fn(conv_in.w); fn(conv_in.b);
        for (const auto& b : blocks) { fn(b.a.w); fn(b.a.b); fn(b.b.w); fn(b.b.b); }
        fn(post.w); fn(post.b);
        fn(head.w); fn(head.b);
    }

    static std::size_t param_count(const EncoderConfig& c) {
        const std::size_t g0 = c.base_channels;
        const std::size_t unit = 27 * g0 * g0 + g0;
        return (27 * g0 + g0) + c.num_blocks * 2 * unit + unit + 27 * g0 * c.out_channels +
               c.out_channels;
    }

    static std::size_t receptive_radius(const EncoderConfig& c) {
        return 1 + 2 * c.num_blocks + 1 + 1;
    }

    struct State {
        std::size_t d = 0, h = 0, w = 0, n = 0;
        bool retained = false;
        std::vector<T> input;
        std::vector<std::vector<T>> trunk; // trunk[0]=t0 ... trunk[B]
        std::vector<std::vector<T>> act;   // per block: post-relu of conv a
        std::vector<T> fused;
        std::vector<T> features;
    };

    void forward(const T* in, std::size_t d, std::size_t h, std::size_t w, State& st, bool retain,
                 unsigned threads) const {
        const std::size_t g0 = cfg.base_channels;
        const std::size_t n = d * h * w;
        st.d = d; st.h = h; st.w = w; st.n = n;
        st.retained = retain;
        if (retain) st.input.assign(in, in + n);
        st.trunk.resize(cfg.num_blocks + 1);
        st.act.resize(cfg.num_blocks);
        for (auto& t : st.trunk) t.resize(n * g0);
        for (auto& a : st.act) a.resize(n * g0);

        conv_in.forward(in, 1, st.trunk[0].data(), g0, d, h, w, threads);
        relu_forward(st.trunk[0].data(), st.trunk[0].data(), n * g0);
        std::vector<T> bout(n * g0);
        for (std::size_t i = 0; i < cfg.num_blocks; ++i) {
            blocks[i].a.forward(st.trunk[i].data(), g0, st.act[i].data(), g0, d, h, w, threads);
            relu_forward(st.act[i].data(), st.act[i].data(), n * g0);
            blocks[i].b.forward(st.act[i].data(), g0, bout.data(), g0, d, h, w, threads);
            st.trunk[i + 1] = st.trunk[i];
            add_inplace(st.trunk[i + 1].data(), bout.data(), n * g0);
        }
        st.fused.resize(n * g0);
        post.forward(st.trunk[cfg.num_blocks].data(), g0, st.fused.data(), g0, d, h, w, threads);
        add_inplace(st.fused.data(), st.trunk[0].data(), n * g0);
        st.features.resize(n * cfg.out_channels);
        head.forward(st.fused.data(), g0, st.features.data(), cfg.out_channels, d, h, w, threads);
    }

    void backward(State& st, const std::vector<T>& g_features, unsigned threads) {
        if (!st.retained) throw ConfigError("encoder backward needs a retained forward pass");
        const std::size_t g0 = cfg.base_channels;
        const std::size_t n = st.n, d = st.d, h = st.h, w = st.w;
        std::vector<T> g_fused(n * g0), g_t(n * g0), g_a(n * g0);
        head.backward_input(g_features.data(), cfg.out_channels, g_fused.data(), g0, d, h, w,
                            false, threads);
        head.accumulate_param_grads(st.fused.data(), g0, g_features.data(), cfg.out_channels, d,
                                    h, w);
        post.backward_input(g_fused.data(), g0, g_t.data(), g0, d, h, w, false, threads);
        post.accumulate_param_grads(st.trunk[cfg.num_blocks].data(), g0, g_fused.data(), g0, d, h,
                                    w);
        for (std::size_t i = cfg.num_blocks; i-- > 0;) {
            // trunk[i+1] = trunk[i] + b(relu(a(trunk[i]))): skip share stays in g_t
            blocks[i].b.backward_input(g_t.data(), g0, g_a.data(), g0, d, h, w, false, threads);
            blocks[i].b.accumulate_param_grads(st.act[i].data(), g0, g_t.data(), g0, d, h, w);
            relu_backward(st.act[i].data(), g_a.data(), g_a.data(), n * g0);
            blocks[i].a.backward_input(g_a.data(), g0, g_t.data(), g0, d, h, w, true, threads);
            blocks[i].a.accumulate_param_grads(st.trunk[i].data(), g0, g_a.data(), g0, d, h, w);
        }
        add_inplace(g_t.data(), g_fused.data(), n * g0); // global skip onto t0
        relu_backward(st.trunk[0].data(), g_t.data(), g_t.data(), n * g0);
        conv_in.accumulate_param_grads(st.input.data(), 1, g_t.data(), g0, d, h, w);
    }

    bool backward_ready(const State& st) const { return !st.input.empty() || st.n == 0; }
};

// ---------------------------------------------------------------------------
// Decoder: 8 fully-connected layers with ReLU after the first seven, a skip
// of the (C+3)-wide input onto the 4th activation, and a linear scalar head.
// Widths: in->W, W->W, W->W, W->in, [skip], in->W, W->W, W->W, W->1.
// ---------------------------------------------------------------------------

template <class T>
class Decoder {
public:
    DecoderConfig cfg;
    std::vector<Linear<T>> fcs;

    explicit Decoder(const DecoderConfig& c) : cfg(c) {
        const std::size_t in = c.input_width(), wd = c.hidden_width;
        const std::size_t widths[9] = {in, wd, wd, wd, in, wd, wd, wd, 1};
        for (int i = 0; i < 8; ++i)
            fcs.emplace_back("decoder.fc" + std::to_string(i + 1), widths[i], widths[i + 1]);
    }

    void init(Rng& rng) {
        for (auto& fc : fcs) fc.init(rng);
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        for (auto& fc : fcs) { fn(fc.w); fn(fc.b); }
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        for (const auto& fc : fcs) { fn(fc.w); fn(fc.b); }
    }

    static std::size_t param_count(const DecoderConfig& c) {
        const std::size_t in = c.input_width(), wd = c.hidden_width;
        return (in * wd + wd) + 2 * (wd * wd + wd) + (wd * in + in) + (in * wd + wd) +
               2 * (wd * wd + wd) + (wd + 1);
    }

    struct State {
        std::size_t n = 0;
        std::vector<T> input;              // n*in
        std::vector<T> h1, h2, h3;         // n*wd, post-relu
        std::vector<T> h4;                 // n*in, post-relu
        std::vector<T> h4r;                // n*in, h4 + input
        std::vector<T> h5, h6, h7;         // n*wd, post-relu
        std::vector<T> y;                  // n
    };

    /// st.input must hold n rows of [coord(3) | feature(C)].
    void forward(State& st, unsigned threads) const {
        const std::size_t n = st.n, in = cfg.input_width();
        auto run = [&](const std::vector<T>& x, std::vector<T>& y, const Linear<T>& fc,
                       bool relu) {
            y.resize(n * fc.out_w);
            fc.forward(x.data(), y.data(), n, threads);
            if (relu) relu_forward(y.data(), y.data(), n * fc.out_w);
        };
        run(st.input, st.h1, fcs[0], true);
        run(st.h1, st.h2, fcs[1], true);
        run(st.h2, st.h3, fcs[2], true);
        run(st.h3, st.h4, fcs[3], true);
        st.h4r = st.h4;
        add_inplace(st.h4r.data(), st.input.data(), n * in);
        run(st.h4r, st.h5, fcs[4], true);
        run(st.h5, st.h6, fcs[5], true);
        run(st.h6, st.h7, fcs[6], true);
        st.y.resize(n);
        fcs[7].forward(st.h7.data(), st.y.data(), n, threads);
    }

    /// g_input receives the gradient on the [coord | feature] rows.
    void backward(State& st, const std::vector<T>& g_y, std::vector<T>& g_input,
                  unsigned threads) {
        const std::size_t n = st.n, in = cfg.input_width(), wd = cfg.hidden_width;
        std::vector<T> ga(n * wd), gb(n * wd), g_h4r(n * in);

        fcs[7].accumulate_param_grads(st.h7.data(), g_y.data(), n);
        fcs[7].backward_input(g_y.data(), ga.data(), n, threads);

        auto step = [&](std::vector<T>& g_post, const std::vector<T>& post,
                        const std::vector<T>& prev, Linear<T>& fc, std::vector<T>& g_prev) {
            relu_backward(post.data(), g_post.data(), g_post.data(), n * fc.out_w);
            fc.accumulate_param_grads(prev.data(), g_post.data(), n);
            g_prev.resize(n * fc.in_w);
            fc.backward_input(g_post.data(), g_prev.data(), n, threads);
        };
        step(ga, st.h7, st.h6, fcs[6], gb);      // -> grad on h6
        step(gb, st.h6, st.h5, fcs[5], ga);      // -> grad on h5
        step(ga, st.h5, st.h4r, fcs[4], g_h4r);  // -> grad on h4r
        // h4r = h4 + input
        g_input.assign(g_h4r.begin(), g_h4r.end());
        step(g_h4r, st.h4, st.h3, fcs[3], ga);   // -> grad on h3
        step(ga, st.h3, st.h2, fcs[2], gb);      // -> grad on h2
        step(gb, st.h2, st.h1, fcs[1], ga);      // -> grad on h1
        relu_backward(st.h1.data(), ga.data(), ga.data(), n * wd);
        fcs[0].accumulate_param_grads(st.input.data(), ga.data(), n);
        std::vector<T> g_in_fc1(n * in);
        fcs[0].backward_input(ga.data(), g_in_fc1.data(), n, threads);
        add_inplace(g_input.data(), g_in_fc1.data(), n * in);
    }
};

// ---------------------------------------------------------------------------
// The full model: encoder + coordinate-conditioned decoder.
// ---------------------------------------------------------------------------

template <class T>
struct SRModel {
    EncoderConfig encoder_cfg;
    DecoderConfig decoder_cfg;
    std::variant<RdnEncoder<T>, ResConvEncoder<T>, SrResNetEncoder<T>> encoder;
    Decoder<T> decoder;

    SRModel(const EncoderConfig& ec, const DecoderConfig& dc)
        : encoder_cfg(ec), decoder_cfg(dc), encoder(make_encoder(ec)), decoder(dc) {
        ec.validate();
        dc.validate();
        if (ec.out_channels != dc.feature_channels)
            throw ConfigError("decoder expects " + std::to_string(dc.feature_channels + 3) +
                              " inputs but encoder emits " + std::to_string(ec.out_channels) +
                              " feature channels");
    }

    static std::variant<RdnEncoder<T>, ResConvEncoder<T>, SrResNetEncoder<T>> make_encoder(
        const EncoderConfig& ec) {
        ec.validate();
        switch (ec.variant) {
            case EncoderVariant::rescnn_style: return ResConvEncoder<T>(ec);
            case EncoderVariant::srresnet_style: return SrResNetEncoder<T>(ec);
            default: return RdnEncoder<T>(ec);
        }
    }

    template <class Fn>
    void for_each_param(Fn&& fn) {
        std::visit([&](auto& e) { e.for_each_param(fn); }, encoder);
        decoder.for_each_param(fn);
    }
    template <class Fn>
    void for_each_param(Fn&& fn) const {
        std::visit([&](const auto& e) { e.for_each_param(fn); }, encoder);
        decoder.for_each_param(fn);
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for_each_param([&](Param<T>& p) { n += p.numel(); });
        return n;
    }

    void zero_grad() {
        for_each_param([](Param<T>& p) { p.zero_grad(); });
    }

    std::size_t receptive_radius() const {
        switch (encoder_cfg.variant) {
            case EncoderVariant::rescnn_style:
                return ResConvEncoder<T>::receptive_radius(encoder_cfg);
            case EncoderVariant::srresnet_style:
                return SrResNetEncoder<T>::receptive_radius(encoder_cfg);
            default: return RdnEncoder<T>::receptive_radius(encoder_cfg);
        }
    }
};

/// Closed-form parameter count; kept in sync with the layer tables in
/// docs/architecture.md and checked against the actual allocation in tests.
inline std::size_t expected_param_count(const EncoderConfig& ec, const DecoderConfig& dc) {
    std::size_t enc = 0;
    switch (ec.variant) {
        case EncoderVariant::rescnn_style: enc = ResConvEncoder<float>::param_count(ec); break;
        case EncoderVariant::srresnet_style: enc = SrResNetEncoder<float>::param_count(ec); break;
        default: enc = RdnEncoder<float>::param_count(ec); break;
    }
    return enc + Decoder<float>::param_count(dc);
}

template <class T>
SRModel<T> init_model(const EncoderConfig& ec, const DecoderConfig& dc, std::uint64_t seed) {
    SRModel<T> m(ec, dc);
    Rng rng(seed);
    std::visit([&](auto& e) { e.init(rng); }, m.encoder);
    m.decoder.init(rng);
    return m;
}

/// Smallest input the encoders accept per axis (one full kernel footprint).
inline constexpr std::size_t kMinEncoderDim = 3;

/// Run the encoder over a whole LR volume, producing the per-voxel feature
/// field on the same lattice.
template <class T>
FeatureGrid<T> encoder_forward(const SRModel<T>& m, const Volume& lr, unsigned threads = 1) {
    lr.require_valid("encoder_forward");
    for (std::size_t dim : lr.shape)
        if (dim < kMinEncoderDim)
            throw ShapeError("encoder_forward: every input dim must be >= " +
                             std::to_string(kMinEncoderDim));
    if (!lr.finite()) throw NumericalError("encoder_forward: non-finite input");

    std::vector<T> in(lr.numel());
    for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<T>(lr.data[i]);

    FeatureGrid<T> grid(lr.shape[0], lr.shape[1], lr.shape[2], m.encoder_cfg.out_channels);
    std::visit(
        [&](const auto& enc) {
            typename std::decay_t<decltype(enc)>::State st;
            enc.forward(in.data(), lr.shape[0], lr.shape[1], lr.shape[2], st, false, threads);
            grid.v = std::move(st.features);
        },
        m.encoder);
    for (T x : grid.v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericalError("encoder_forward: non-finite features");
    return grid;
}

/// Pointwise decode of per-query [coord | feature] rows into intensities.
template <class T>
Tensor<T> decoder_forward(const SRModel<T>& m, const CoordinateBatch& batch,
                          const Tensor<T>& feats, unsigned threads = 1) {
    const std::size_t c = m.decoder_cfg.feature_channels;
    if (feats.shape.size() != 2 || feats.shape[0] != batch.size() || feats.shape[1] != c)
        throw ShapeError("decoder_forward: feature rows do not match the query batch");

    typename Decoder<T>::State st;
    st.n = batch.size();
    const std::size_t in_w = m.decoder_cfg.input_width();
    st.input.resize(st.n * in_w);
    for (std::size_t i = 0; i < st.n; ++i) {
        T* row = st.input.data() + i * in_w;
        row[0] = static_cast<T>(batch.coords[i][0]);
        row[1] = static_cast<T>(batch.coords[i][1]);
        row[2] = static_cast<T>(batch.coords[i][2]);
        const T* f = feats.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) row[3 + j] = f[j];
    }
    m.decoder.forward(st, threads);
    Tensor<T> out({st.n});
    out.v = std::move(st.y);
    return out;
}

} // namespace voxsr
