#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "voxsr/errors.hpp"
#include "voxsr/resample.hpp"
#include "voxsr/rng.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

/// One training example: an LR patch, the HR patch it was simulated from, and
/// the realized HR/LR side ratio (integer rounding can nudge it off the drawn k).
struct PatchPair {
    Volume lr;
    Volume hr;
    double effective_scale = 1.0;
};

/// Uniform scale draws from [k_min, k_max]. The sampler owns its RNG, so a
/// fixed seed fixes the whole sequence; extract_training_pairs also draws its
/// crop offsets from this stream.
class ScaleSampler {
public:
    ScaleSampler(double k_min, double k_max, std::uint64_t seed)
        : k_min_(k_min), k_max_(k_max), rng_(seed) {
        if (!(k_min >= 1.0) || !(k_max >= k_min))
            throw ConfigError("ScaleSampler: need 1 <= k_min <= k_max");
    }

    double sample() { return rng_.uniform(k_min_, k_max_); }

    double k_min() const { return k_min_; }
    double k_max() const { return k_max_; }
    Rng& rng() { return rng_; }

private:
    double k_min_, k_max_;
    Rng rng_;
};

inline double sample_scale(ScaleSampler& s) { return s.sample(); }

/// Random-crop `crop_size`^3 blocks, center-crop each to q^3 with
/// q = round(lr_size * k), and cubic-downsample to lr_size^3.
inline std::vector<PatchPair> extract_training_pairs(const Volume& v, std::size_t n_patches,
                                                     std::size_t lr_size, ScaleSampler& sampler,
                                                     std::size_t crop_size = 40) {
    v.require_valid("extract_training_pairs");
    for (int a = 0; a < 3; ++a)
        if (v.shape[a] < crop_size)
            throw ShapeError("extract_training_pairs: volume smaller than the crop window");
    if (static_cast<double>(lr_size) * sampler.k_max() >
        static_cast<double>(crop_size) + 1e-12)
        throw ShapeError("extract_training_pairs: lr_size * k_max exceeds the crop window");
    if (lr_size < 1) throw ShapeError("extract_training_pairs: lr_size must be >= 1");

    std::vector<PatchPair> out;
    out.reserve(n_patches);
    for (std::size_t i = 0; i < n_patches; ++i) {
        std::array<std::size_t, 3> off{};
        for (int a = 0; a < 3; ++a)
            off[a] = static_cast<std::size_t>(sampler.rng().below(v.shape[a] - crop_size + 1));
        const double k = sampler.sample();
        const auto q = static_cast<std::size_t>(
            std::llround(static_cast<double>(lr_size) * k));
        // center-crop the crop_size^3 block down to q^3 (low side gets the floor)
        std::array<std::size_t, 3> hr_off = off;
        for (int a = 0; a < 3; ++a) hr_off[a] += (crop_size - q) / 2;

        PatchPair pair;
        pair.hr = extract_block(v, hr_off, {q, q, q});
        pair.effective_scale = static_cast<double>(q) / static_cast<double>(lr_size);
        pair.lr = cubic_downsample(pair.hr, pair.effective_scale);
        if (pair.lr.shape[0] != lr_size || pair.lr.shape[1] != lr_size ||
            pair.lr.shape[2] != lr_size)
            throw ShapeError("extract_training_pairs: internal LR shape mismatch");
        out.push_back(std::move(pair));
    }
    return out;
}

} // namespace voxsr
