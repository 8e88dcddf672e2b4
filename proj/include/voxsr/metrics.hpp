#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsr/errors.hpp"
#include "voxsr/volume.hpp"

namespace voxsr {

namespace detail {

inline void require_same_shape(const Volume& a, const Volume& b, const char* who) {
    if (a.shape != b.shape) throw ShapeError(std::string(who) + ": shape mismatch");
    if (a.numel() == 0) throw ShapeError(std::string(who) + ": empty volumes");
}

/// Peak value convention: the reference maximum (1 for normalized data).
inline double peak_of(const Volume& gt) {
    double mx = -std::numeric_limits<double>::infinity();
    for (float x : gt.data) mx = std::max(mx, static_cast<double>(x));
    return mx > 0.0 ? mx : 1.0;
}

/// Symmetric peak for SSIM, so ssim(a,b) == ssim(b,a) holds exactly.
inline double peak_of_pair(const Volume& a, const Volume& b) {
    return std::max(peak_of(a), peak_of(b));
}

struct PairStats {
    double mean_a = 0, mean_b = 0, var_a = 0, var_b = 0, cov = 0;
};

template <class It>
PairStats pair_stats(It a, It b, std::size_t n) {
    PairStats s;
    for (std::size_t i = 0; i < n; ++i) {
        s.mean_a += static_cast<double>(a[i]);
        s.mean_b += static_cast<double>(b[i]);
    }
    s.mean_a /= static_cast<double>(n);
    s.mean_b /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double da = static_cast<double>(a[i]) - s.mean_a;
        const double db = static_cast<double>(b[i]) - s.mean_b;
        s.var_a += da * da;
        s.var_b += db * db;
        s.cov += da * db;
    }
    s.var_a /= static_cast<double>(n);
    s.var_b /= static_cast<double>(n);
    s.cov /= static_cast<double>(n);
    return s;
}

inline double ssim_from_stats(const PairStats& s, double peak) {
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    // grouped so that swapping the inputs gives the bitwise-identical value
    return ((2.0 * (s.mean_a * s.mean_b) + c1) * (2.0 * s.cov + c2)) /
           ((s.mean_a * s.mean_a + s.mean_b * s.mean_b + c1) * (s.var_a + s.var_b + c2));
}

} // namespace detail

/// PSNR with the root-of-mean-absolute-error denominator, exactly as printed:
/// 20*log10(L / sqrt(mean |sr-gt|)). Identical inputs give +infinity.
inline double psnr_paper(const Volume& sr, const Volume& gt) {
    detail::require_same_shape(sr, gt, "psnr_paper");
    const double peak = detail::peak_of(gt);
    double acc = 0.0;
    for (std::size_t i = 0; i < sr.data.size(); ++i)
        acc += std::fabs(static_cast<double>(sr.data[i]) - static_cast<double>(gt.data[i]));
    const double m = std::sqrt(acc / static_cast<double>(sr.data.size()));
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(peak / m);
}

/// Conventional PSNR: 10*log10(L^2 / MSE).
inline double psnr_standard(const Volume& sr, const Volume& gt) {
    detail::require_same_shape(sr, gt, "psnr_standard");
    const double peak = detail::peak_of(gt);
    double acc = 0.0;
    for (std::size_t i = 0; i < sr.data.size(); ++i) {
        const double d = static_cast<double>(sr.data[i]) - static_cast<double>(gt.data[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(sr.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Single-window structural similarity from whole-volume statistics, with
/// c1=(0.01 L)^2, c2=(0.03 L)^2.
inline double ssim_global(const Volume& sr, const Volume& gt) {
    detail::require_same_shape(sr, gt, "ssim_global");
    const auto s = detail::pair_stats(sr.data.data(), gt.data.data(), sr.data.size());
    return detail::ssim_from_stats(s, detail::peak_of_pair(sr, gt));
}

/// Same statistics over a 2D slice pair; building block for slicewise scores.
inline double ssim_2d(const std::vector<float>& a, const std::vector<float>& b, double peak) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("ssim_2d: size mismatch");
    return detail::ssim_from_stats(detail::pair_stats(a.data(), b.data(), a.size()), peak);
}

using SliceMetric = std::function<double(const std::vector<float>&, const std::vector<float>&)>;

struct SlicewiseResult {
    double per_direction[3] = {0, 0, 0}; // slices orthogonal to axes 0, 1, 2
    std::size_t slice_count = 0;
    double mean = 0.0;
};

/// Evaluate a 2D metric on every slice from the three orthogonal directions
/// and average: 3*s slices for a side-s cube.
inline SlicewiseResult slicewise_aggregate(const SliceMetric& metric, const Volume& sr,
                                           const Volume& gt) {
    detail::require_same_shape(sr, gt, "slicewise_aggregate");
    SlicewiseResult res;
    double total = 0.0;
    std::vector<float> sa, sb;
    for (int axis = 0; axis < 3; ++axis) {
        double dir_sum = 0.0;
        for (std::size_t idx = 0; idx < sr.shape[axis]; ++idx) {
            sa.clear();
            sb.clear();
            // gather the slice with `axis` fixed at idx
            std::array<std::size_t, 3> lo{0, 0, 0}, hi = sr.shape;
            lo[axis] = idx;
            hi[axis] = idx + 1;
            for (std::size_t z = lo[0]; z < hi[0]; ++z)
                for (std::size_t y = lo[1]; y < hi[1]; ++y)
                    for (std::size_t x = lo[2]; x < hi[2]; ++x) {
                        sa.push_back(sr.at(z, y, x));
                        sb.push_back(gt.at(z, y, x));
                    }
            dir_sum += metric(sa, sb);
        }
        res.per_direction[axis] = dir_sum / static_cast<double>(sr.shape[axis]);
        total += dir_sum;
        res.slice_count += sr.shape[axis];
    }
    res.mean = total / static_cast<double>(res.slice_count);
    return res;
}

/// Windowed 3D SSIM: the single-window formula evaluated on every full
/// window^3 neighborhood (via summed-volume tables) and averaged.
inline double ssim_windowed(const Volume& sr, const Volume& gt, std::size_t window = 7) {
    detail::require_same_shape(sr, gt, "ssim_windowed");
    for (std::size_t dim : sr.shape)
        if (dim < window) throw ShapeError("ssim_windowed: volume smaller than the window");

    const std::size_t d = sr.shape[0], h = sr.shape[1], w = sr.shape[2];
    const std::size_t n = (d + 1) * (h + 1) * (w + 1);
    // inclusive summed-volume tables with a zero border
    std::vector<double> Sa(n, 0), Sb(n, 0), Saa(n, 0), Sbb(n, 0), Sab(n, 0);
    auto at = [&](std::vector<double>& t, std::size_t z, std::size_t y,
                  std::size_t x) -> double& { return t[(z * (h + 1) + y) * (w + 1) + x]; };
    for (std::size_t z = 1; z <= d; ++z)
        for (std::size_t y = 1; y <= h; ++y)
            for (std::size_t x = 1; x <= w; ++x) {
                const double a = sr.at(z - 1, y - 1, x - 1);
                const double b = gt.at(z - 1, y - 1, x - 1);
                const double vals[5] = {a, b, a * a, b * b, a * b};
                std::vector<double>* tabs[5] = {&Sa, &Sb, &Saa, &Sbb, &Sab};
                for (int t = 0; t < 5; ++t) {
                    auto& tb = *tabs[t];
                    at(tb, z, y, x) = vals[t] + at(tb, z - 1, y, x) + at(tb, z, y - 1, x) +
                                      at(tb, z, y, x - 1) - at(tb, z - 1, y - 1, x) -
                                      at(tb, z - 1, y, x - 1) - at(tb, z, y - 1, x - 1) +
                                      at(tb, z - 1, y - 1, x - 1);
                }
            }
    auto box = [&](std::vector<double>& t, std::size_t z, std::size_t y, std::size_t x) {
        // window starting at (z,y,x), inclusive tables are shifted by one
        const std::size_t z1 = z + window, y1 = y + window, x1 = x + window;
        return at(t, z1, y1, x1) - at(t, z, y1, x1) - at(t, z1, y, x1) - at(t, z1, y1, x) +
               at(t, z, y, x1) + at(t, z, y1, x) + at(t, z1, y, x) - at(t, z, y, x);
    };

    const double peak = detail::peak_of_pair(sr, gt);
    const double wn = static_cast<double>(window * window * window);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t z = 0; z + window <= d; ++z)
        for (std::size_t y = 0; y + window <= h; ++y)
            for (std::size_t x = 0; x + window <= w; ++x) {
                detail::PairStats s;
                s.mean_a = box(Sa, z, y, x) / wn;
                s.mean_b = box(Sb, z, y, x) / wn;
                s.var_a = box(Saa, z, y, x) / wn - s.mean_a * s.mean_a;
                s.var_b = box(Sbb, z, y, x) / wn - s.mean_b * s.mean_b;
                s.cov = box(Sab, z, y, x) / wn - s.mean_a * s.mean_b;
                acc += detail::ssim_from_stats(s, peak);
                ++count;
            }
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Evaluation report. Infinite PSNR (identical images) is serialized as an
// explicit marker string; LPIPS/PSI/LPC-SI slots exist for external plugins
// and are never computed here.
// ---------------------------------------------------------------------------

struct EvalReport {
    double psnr_paper = 0.0;
    double psnr_standard = 0.0;
    double ssim_global = 0.0;
    std::optional<double> ssim_windowed;
    std::optional<double> slice_ssim_axial;    // slices orthogonal to axis 0
    std::optional<double> slice_ssim_coronal;  // axis 1
    std::optional<double> slice_ssim_sagittal; // axis 2
    std::optional<double> slice_ssim_mean;
    std::optional<double> lpips, psi, lpc_si; // external plugin slots
    std::optional<double> scale;
    std::string sr_id, gt_id;
};

namespace detail {
constexpr const char* kInfiniteMark = "infinite (identical images)";

inline nlohmann::json num_or_mark(double v) {
    if (std::isinf(v)) return nlohmann::json(kInfiniteMark);
    return nlohmann::json(v);
}

inline double num_from_mark(const nlohmann::json& j) {
    if (j.is_string()) return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

inline void put_opt(nlohmann::json& j, const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
}

inline void get_opt(const nlohmann::json& j, const char* key, std::optional<double>& v) {
    if (j.contains(key)) v = j.at(key).get<double>();
}
} // namespace detail

inline void to_json(nlohmann::json& j, const EvalReport& r) {
    j = nlohmann::json::object();
    j["psnr_paper"] = detail::num_or_mark(r.psnr_paper);
    j["psnr_standard"] = detail::num_or_mark(r.psnr_standard);
    j["ssim_global"] = r.ssim_global;
    detail::put_opt(j, "ssim_windowed", r.ssim_windowed);
    detail::put_opt(j, "slice_ssim_axial", r.slice_ssim_axial);
    detail::put_opt(j, "slice_ssim_coronal", r.slice_ssim_coronal);
    detail::put_opt(j, "slice_ssim_sagittal", r.slice_ssim_sagittal);
    detail::put_opt(j, "slice_ssim_mean", r.slice_ssim_mean);
    detail::put_opt(j, "lpips", r.lpips);
    detail::put_opt(j, "psi", r.psi);
    detail::put_opt(j, "lpc_si", r.lpc_si);
    detail::put_opt(j, "scale", r.scale);
    if (!r.sr_id.empty()) j["sr_id"] = r.sr_id;
    if (!r.gt_id.empty()) j["gt_id"] = r.gt_id;
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
    r.psnr_paper = detail::num_from_mark(j.at("psnr_paper"));
    r.psnr_standard = detail::num_from_mark(j.at("psnr_standard"));
    r.ssim_global = j.at("ssim_global").get<double>();
    detail::get_opt(j, "ssim_windowed", r.ssim_windowed);
    detail::get_opt(j, "slice_ssim_axial", r.slice_ssim_axial);
    detail::get_opt(j, "slice_ssim_coronal", r.slice_ssim_coronal);
    detail::get_opt(j, "slice_ssim_sagittal", r.slice_ssim_sagittal);
    detail::get_opt(j, "slice_ssim_mean", r.slice_ssim_mean);
    detail::get_opt(j, "lpips", r.lpips);
    detail::get_opt(j, "psi", r.psi);
    detail::get_opt(j, "lpc_si", r.lpc_si);
    detail::get_opt(j, "scale", r.scale);
    r.sr_id = j.value("sr_id", "");
    r.gt_id = j.value("gt_id", "");
}

/// All reference-based metrics in one pass. Windowed SSIM only on request
/// (and only when the volume fits the window).
inline EvalReport compute_report(const Volume& sr, const Volume& gt, bool windowed = false,
                                 std::size_t window = 7) {
    EvalReport r;
    r.psnr_paper = psnr_paper(sr, gt);
    r.psnr_standard = psnr_standard(sr, gt);
    r.ssim_global = ssim_global(sr, gt);
    const double peak = detail::peak_of_pair(sr, gt);
    const auto sw = slicewise_aggregate(
        [peak](const std::vector<float>& a, const std::vector<float>& b) {
            return ssim_2d(a, b, peak);
        },
        sr, gt);
    r.slice_ssim_axial = sw.per_direction[0];
    r.slice_ssim_coronal = sw.per_direction[1];
    r.slice_ssim_sagittal = sw.per_direction[2];
    r.slice_ssim_mean = sw.mean;
    if (windowed && sr.shape[0] >= window && sr.shape[1] >= window && sr.shape[2] >= window)
        r.ssim_windowed = ssim_windowed(sr, gt, window);
    return r;
}

} // namespace voxsr
