#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxsr/checkpoint.hpp"
#include "voxsr/errors.hpp"
#include "voxsr/field.hpp"
#include "voxsr/networks.hpp"
#include "voxsr/patches.hpp"
#include "voxsr/rng.hpp"

namespace voxsr {

struct TrainConfig {
    std::size_t n_pairs_per_step = 15;
    std::size_t k_coords = 8000;
    double lr_init = 1e-4;
    double decay_factor = 0.5;
    std::size_t decay_every_epochs = 200;
    std::size_t total_epochs = 2500;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_pairs_per_step < 1 || k_coords < 1 || decay_every_epochs < 1)
            throw ConfigError("TrainConfig: counts must be positive");
        if (!(lr_init > 0)) throw ConfigError("TrainConfig: lr_init must be positive");
        if (!(decay_factor > 0.0 && decay_factor <= 1.0))
            throw ConfigError("TrainConfig: decay_factor must be in (0,1]");
        if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1 &&
              adam_eps > 0))
            throw ConfigError("TrainConfig: bad Adam hyperparameters");
    }
};

/// Learning rate for a 0-based epoch index: halved (by decay_factor) every
/// decay_every_epochs epochs.
inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch_index) {
    const auto steps = epoch_index / cfg.decay_every_epochs;
    return cfg.lr_init * std::pow(cfg.decay_factor, static_cast<double>(steps));
}

/// Mean absolute error over all sampled voxels of all pairs in a step.
template <class T>
double l1_loss(std::span<const T> pred, std::span<const T> target) {
    if (pred.size() != target.size()) throw ShapeError("l1_loss: length mismatch");
    if (pred.empty()) throw ShapeError("l1_loss: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        acc += std::fabs(static_cast<double>(target[i]) - static_cast<double>(pred[i]));
    return acc / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Adam with bias correction. Moment buffers mirror the model's parameter
// traversal order.
// ---------------------------------------------------------------------------

template <class T>
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t t = 0;
    std::vector<std::vector<T>> m, v;

    template <class ModelT>
    static AdamState init(SRModel<ModelT>& model, const TrainConfig& cfg) {
        AdamState s;
        s.beta1 = cfg.adam_beta1;
        s.beta2 = cfg.adam_beta2;
        s.eps = cfg.adam_eps;
        model.for_each_param([&](Param<ModelT>& p) {
            s.m.emplace_back(p.numel(), T(0));
            s.v.emplace_back(p.numel(), T(0));
        });
        return s;
    }

    /// One update from the gradients currently stored on the params.
    void step(SRModel<T>& model, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        std::size_t idx = 0;
        model.for_each_param([&](Param<T>& p) {
            auto& mi = m[idx];
            auto& vi = v[idx];
            ++idx;
            for (std::size_t i = 0; i < p.numel(); ++i) {
                const double g = static_cast<double>(p.grad[i]);
                const double mn = beta1 * static_cast<double>(mi[i]) + (1.0 - beta1) * g;
                const double vn = beta2 * static_cast<double>(vi[i]) + (1.0 - beta2) * g * g;
                mi[i] = static_cast<T>(mn);
                vi[i] = static_cast<T>(vn);
                const double update = lr * (mn / c1) / (std::sqrt(vn / c2) + eps);
                p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - update);
            }
        });
    }
};

namespace detail {

/// Encoder forward with retained activations, then backward from the feature
/// gradient, for whichever variant the model holds.
template <class T>
struct EncoderPass {
    std::variant<typename RdnEncoder<T>::State, typename ResConvEncoder<T>::State,
                 typename SrResNetEncoder<T>::State>
        state;

    FeatureGrid<T> forward(SRModel<T>& model, const Volume& lr, unsigned threads) {
        for (std::size_t dim : lr.shape)
            if (dim < kMinEncoderDim)
                throw ShapeError("train_step: LR patch smaller than the encoder minimum");
        std::vector<T> in(lr.numel());
        for (std::size_t i = 0; i < in.size(); ++i) in[i] = static_cast<T>(lr.data[i]);
        FeatureGrid<T> grid(lr.shape[0], lr.shape[1], lr.shape[2],
                            model.encoder_cfg.out_channels);
        std::visit(
            [&](auto& enc) {
                using Enc = std::decay_t<decltype(enc)>;
                state.template emplace<typename Enc::State>();
                auto& st = std::get<typename Enc::State>(state);
                enc.forward(in.data(), lr.shape[0], lr.shape[1], lr.shape[2], st, true, threads);
                grid.v = std::move(st.features);
            },
            model.encoder);
        return grid;
    }

    void backward(SRModel<T>& model, const std::vector<T>& g_features, unsigned threads) {
        std::visit(
            [&](auto& enc) {
                using Enc = std::decay_t<decltype(enc)>;
                enc.backward(std::get<typename Enc::State>(state), g_features, threads);
            },
            model.encoder);
    }
};

} // namespace detail

/// Accumulate the loss gradient for one batch onto the model's params (on top
/// of whatever zero_grad left there) and return the step loss. Each pair is
/// encoded, K HR coordinates are sampled (or taken from `fixed_coords`),
/// features are interpolated at them, and the decoder error backpropagates
/// jointly through decoder, interpolation, and encoder.
template <class T>
double accumulate_step_gradients(SRModel<T>& model, const std::vector<const PatchPair*>& batch,
                                 const TrainConfig& cfg, Rng& rng, unsigned threads = 1,
                                 const std::vector<CoordinateBatch>* fixed_coords = nullptr) {
    if (fixed_coords && fixed_coords->size() != batch.size())
        throw ShapeError("accumulate_step_gradients: fixed_coords size mismatch");
    const std::size_t k = cfg.k_coords;
    const double denom = static_cast<double>(batch.size()) * static_cast<double>(k);
    double abs_sum = 0.0;

    for (std::size_t bi = 0; bi < batch.size(); ++bi) {
        const PatchPair& pair = *batch[bi];
        if (pair.hr.numel() < k)
            throw ShapeError("train_step: HR patch has fewer voxels than k_coords");

        detail::EncoderPass<T> enc;
        FeatureGrid<T> grid = enc.forward(model, pair.lr, threads);
        const CoordinateBatch coords =
            fixed_coords ? (*fixed_coords)[bi] : sample_coordinates(pair.hr, k, rng);
        if (coords.size() != k)
            throw ShapeError("accumulate_step_gradients: coordinate count != k_coords");

        Tensor<T> feats = trilinear_interpolate(grid, coords);

        typename Decoder<T>::State dst;
        dst.n = coords.size();
        const std::size_t in_w = model.decoder_cfg.input_width();
        const std::size_t c = model.decoder_cfg.feature_channels;
        dst.input.resize(dst.n * in_w);
        for (std::size_t i = 0; i < dst.n; ++i) {
            T* row = dst.input.data() + i * in_w;
            row[0] = static_cast<T>(coords.coords[i][0]);
            row[1] = static_cast<T>(coords.coords[i][1]);
            row[2] = static_cast<T>(coords.coords[i][2]);
            const T* fr = feats.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) row[3 + j] = fr[j];
        }
        model.decoder.forward(dst, threads);

        // d|target - pred|/dpred = -sign(target - pred), scaled by 1/(N*K)
        std::vector<T> g_y(dst.n);
        for (std::size_t i = 0; i < dst.n; ++i) {
            const double r = static_cast<double>(dst.y[i]) -
                             static_cast<double>(coords.targets[i]);
            abs_sum += std::fabs(r);
            g_y[i] = static_cast<T>((r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / denom);
        }

        std::vector<T> g_input;
        model.decoder.backward(dst, g_y, g_input, threads);

        Tensor<T> g_feats({dst.n, c});
        for (std::size_t i = 0; i < dst.n; ++i) {
            const T* src = g_input.data() + i * in_w + 3; // coordinate grads are not needed
            T* dstp = g_feats.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) dstp[j] = src[j];
        }
        FeatureGrid<T> grid_grad(grid.shape[0], grid.shape[1], grid.shape[2], grid.channels);
        trilinear_backward(grid_grad, coords, g_feats);
        enc.backward(model, grid_grad.v, threads);
    }

    const double loss = abs_sum / denom;
    if (!std::isfinite(loss)) throw NumericalError("train_step: non-finite loss");
    return loss;
}

/// One optimization step: gradient accumulation over the batch followed by a
/// single Adam update applied jointly to encoder and decoder. Returns the
/// loss measured at the pre-update parameters.
template <class T>
double train_step(SRModel<T>& model, const std::vector<const PatchPair*>& batch,
                  AdamState<T>& opt, const TrainConfig& cfg, double lr, Rng& rng,
                  unsigned threads = 1,
                  const std::vector<CoordinateBatch>* fixed_coords = nullptr) {
    if (batch.size() != cfg.n_pairs_per_step)
        throw ShapeError("train_step: batch size must equal n_pairs_per_step");
    model.zero_grad();
    const double loss = accumulate_step_gradients(model, batch, cfg, rng, threads, fixed_coords);
    opt.step(model, lr);
    return loss;
}

/// Eq-style validation loss with a fixed coordinate sample per pair.
template <class T>
double validation_loss(SRModel<T>& model, const std::vector<PatchPair>& pairs,
                       const std::vector<CoordinateBatch>& coords, unsigned threads = 1) {
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        FeatureGrid<T> grid = encoder_forward(model, pairs[i].lr, threads);
        Tensor<T> feats = trilinear_interpolate(grid, coords[i]);
        Tensor<T> pred = decoder_forward(model, coords[i], feats, threads);
        for (std::size_t j = 0; j < coords[i].size(); ++j)
            abs_sum += std::fabs(static_cast<double>(pred.v[j]) -
                                 static_cast<double>(coords[i].targets[j]));
        count += coords[i].size();
    }
    if (count == 0) throw ShapeError("validation_loss: no coordinates");
    return abs_sum / static_cast<double>(count);
}

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_l1 = 0.0;
    double val_l1 = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::filesystem::path checkpoint_path;
    std::vector<EpochRecord> history;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    bool aborted = false; // a NumericalError stopped training early
    std::string abort_reason;
};

inline void write_loss_history(const std::filesystem::path& path,
                               const std::vector<EpochRecord>& history) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : history)
        j.push_back({{"epoch", r.epoch},
                     {"train_l1", r.train_l1},
                     {"val_l1", r.val_l1},
                     {"lr", r.lr}});
    const std::string s = j.dump(2) + "\n";
    detail::atomic_write_file(path, s.data(), s.size());
}

/// Run the full optimization loop over pre-extracted patch pairs, shuffled
/// each epoch, persisting the checkpoint with the lowest validation loss.
/// With no validation pairs the training pairs stand in (fixed coordinates
/// either way). Pairs beyond the last full batch of an epoch are skipped.
inline TrainResult train(SRModel<float>& model, const TrainConfig& cfg,
                         const std::vector<PatchPair>& train_pairs,
                         const std::vector<PatchPair>& val_pairs,
                         const std::filesystem::path& checkpoint_path, unsigned threads = 1,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
    cfg.validate();
    if (train_pairs.empty()) throw ConfigError("train: no training pairs");
    if (train_pairs.size() < cfg.n_pairs_per_step)
        throw ConfigError("train: fewer pairs than n_pairs_per_step");

    TrainResult result;
    result.checkpoint_path = checkpoint_path;

    if (cfg.total_epochs == 0) {
        save_checkpoint(model, checkpoint_path);
        return result;
    }

    const std::vector<PatchPair>& vps = val_pairs.empty() ? train_pairs : val_pairs;
    std::vector<CoordinateBatch> val_coords;
    val_coords.reserve(vps.size());
    for (std::size_t i = 0; i < vps.size(); ++i) {
        Rng vrng(cfg.seed ^ (0x5DEECE66DULL + i));
        val_coords.push_back(
            sample_coordinates(vps[i].hr, std::min(cfg.k_coords, vps[i].hr.numel()), vrng));
    }

    AdamState<float> opt = AdamState<float>::init(model, cfg);
    Rng data_rng(cfg.seed);
    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t steps_per_epoch = train_pairs.size() / cfg.n_pairs_per_step;
    for (std::size_t e = 0; e < cfg.total_epochs; ++e) {
        const double lr = lr_at_epoch(cfg, e);
        data_rng.shuffle(order);
        double train_sum = 0.0;
        try {
            for (std::size_t s = 0; s < steps_per_epoch; ++s) {
                std::vector<const PatchPair*> batch(cfg.n_pairs_per_step);
                for (std::size_t i = 0; i < cfg.n_pairs_per_step; ++i)
                    batch[i] = &train_pairs[order[s * cfg.n_pairs_per_step + i]];
                train_sum += train_step(model, batch, opt, cfg, lr, data_rng, threads);
            }
        } catch (const NumericalError& err) {
            result.aborted = true;
            result.abort_reason = err.what();
            break;
        }

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr = lr;
        rec.train_l1 = train_sum / static_cast<double>(steps_per_epoch);
        rec.val_l1 = validation_loss(model, vps, val_coords, threads);
        result.history.push_back(rec);
        if (rec.val_l1 < result.best_val) {
            result.best_val = rec.val_l1;
            result.best_epoch = rec.epoch;
            save_checkpoint(model, checkpoint_path);
        }
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

} // namespace voxsr
