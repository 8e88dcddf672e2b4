#pragma once

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "voxsr/checkpoint.hpp"
#include "voxsr/errors.hpp"
#include "voxsr/training.hpp"

namespace voxsr {

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

/// Everything a `train` run needs, resolvable from a JSON config file plus
/// flag overrides. Unknown keys are rejected; the fully resolved form
/// (including defaulted seeds) is written beside the outputs.
struct TrainRunConfig {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string train_index;
    std::string val_index; // empty: validate on the training pairs
    std::string output_dir = ".";
    TrainConfig train;
    EncoderConfig encoder;
    DecoderConfig decoder;
};

inline TrainRunConfig parse_train_config(const nlohmann::json& j) {
    detail::reject_unknown_keys(
        j, {"seed", "threads", "data", "output_dir", "train", "encoder", "decoder"}, "config");
    TrainRunConfig c;
    detail::maybe(j, "seed", c.seed);
    detail::maybe(j, "threads", c.threads);
    detail::maybe(j, "output_dir", c.output_dir);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        detail::reject_unknown_keys(d, {"train_index", "val_index"}, "config.data");
        detail::maybe(d, "train_index", c.train_index);
        detail::maybe(d, "val_index", c.val_index);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown_keys(t,
                                    {"n_pairs_per_step", "k_coords", "lr_init", "decay_factor",
                                     "decay_every_epochs", "total_epochs", "adam_beta1",
                                     "adam_beta2", "adam_eps"},
                                    "config.train");
        detail::maybe(t, "n_pairs_per_step", c.train.n_pairs_per_step);
        detail::maybe(t, "k_coords", c.train.k_coords);
        detail::maybe(t, "lr_init", c.train.lr_init);
        detail::maybe(t, "decay_factor", c.train.decay_factor);
        detail::maybe(t, "decay_every_epochs", c.train.decay_every_epochs);
        detail::maybe(t, "total_epochs", c.train.total_epochs);
        detail::maybe(t, "adam_beta1", c.train.adam_beta1);
        detail::maybe(t, "adam_beta2", c.train.adam_beta2);
        detail::maybe(t, "adam_eps", c.train.adam_eps);
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        detail::reject_unknown_keys(e,
                                    {"variant", "base_channels", "num_blocks", "convs_per_block",
                                     "growth_rate", "out_channels"},
                                    "config.encoder");
        if (e.contains("variant"))
            c.encoder.variant = encoder_variant_from_string(e.at("variant").get<std::string>());
        detail::maybe(e, "base_channels", c.encoder.base_channels);
        detail::maybe(e, "num_blocks", c.encoder.num_blocks);
        detail::maybe(e, "convs_per_block", c.encoder.convs_per_block);
        detail::maybe(e, "growth_rate", c.encoder.growth_rate);
        detail::maybe(e, "out_channels", c.encoder.out_channels);
        // the decoder width must track C unless set explicitly
        if (!j.contains("decoder") || !j.at("decoder").contains("feature_channels"))
            c.decoder.feature_channels = c.encoder.out_channels;
    }
    if (j.contains("decoder")) {
        const auto& d = j.at("decoder");
        detail::reject_unknown_keys(d, {"feature_channels", "hidden_width"}, "config.decoder");
        detail::maybe(d, "feature_channels", c.decoder.feature_channels);
        detail::maybe(d, "hidden_width", c.decoder.hidden_width);
    }
    c.train.seed = c.seed;
    return c;
}

inline nlohmann::json resolved_train_config(const TrainRunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["data"] = {{"train_index", c.train_index}, {"val_index", c.val_index}};
    j["output_dir"] = c.output_dir;
    j["train"] = {{"n_pairs_per_step", c.train.n_pairs_per_step},
                  {"k_coords", c.train.k_coords},
                  {"lr_init", c.train.lr_init},
                  {"decay_factor", c.train.decay_factor},
                  {"decay_every_epochs", c.train.decay_every_epochs},
                  {"total_epochs", c.train.total_epochs},
                  {"adam_beta1", c.train.adam_beta1},
                  {"adam_beta2", c.train.adam_beta2},
                  {"adam_eps", c.train.adam_eps}};
    j["encoder"] = c.encoder;
    j["decoder"] = c.decoder;
    return j;
}

inline void write_resolved_config(const std::filesystem::path& path, const nlohmann::json& j) {
    const std::string s = j.dump(2) + "\n";
    detail::atomic_write_file(path, s.data(), s.size());
}

} // namespace voxsr
