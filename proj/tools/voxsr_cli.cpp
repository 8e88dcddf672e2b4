// voxsr: single-image super-resolution for 3D volumes at arbitrary scale.
// Subcommands cover the whole pipeline: simulate -> train -> sr -> eval.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxsr/dataset.hpp"
#include "voxsr/errors.hpp"
#include "voxsr/inference.hpp"
#include "voxsr/metrics.hpp"
#include "voxsr/patches.hpp"
#include "voxsr/run_config.hpp"
#include "voxsr/training.hpp"
#include "voxsr/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_vvol_dir(const fs::path& p) {
    return fs::is_directory(p) && fs::exists(p / "header.json");
}

std::vector<fs::path> collect_volumes(const fs::path& in) {
    std::vector<fs::path> vols;
    if (fs::is_directory(in) && !is_vvol_dir(in)) {
        for (const auto& e : fs::directory_iterator(in)) {
            if (e.path().extension() == ".nii" || is_vvol_dir(e.path()))
                vols.push_back(e.path());
        }
        std::sort(vols.begin(), vols.end());
    } else {
        vols.push_back(in);
    }
    if (vols.empty()) throw voxsr::IoError("no input volumes under " + in.string());
    return vols;
}

fs::path sibling_config_path(const fs::path& output) {
    if (fs::is_directory(output)) return output / "resolved_config.json";
    return fs::path(output.string() + ".config.json");
}

int run_simulate(const fs::path& in, const fs::path& out, std::size_t patches,
                 std::size_t lr_size, double kmin, double kmax, std::uint64_t seed,
                 std::size_t crop_size, bool normalize) {
    fs::create_directories(out);
    const auto inputs = collect_volumes(in);
    std::size_t written = 0;
    json sources = json::array();
    for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
        voxsr::Volume v = voxsr::read_volume(inputs[vi], voxsr::guess_format(inputs[vi]));
        if (normalize) v = voxsr::normalize_intensity(v);
        voxsr::ScaleSampler sampler(kmin, kmax, seed + vi);
        auto pairs = voxsr::extract_training_pairs(v, patches, lr_size, sampler, crop_size);
        voxsr::write_pairs_dataset(out, pairs, written);
        written += pairs.size();
        sources.push_back(inputs[vi].string());
    }
    json resolved = {{"command", "simulate"},
                     {"in", in.string()},
                     {"out", out.string()},
                     {"patches", patches},
                     {"lr_size", lr_size},
                     {"kmin", kmin},
                     {"kmax", kmax},
                     {"seed", seed},
                     {"crop_size", crop_size},
                     {"normalize", normalize},
                     {"sources", sources}};
    voxsr::write_resolved_config(out / "resolved_config.json", resolved);
    std::cout << "wrote " << written << " pairs to " << out.string() << "\n";
    return 0;
}

int run_train(voxsr::TrainRunConfig cfg) {
    if (cfg.train_index.empty())
        throw voxsr::ConfigError("train: data.train_index is required");
    cfg.train.validate();
    const fs::path out_dir = cfg.output_dir;
    fs::create_directories(out_dir);
    voxsr::write_resolved_config(out_dir / "resolved_config.json",
                                 voxsr::resolved_train_config(cfg));

    auto train_pairs = voxsr::load_pairs_dataset(cfg.train_index);
    std::vector<voxsr::PatchPair> val_pairs;
    if (!cfg.val_index.empty()) val_pairs = voxsr::load_pairs_dataset(cfg.val_index);

    auto model = voxsr::init_model<float>(cfg.encoder, cfg.decoder, cfg.seed);
    std::cout << "model parameters: " << model.param_count() << "\n";

    const fs::path ckpt = out_dir / "best.ckpt";
    auto result = voxsr::train(model, cfg.train, train_pairs, val_pairs, ckpt, cfg.threads,
                               [](const voxsr::EpochRecord& r) {
                                   std::cout << "epoch " << r.epoch << "  train_l1 " << r.train_l1
                                             << "  val_l1 " << r.val_l1 << "  lr " << r.lr
                                             << std::endl;
                               });
    voxsr::write_loss_history(out_dir / "loss_history.json", result.history);
    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason
                  << " (last good checkpoint retained)\n";
        return 2;
    }
    std::cout << "best epoch " << result.best_epoch << " (val_l1 " << result.best_val << ") -> "
              << ckpt.string() << "\n";
    return 0;
}

int run_sr(const fs::path& checkpoint, const fs::path& input, const fs::path& output,
           double scale, std::size_t chunk_size, bool clamp, bool normalize,
           std::size_t tile_budget, unsigned threads) {
    auto model = voxsr::load_checkpoint(checkpoint);
    voxsr::Volume lr = voxsr::read_volume(input, voxsr::guess_format(input));
    if (normalize) lr = voxsr::normalize_intensity(lr);

    voxsr::SRRequest req;
    req.scale = scale;
    req.chunk_size = chunk_size;
    req.clamp_output = clamp;
    req.encode_tile_budget = tile_budget;
    voxsr::Volume out = voxsr::super_resolve(model, lr, req, threads);
    voxsr::write_volume(out, output, voxsr::guess_format(output));

    json resolved = {{"command", "sr"},
                     {"checkpoint", checkpoint.string()},
                     {"input", input.string()},
                     {"output", output.string()},
                     {"scale", scale},
                     {"chunk_size", chunk_size},
                     {"clamp", clamp},
                     {"normalize", normalize},
                     {"encode_tile_budget", tile_budget},
                     {"threads", threads}};
    voxsr::write_resolved_config(sibling_config_path(output), resolved);
    std::cout << "wrote " << out.shape[0] << "x" << out.shape[1] << "x" << out.shape[2] << " -> "
              << output.string() << "\n";
    return 0;
}

void print_metric(const char* name, double v) {
    if (std::isinf(v))
        std::printf("  %-14s %s\n", name, "inf (identical)");
    else
        std::printf("  %-14s %.4f\n", name, v);
}

int run_eval(const fs::path& sr_path, const fs::path& gt_path, const fs::path& report_path,
             bool windowed, double scale_label) {
    voxsr::Volume sr = voxsr::read_volume(sr_path, voxsr::guess_format(sr_path));
    voxsr::Volume gt = voxsr::read_volume(gt_path, voxsr::guess_format(gt_path));
    voxsr::EvalReport rep = voxsr::compute_report(sr, gt, windowed);
    rep.sr_id = sr_path.filename().string();
    rep.gt_id = gt_path.filename().string();
    if (scale_label > 0) rep.scale = scale_label;

    std::printf("%-8s | psnr_paper | psnr_std | ssim_global | slice_ssim\n",
                scale_label > 0 ? (std::to_string(scale_label) + "x").c_str() : "scale ?");
    auto cell = [](double v) {
        return std::isinf(v) ? std::string("inf") : std::to_string(v).substr(0, 7);
    };
    std::printf("%-8s | %10s | %8s | %11s | %10s\n", "",
                cell(rep.psnr_paper).c_str(), cell(rep.psnr_standard).c_str(),
                cell(rep.ssim_global).c_str(), cell(rep.slice_ssim_mean.value_or(0)).c_str());
    print_metric("psnr_paper", rep.psnr_paper);
    print_metric("psnr_standard", rep.psnr_standard);
    print_metric("ssim_global", rep.ssim_global);
    if (rep.ssim_windowed) print_metric("ssim_windowed", *rep.ssim_windowed);
    print_metric("slice_ssim", rep.slice_ssim_mean.value_or(0));

    if (!report_path.empty()) {
        const json j = rep;
        const std::string s = j.dump(2) + "\n";
        voxsr::detail::atomic_write_file(report_path, s.data(), s.size());
        json resolved = {{"command", "eval"},
                         {"sr", sr_path.string()},
                         {"gt", gt_path.string()},
                         {"report", report_path.string()},
                         {"windowed_ssim", windowed},
                         {"scale", scale_label}};
        voxsr::write_resolved_config(sibling_config_path(report_path), resolved);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"arbitrary-scale super-resolution for 3D volumes"};
    app.require_subcommand(1);
    unsigned threads = voxsr::default_threads();
    app.add_option("--threads", threads, "worker threads for forward passes");

    // simulate
    auto* sim = app.add_subcommand("simulate", "extract LR/HR training patch pairs");
    std::string sim_in, sim_out;
    std::size_t sim_patches = 6, sim_lr_size = 10, sim_crop = 40;
    double sim_kmin = 2.0, sim_kmax = 4.0;
    std::uint64_t sim_seed = 0;
    bool sim_no_norm = false;
    sim->add_option("--in", sim_in, "input volume or directory of volumes")->required();
    sim->add_option("--out", sim_out, "output dataset directory")->required();
    sim->add_option("--patches", sim_patches, "patches per input volume");
    sim->add_option("--lr-size", sim_lr_size, "LR patch side");
    sim->add_option("--kmin", sim_kmin, "minimum sampled scale");
    sim->add_option("--kmax", sim_kmax, "maximum sampled scale");
    sim->add_option("--seed", sim_seed, "RNG seed");
    sim->add_option("--crop-size", sim_crop, "random crop side before center-cropping");
    sim->add_flag("--no-normalize", sim_no_norm, "skip per-volume min-max normalization");

    // train
    auto* tr = app.add_subcommand("train", "optimize a model on a simulated dataset");
    std::string tr_config;
    std::string tr_out, tr_train_index, tr_val_index;
    std::int64_t tr_epochs = -1;
    std::int64_t tr_seed = -1;
    tr->add_option("--config", tr_config, "JSON config file")->required();
    tr->add_option("--epochs", tr_epochs, "override train.total_epochs");
    tr->add_option("--seed", tr_seed, "override seed");
    tr->add_option("--out", tr_out, "override output_dir");
    tr->add_option("--train-index", tr_train_index, "override data.train_index");
    tr->add_option("--val-index", tr_val_index, "override data.val_index");

    // sr
    auto* srs = app.add_subcommand("sr", "super-resolve a volume with a trained model");
    std::string sr_ckpt, sr_in, sr_out;
    double sr_scale = 2.0;
    std::size_t sr_chunk = 65536, sr_budget = 2u << 20;
    std::string sr_clamp = "on";
    bool sr_no_norm = false;
    srs->add_option("--checkpoint", sr_ckpt, "model checkpoint")->required();
    srs->add_option("--input", sr_in, "LR input volume")->required();
    srs->add_option("--output", sr_out, "output volume path")->required();
    srs->add_option("--scale", sr_scale, "up-sampling scale (real, >= 1)")->required();
    srs->add_option("--chunk-size", sr_chunk, "coordinates decoded per batch");
    srs->add_option("--clamp", sr_clamp, "clamp output to [0,1]: on|off")
        ->check(CLI::IsMember({"on", "off"}));
    srs->add_option("--encode-tile-budget", sr_budget, "max voxels encoded at once");
    srs->add_flag("--no-normalize", sr_no_norm, "skip input min-max normalization");

    // eval
    auto* ev = app.add_subcommand("eval", "reference-based quality metrics");
    std::string ev_sr, ev_gt, ev_report;
    bool ev_windowed = false;
    double ev_scale = 0.0;
    ev->add_option("--sr", ev_sr, "reconstructed volume")->required();
    ev->add_option("--gt", ev_gt, "reference volume")->required();
    ev->add_option("--report", ev_report, "write the JSON report here");
    ev->add_flag("--windowed-ssim", ev_windowed, "also compute 7^3 windowed SSIM");
    ev->add_option("--scale", ev_scale, "scale label recorded in the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*sim)
            return run_simulate(sim_in, sim_out, sim_patches, sim_lr_size, sim_kmin, sim_kmax,
                                sim_seed, sim_crop, !sim_no_norm);
        if (*tr) {
            std::ifstream f(tr_config);
            if (!f) throw voxsr::IoError("cannot open config: " + tr_config);
            json j;
            try {
                f >> j;
            } catch (const json::exception& e) {
                throw voxsr::ConfigError("invalid config JSON: " + std::string(e.what()));
            }
            auto cfg = voxsr::parse_train_config(j);
            if (tr_epochs >= 0) cfg.train.total_epochs = static_cast<std::size_t>(tr_epochs);
            if (tr_seed >= 0) {
                cfg.seed = static_cast<std::uint64_t>(tr_seed);
                cfg.train.seed = cfg.seed;
            }
            if (!tr_out.empty()) cfg.output_dir = tr_out;
            if (!tr_train_index.empty()) cfg.train_index = tr_train_index;
            if (!tr_val_index.empty()) cfg.val_index = tr_val_index;
            if (app.count("--threads")) cfg.threads = threads;
            return run_train(cfg);
        }
        if (*srs)
            return run_sr(sr_ckpt, sr_in, sr_out, sr_scale, sr_chunk, sr_clamp == "on",
                          !sr_no_norm, sr_budget, threads);
        if (*ev) return run_eval(ev_sr, ev_gt, ev_report, ev_windowed, ev_scale);
    } catch (const voxsr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
