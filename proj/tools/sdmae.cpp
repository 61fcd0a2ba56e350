// Command-line front end: pretrain / finetune / sweep / reconstruct / eval
// over the sdmae library. Every run resolves one RunConfig (file, then
// repeatable --set overrides, then the --out/--seed shorthands), echoes it
// to the output directory, and leaves a short summary.txt next to it.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "sdmae/checkpoint.hpp"
#include "sdmae/config.hpp"
#include "sdmae/image_io.hpp"
#include "sdmae/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdmae;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::string seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (key=value lines)");
    cmd->add_option("--set", args.sets, "Override one config key (repeatable)")
        ->type_name("KEY=VALUE");
    cmd->add_option("--out", args.out, "Output directory (shorthand for --set out_dir=...)");
    cmd->add_option("--seed", args.seed, "Run seed (shorthand for --set seed=...)");
}

config::RunConfig resolve(const CommonArgs& args) {
    std::vector<std::string> overrides = args.sets;
    if (!args.out.empty()) overrides.push_back("out_dir=" + args.out);
    if (!args.seed.empty()) overrides.push_back("seed=" + args.seed);
    return config::parse_config(args.config_path, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) throw_io("cannot write " + path.string());
}

// The resolved settings land in the output directory before any work, so
// a run is reproducible from its artifacts alone.
void echo_config(const config::RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw_io("cannot create output directory " + cfg.out_dir + ": " + ec.message());
    write_text(fs::path(cfg.out_dir) / "config.echo", cfg.echo());
}

void finish(const config::RunConfig& cfg, const std::string& summary) {
    write_text(fs::path(cfg.out_dir) / "summary.txt", summary);
    std::cout << summary;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

int cmd_pretrain(const CommonArgs& args, const std::string& resume) {
    config::RunConfig cfg = resolve(args);
    echo_config(cfg);
    trainer::Pretrainer t(cfg);
    const checkpoint::Checkpoint done = t.run(resume);

    std::ostringstream s;
    s << "command: pretrain\n"
      << "epochs: " << done.epoch << "\n"
      << "steps: " << done.step << "\n"
      << "final_checkpoint: "
      << (fs::path(cfg.out_dir) / "checkpoints" / "final.ckpt").string() << "\n";
    finish(cfg, s.str());
    return 0;
}

int cmd_finetune(const CommonArgs& args) {
    config::RunConfig cfg = resolve(args);
    echo_config(cfg);
    const trainer::EvalReport report = trainer::finetune(cfg);

    std::ostringstream s;
    s << "command: finetune\n"
      << "epochs: " << report.loss_curve.size() << "\n"
      << "top1: " << format_double(report.top1) << "\n"
      << "classifier_checkpoint: "
      << (fs::path(cfg.out_dir) / "checkpoints" / "classifier.ckpt").string() << "\n";
    finish(cfg, s.str());
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    config::RunConfig cfg = resolve(args);
    echo_config(cfg);
    const std::vector<trainer::SweepRow> rows = trainer::decoder_sweep(cfg);

    const trainer::SweepRow* best = nullptr;
    int failures = 0;
    for (const auto& r : rows) {
        if (r.failed) {
            ++failures;
        } else if (!best || r.top1 > best->top1) {
            best = &r;
        }
    }
    std::ostringstream s;
    s << "command: sweep\n"
      << "cells: " << rows.size() << "\n"
      << "failed_cells: " << failures << "\n";
    if (best) {
        s << "best_cell: depth=" << best->depth << " dim=" << best->dim
          << " top1=" << format_double(best->top1) << "\n";
    }
    s << "table: " << (fs::path(cfg.out_dir) / "sweep.csv").string() << "\n";
    finish(cfg, s.str());
    return 0;
}

int cmd_reconstruct(const CommonArgs& args, const std::string& ckpt_path) {
    config::RunConfig cfg = resolve(args);
    echo_config(cfg);
    trainer::Pretrainer t(cfg);
    t.restore(checkpoint::load_checkpoint(ckpt_path));

    const auto test = trainer::load_test(cfg);
    const int count = std::min<int>(cfg.recon_count, static_cast<int>(test.size()));
    const fs::path dir = fs::path(cfg.out_dir) / "recon";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw_io("cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream s;
    s << "command: reconstruct\ncheckpoint: " << ckpt_path << "\nimages: " << count << "\n";
    for (int i = 0; i < count; ++i) {
        const dataio::PatchSequence seq = dataio::patchify(test[i], cfg.encoder.patch_size);
        const masking::MaskPlan plan = trainer::recon_mask_plan(cfg, i);
        const Mat pred = trainer::predict_all_patches(t.model(), seq.tokens, plan);
        const dataio::ImageRecord tri =
            image_io::triptych(test[i], plan, pred, cfg.encoder.patch_size);
        const std::string stem = (dir / ("recon_" + std::to_string(i))).string();
        s << "file: " << image_io::write_image(stem, cfg.recon_format, tri) << "\n";
    }
    finish(cfg, s.str());
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& ckpt_path) {
    config::RunConfig cfg = resolve(args);
    echo_config(cfg);
    const double top1 = trainer::eval_classifier(cfg, ckpt_path);

    std::ostringstream s;
    s << "command: eval\ncheckpoint: " << ckpt_path << "\ntop1: " << format_double(top1)
      << "\n";
    finish(cfg, s.str());
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Data: return 3;
        case ErrorKind::Numeric: return 4;
        case ErrorKind::Io: return 5;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked-autoencoder pretraining for small datasets"};
    app.require_subcommand(1);

    CommonArgs pre_args, ft_args, sweep_args, recon_args, eval_args;
    std::string resume, recon_ckpt, eval_ckpt;

    CLI::App* pre = app.add_subcommand("pretrain", "Self-supervised pretraining run");
    add_common(pre, pre_args);
    pre->add_option("--resume", resume, "Continue from a pretrain checkpoint");

    CLI::App* ft = app.add_subcommand("finetune", "Supervised classifier training");
    add_common(ft, ft_args);

    CLI::App* sweep = app.add_subcommand("sweep", "Decoder depth x width study");
    add_common(sweep, sweep_args);

    CLI::App* recon = app.add_subcommand("reconstruct", "Dump input|masked|prediction panels");
    add_common(recon, recon_args);
    recon->add_option("--checkpoint", recon_ckpt, "Pretrain checkpoint to visualize")
        ->required();

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved classifier");
    add_common(eval, eval_args);
    eval->add_option("--checkpoint", eval_ckpt, "Classifier checkpoint to score")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) return cmd_pretrain(pre_args, resume);
        if (ft->parsed()) return cmd_finetune(ft_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (recon->parsed()) return cmd_reconstruct(recon_args, recon_ckpt);
        if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
