#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdmae/model.hpp"

namespace sdmae::config {

// Fully resolved run settings. Defaults are the full-scale recipe; toy runs
// override the handful of keys they need. Field order here matches the key
// table in config.cpp, which drives parsing, echoing and hashing together.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";

    // dataset selection
    std::string data_source = "synthetic";  // "synthetic" | "cifar"
    std::string data_path;                  // cifar file or directory
    int data_classes = 4;                   // synthetic class count
    int data_per_class = 128;               // synthetic images per class
    int data_resolution = 32;               // square image side

    // Augmentation intensity: 1 = the full two-view recipe, 0 = both views
    // pinned to the untouched frame, in between a linear blend of the two.
    double augment_scale = 1.0;

    model::EncoderConfig encoder;  // depth 12, dim 768, heads 12, patch 16
    model::DecoderConfig decoder;  // depth 1, dim 128, heads 4
    bool strong_query_via_momentum = false;

    // optimization schedule
    double base_lr = 1e-3;
    int warmup_epochs = 40;
    int total_epochs = 300;
    int batch_size = 64;
    double weight_decay = 0.05;
    double mask_ratio = 0.75;
    double lambda_l = 1.0;
    double lambda_c = 0.1;
    double tau = 0.2;
    double momentum_a = 0.99;

    // Stop a pretrain run after this many epochs while keeping the full
    // schedule (0 = run to completion). Lets a run be interrupted cleanly
    // and resumed later without changing its trajectory hash.
    int stop_after_epochs = 0;

    std::string finetune_init;  // checkpoint to start finetune from; empty = random

    std::string sweep_depths = "1,2,4";
    std::string sweep_dims = "64,128,256";

    int recon_count = 4;
    std::string recon_format = "ppm";  // "ppm" | "png"

    void validate() const;

    // Shape bundle derived from encoder/decoder/data settings.
    model::ModelConfig model_config() const;

    // Canonical key=value text; parse(echo()) reproduces this config.
    std::string echo() const;

    // Hash over the trajectory-shaping keys (everything except output
    // destinations and report-only knobs); guards checkpoint resume.
    std::uint64_t hash() const;
};

// Parse a key=value file ('#' comments, blank lines allowed), then apply
// overrides of the same form, then validate. An empty path yields defaults.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

// Same, from in-memory text.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides);

// "1,2,4" -> {1,2,4}; used for the sweep axes.
std::vector<int> parse_int_list(const std::string& text, const std::string& what);

}  // namespace sdmae::config
