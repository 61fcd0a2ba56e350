#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sdmae/config.hpp"

#include <functional>
#include <string>
#include <vector>

using namespace sdmae;
using config::RunConfig;

namespace {

bool throws_config(const std::function<void()>& fn, const std::string& needle = "") {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind() == ErrorKind::Config &&
               (needle.empty() || std::string(e.what()).find(needle) != std::string::npos);
    }
    return false;
}

}  // namespace

TEST_CASE("defaults validate and parsing nothing yields them") {
    RunConfig def;
    def.validate();
    RunConfig parsed = config::parse_config_text("", {});
    CHECK(parsed.echo() == def.echo());
    CHECK(parsed.hash() == def.hash());
    CHECK(parsed.encoder.depth == 12);
    CHECK(parsed.encoder.dim == 768);
    CHECK(parsed.decoder.depth == 1);
    CHECK(parsed.decoder.dim == 128);
    CHECK(parsed.mask_ratio == 0.75);
    CHECK(parsed.lambda_l == 1.0);
    CHECK(parsed.lambda_c == 0.1);
    CHECK(parsed.tau == 0.2);
    CHECK(parsed.momentum_a == 0.99);
    CHECK(parsed.batch_size == 64);
}

TEST_CASE("echo round-trips exactly, including doubles") {
    RunConfig cfg;
    cfg.seed = 1234567;
    cfg.base_lr = 1.5e-4;
    cfg.mask_ratio = 0.6;
    cfg.tau = 0.07;
    cfg.momentum_a = 0.996;
    cfg.out_dir = "runs/somewhere";
    cfg.data_per_class = 17;
    const std::string echoed = cfg.echo();
    RunConfig back = config::parse_config_text(echoed, {});
    CHECK(back.echo() == echoed);
    CHECK(back.hash() == cfg.hash());
    CHECK(back.base_lr == cfg.base_lr);
    CHECK(back.tau == cfg.tau);
}

TEST_CASE("comments, blank lines and whitespace are tolerated") {
    const std::string text =
        "# a comment\n"
        "\n"
        "  seed = 42   \n"
        "encoder.dim=32\n"
        "\t encoder.heads\t=\t4\n";
    RunConfig cfg = config::parse_config_text(text, {});
    CHECK(cfg.seed == 42);
    CHECK(cfg.encoder.dim == 32);
    CHECK(cfg.encoder.heads == 4);
    // Comments are whole-line only; a trailing '#' lands inside the value.
    CHECK_THROWS_AS(config::parse_config_text("encoder.dim=32 # note\n", {}), Error);
}

TEST_CASE("overrides apply after file text and win") {
    RunConfig cfg = config::parse_config_text("seed=1\nencoder.dim=96\n",
                                              {"seed=9", "decoder.dim=32"});
    CHECK(cfg.seed == 9);
    CHECK(cfg.encoder.dim == 96);
    CHECK(cfg.decoder.dim == 32);
}

TEST_CASE("bad input is rejected with the offending key named") {
    CHECK(throws_config([] { config::parse_config_text("nonsense.key=1\n", {}); },
                        "unknown config key"));
    CHECK(throws_config([] { config::parse_config_text("encoder.dim=abc\n", {}); },
                        "encoder.dim"));
    CHECK(throws_config([] { config::parse_config_text("seed\n", {}); }));
    CHECK(throws_config([] { config::parse_config_text("", {"warmup_epochs=-1"}); }));
    CHECK(throws_config([] { config::parse_config_text("batch_size=1.5\n", {}); },
                        "batch_size"));
}

TEST_CASE("validation guards the cross-field invariants") {
    CHECK(throws_config([] {
        RunConfig c;
        c.mask_ratio = 1.0;
        c.validate();
    }, "mask_ratio"));
    CHECK(throws_config([] {
        RunConfig c;
        c.data_resolution = 30;  // not a multiple of patch 16
        c.validate();
    }));
    CHECK(throws_config([] {
        RunConfig c;
        c.warmup_epochs = 300;  // == total
        c.validate();
    }, "warmup"));
    CHECK(throws_config([] {
        RunConfig c;
        c.total_epochs = 0;  // demands warmup 0 too
        c.validate();
    }, "warmup"));
    CHECK(throws_config([] {
        RunConfig c;
        c.tau = 0.0;
        c.validate();
    }, "tau"));
    CHECK(throws_config([] {
        RunConfig c;
        c.lambda_c = -0.1;
        c.validate();
    }));
    CHECK(throws_config([] {
        RunConfig c;
        c.momentum_a = 1.5;
        c.validate();
    }, "momentum_a"));
    CHECK(throws_config([] {
        RunConfig c;
        c.recon_format = "bmp";
        c.validate();
    }, "recon.format"));

    RunConfig frozen;
    frozen.total_epochs = 0;
    frozen.warmup_epochs = 0;
    frozen.validate();  // a no-training config is legal
}

TEST_CASE("hash tracks trajectory-shaping keys only") {
    RunConfig base;
    const std::uint64_t h = base.hash();

    RunConfig moved = base;
    moved.out_dir = "elsewhere";
    CHECK(moved.hash() == h);

    RunConfig sweeps = base;
    sweeps.sweep_depths = "1,2,4,8";
    sweeps.sweep_dims = "16";
    CHECK(sweeps.hash() == h);

    RunConfig report = base;
    report.recon_count = 9;
    report.recon_format = "png";
    CHECK(report.hash() == h);

    RunConfig paused = base;
    paused.stop_after_epochs = 3;
    CHECK(paused.hash() == h);

    RunConfig seeded = base;
    seeded.seed = 1;
    CHECK(seeded.hash() != h);
    RunConfig masked = base;
    masked.mask_ratio = 0.5;
    CHECK(masked.hash() != h);
    RunConfig wider = base;
    wider.decoder.dim = 256;
    CHECK(wider.hash() != h);
    RunConfig routed = base;
    routed.strong_query_via_momentum = true;
    CHECK(routed.hash() != h);
}

TEST_CASE("model_config derives shapes from data settings") {
    RunConfig cfg;
    cfg.data_resolution = 32;
    cfg.encoder.patch_size = 4;
    model::ModelConfig mc = cfg.model_config();
    CHECK(mc.patch_dim == 48);
    CHECK(mc.n_tokens == 64);
    CHECK(mc.grid_h == 8);
    CHECK(mc.grid_w == 8);
    CHECK(mc.resolved_loc_vocab() == 64);
    CHECK(mc.momentum_a == cfg.momentum_a);
    CHECK(mc.encoder.depth == cfg.encoder.depth);
    CHECK(mc.decoder.dim == cfg.decoder.dim);
}

TEST_CASE("integer lists parse and reject junk") {
    CHECK(config::parse_int_list("1,2,4", "x") == std::vector<int>{1, 2, 4});
    CHECK(config::parse_int_list(" 8 , 16 ", "x") == std::vector<int>{8, 16});
    CHECK(config::parse_int_list("1,,2", "x") == std::vector<int>{1, 2});
    CHECK(throws_config([] { config::parse_int_list("", "axis"); }, "axis"));
    CHECK(throws_config([] { config::parse_int_list("1,two", "axis"); }, "two"));
    CHECK(throws_config([] { config::parse_int_list("1.5", "axis"); }));
}
