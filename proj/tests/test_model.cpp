#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sdmae/ad.hpp"
#include "sdmae/kernels.hpp"
#include "sdmae/masking.hpp"
#include "sdmae/model.hpp"
#include "sdmae/rng.hpp"

using namespace sdmae;
using model::Branch;
using model::ModelConfig;
using model::ProjAct;

namespace {

// 32x32 images, 4x4 patches: 64 tokens of dim 48, encoder 2x64, decoder 1x32.
ModelConfig toy_cfg() {
    ModelConfig cfg;
    cfg.encoder = {2, 64, 4, 4.0, 4, 0.0};
    cfg.decoder = {1, 32, 4};
    cfg.patch_dim = 48;
    cfg.n_tokens = 64;
    cfg.grid_h = 8;
    cfg.grid_w = 8;
    return cfg;
}

// Small enough that finite differences through the whole model stay cheap.
ModelConfig micro_cfg() {
    ModelConfig cfg;
    cfg.encoder = {1, 8, 2, 2.0, 2, 0.0};
    cfg.decoder = {1, 8, 2};
    cfg.patch_dim = 8;
    cfg.n_tokens = 4;
    cfg.grid_h = 2;
    cfg.grid_w = 2;
    cfg.feature_depth = 1;
    cfg.feature_heads = 2;
    return cfg;
}

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (auto& v : m.data) v = scale * rng.normal();
    return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
    REQUIRE(a.same_shape(b));
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    return worst;
}

bool all_zero(const Mat& m) {
    for (double v : m.data) {
        if (v != 0.0) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("parameter enumeration: hand-counted sizes") {
    auto specs = model::enumerate_params(toy_cfg());

    // Encoder, counted by hand: patch_embed 48*64+64, cls 64, two blocks of
    // (2*64 + 4*(64*64+64) + 2*64 + 64*256+256+256*64+64) = 49984, norm 128.
    CHECK(model::count_params(specs, "encoder.") == 3136u + 64u + 2u * 49984u + 128u);
    CHECK(model::count_params(specs, "encoder.") == 103296u);

    // Location head: 64*32 + 32 + 32*64 + 64.
    CHECK(model::count_params(specs, "loc.") == 4192u);

    // Decoder: mask 64, embed 64*32+32, one width-32 block 12704, norm 64,
    // pixel head 32*48+48.
    CHECK(model::count_params(specs, "decoder.") == 64u + 2080u + 12704u + 64u + 1584u);

    // Feature towers are congruent; projector expands 32 -> 64 -> 32.
    CHECK(model::count_params(specs, "feat_q.") == model::count_params(specs, "feat_k."));
    CHECK(model::count_params(specs, "feat_q.") == 2u * 12704u + 64u);
    CHECK(model::count_params(specs, "proj.") == 32u * 64u + 64u + 64u * 32u + 32u);

    // No unnamed leftovers: the five families cover everything.
    size_t total = 0;
    for (const auto& s : specs) total += static_cast<size_t>(s.rows) * s.cols;
    CHECK(total == model::count_params(specs, "encoder.") + model::count_params(specs, "loc.") +
                       model::count_params(specs, "decoder.") +
                       model::count_params(specs, "feat_q.") +
                       model::count_params(specs, "feat_k.") + model::count_params(specs, "proj."));
}

TEST_CASE("parameter enumeration: location head stays tiny") {
    // Base-scale shapes: 224/16 -> 196 tokens of dim 768, encoder 12x768.
    ModelConfig base;
    base.encoder = {12, 768, 12, 4.0, 16, 0.0};
    base.decoder = {1, 128, 4};
    base.patch_dim = 768;
    base.n_tokens = 196;
    base.grid_h = 14;
    base.grid_w = 14;
    auto specs = model::enumerate_params(base);

    // 768*384 + 384 + 384*196 + 196, against ~85.6M encoder weights.
    const size_t loc = model::count_params(specs, "loc.");
    const size_t enc = model::count_params(specs, "encoder.");
    CHECK(loc == 370756u);
    CHECK(enc == 85647360u);
    CHECK(static_cast<double>(loc) < 0.01 * static_cast<double>(enc));

    // At the toy scale the fixed biases weigh more; still under five percent.
    auto toy_specs = model::enumerate_params(toy_cfg());
    CHECK(static_cast<double>(model::count_params(toy_specs, "loc.")) <
          0.05 * static_cast<double>(model::count_params(toy_specs, "encoder.")));
}

TEST_CASE("config validation rejects malformed shapes") {
    auto bad = [](auto&& tweak) {
        ModelConfig cfg = toy_cfg();
        tweak(cfg);
        CHECK_THROWS_AS(cfg.validate(), Error);
    };
    bad([](ModelConfig& c) { c.encoder.dim = 66; });       // not a multiple of 4
    bad([](ModelConfig& c) { c.encoder.heads = 5; });      // 64 % 5 != 0
    bad([](ModelConfig& c) { c.encoder.depth = 0; });
    bad([](ModelConfig& c) { c.decoder.dim = 30; });
    bad([](ModelConfig& c) { c.grid_w = 7; });              // 8*7 != 64
    bad([](ModelConfig& c) { c.loc_vocab = 1; });
    bad([](ModelConfig& c) { c.momentum_a = 1.5; });
    bad([](ModelConfig& c) { c.feature_heads = 3; });       // 32 % 3 != 0
    bad([](ModelConfig& c) { c.encoder.drop_path = 1.0; });
    CHECK_NOTHROW(toy_cfg().validate());
    CHECK(toy_cfg().resolved_loc_vocab() == 64);
}

TEST_CASE("construction is seed-deterministic and towers start equal") {
    model::SdmaeModel a(toy_cfg(), 11);
    model::SdmaeModel b(toy_cfg(), 11);
    model::SdmaeModel c(toy_cfg(), 12);

    const auto& pa = a.store().all();
    const auto& pb = b.store().all();
    REQUIRE(pa.size() == pb.size());
    bool identical = true, differs_from_c = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->value.data != pb[i]->value.data) identical = false;
        if (pa[i]->value.data != c.store().all()[i]->value.data) differs_from_c = true;
    }
    CHECK(identical);
    CHECK(differs_from_c);

    // feat_k is a bitwise copy of feat_q at init, and is not trainable.
    for (const auto& p : pa) {
        if (p->name.rfind("feat_k.", 0) != 0) continue;
        CHECK_FALSE(p->trainable);
        CHECK(p->value.data == a.store().get("feat_q." + p->name.substr(7)).value.data);
    }
}

TEST_CASE("forward shapes across every stage") {
    model::SdmaeModel m(toy_cfg(), 3);
    Rng rng(99);
    const int nv = 16;
    std::vector<int> idx;
    for (int i = 0; i < nv; ++i) idx.push_back(i * 4);  // 0,4,...,60
    Mat vis = random_mat(nv, 48, rng, 0.5);

    ad::Graph g;
    ad::Var z = m.encode_visible(g, vis, idx);
    CHECK(z.rows() == 1 + nv);
    CHECK(z.cols() == 64);

    ad::Var cls = g.slice_rows(z, 0, 1);
    ad::Var zvis = g.slice_rows(z, 1, nv);
    ad::Var locs = m.predict_locations(g, zvis);
    CHECK(locs.rows() == nv);
    CHECK(locs.cols() == 64);  // vocab defaults to the token count

    ad::Var filled = g.reassemble(zvis, g.param(m.store().get("decoder.mask_token")), idx, 64);
    std::vector<ad::Var> parts{cls, filled};
    ad::Var z_all = g.concat_rows(parts);
    auto [tokens, pixels] = m.decode_all(g, z_all);
    CHECK(tokens.rows() == 65);
    CHECK(tokens.cols() == 32);
    CHECK(pixels.rows() == 64);
    CHECK(pixels.cols() == 48);

    ad::Var feat = m.feature_encode(g, tokens, Branch::Query);
    CHECK(feat.rows() == 65);
    CHECK(feat.cols() == 32);
    ad::Var q = m.project(g, g.slice_rows(feat, 0, 1));
    CHECK(q.rows() == 1);
    CHECK(q.cols() == 32);

    CHECK(m.encoder_pos().rows == 65);
    CHECK(m.encoder_pos().cols == 64);
    CHECK(m.decoder_pos().rows == 65);
    CHECK(m.decoder_pos().cols == 32);
}

TEST_CASE("encoder is equivariant to visible-token order") {
    model::SdmaeModel m(toy_cfg(), 21);
    Rng rng(5);
    std::vector<int> idx{3, 17, 20, 41, 42, 55};
    const int nv = static_cast<int>(idx.size());
    Mat vis = random_mat(nv, 48, rng, 0.3);

    // Feed the same set in a shuffled order.
    std::vector<int> perm{4, 0, 5, 2, 1, 3};
    std::vector<int> idx2(nv);
    Mat vis2(nv, 48);
    for (int i = 0; i < nv; ++i) {
        idx2[i] = idx[perm[i]];
        std::memcpy(vis2.row_ptr(i), vis.row_ptr(perm[i]), sizeof(double) * 48);
    }

    ad::Graph g1, g2;
    const Mat& z1 = m.encode_visible(g1, vis, idx).value();
    const Mat& z2 = m.encode_visible(g2, vis2, idx2).value();

    // Attention sums run in a different key order, so allow tiny fp noise.
    for (int c = 0; c < 64; ++c) {
        CHECK(std::abs(z1.at(0, c) - z2.at(0, c)) < 1e-9);  // class row unmoved
    }
    for (int i = 0; i < nv; ++i) {
        for (int c = 0; c < 64; ++c) {
            CHECK(std::abs(z1.at(1 + perm[i], c) - z2.at(1 + i, c)) < 1e-9);
        }
    }
}

TEST_CASE("encoder input validation") {
    model::SdmaeModel m(toy_cfg(), 1);
    ad::Graph g;
    Rng rng(1);
    Mat ok = random_mat(4, 48, rng);
    std::vector<int> idx{0, 1, 2, 3};

    Mat wrong_width = random_mat(4, 47, rng);
    CHECK_THROWS_AS(m.encode_visible(g, wrong_width, idx), Error);

    std::vector<int> out_of_range{0, 1, 2, 64};
    CHECK_THROWS_AS(m.encode_visible(g, ok, out_of_range), Error);

    std::vector<int> short_idx{0, 1};
    CHECK_THROWS_AS(m.encode_visible(g, ok, short_idx), Error);

    Mat with_nan = ok;
    with_nan.at(2, 7) = std::nan("");
    try {
        m.encode_visible(g, with_nan, idx);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Numeric);
    }

    ad::Graph g2;
    ad::Var bad_shape = g2.constant(random_mat(64, 64, rng));  // needs 65 rows
    CHECK_THROWS_AS(m.decode_all(g2, bad_shape), Error);
}

TEST_CASE("momentum branch is a stop-gradient copy of the query branch") {
    ModelConfig cfg = toy_cfg();
    model::SdmaeModel m(cfg, 7);
    Rng rng(40);
    Mat dec_tokens = random_mat(65, 32, rng, 0.4);
    Mat zeros(1, 1);

    // At init both towers hold identical weights, so on the same input the
    // two branches agree bitwise.
    {
        ad::Graph g;
        ad::Var in = g.constant(dec_tokens);
        // copy: growing the graph for the second branch reallocates nodes
        const Mat kq = m.feature_encode(g, in, Branch::Query).value();
        const Mat kk = m.feature_encode(g, in, Branch::Momentum).value();
        CHECK(kq.data == kk.data);
    }

    // A loss on the momentum output reaches no parameter at all.
    {
        ad::Graph g;
        ad::Var k = m.feature_encode(g, g.constant(dec_tokens), Branch::Momentum);
        ad::Var loss = g.mse_const(g.slice_rows(k, 0, 1), Mat(1, 32));
        g.backward(loss);
        for (const auto& p : m.store().all()) CHECK(all_zero(p->grad));
    }

    // The same loss on the query output does reach feat_q (and only feat_q).
    {
        m.store().zero_grads();
        ad::Graph g;
        ad::Var q = m.feature_encode(g, g.constant(dec_tokens), Branch::Query);
        ad::Var loss = g.mse_const(g.slice_rows(q, 0, 1), Mat(1, 32));
        g.backward(loss);
        bool any_q = false;
        for (const auto& p : m.store().all()) {
            if (p->name.rfind("feat_q.", 0) == 0) {
                if (!all_zero(p->grad)) any_q = true;
            } else {
                CHECK(all_zero(p->grad));
            }
        }
        CHECK(any_q);
    }

    // feature_encode(Momentum) also detaches a graph-connected input: grads
    // upstream of it stay zero even when the input came from the decoder.
    {
        m.store().zero_grads();
        ad::Graph g;
        std::vector<int> idx;
        for (int i = 0; i < 16; ++i) idx.push_back(i);
        Mat vis = random_mat(16, 48, rng, 0.3);
        ad::Var z = m.encode_visible(g, vis, idx);
        ad::Var filled = g.reassemble(g.slice_rows(z, 1, 16),
                                      g.param(m.store().get("decoder.mask_token")), idx, 64);
        std::vector<ad::Var> parts{g.slice_rows(z, 0, 1), filled};
        auto [tokens, pixels] = m.decode_all(g, g.concat_rows(parts));
        (void)pixels;
        ad::Var k = m.feature_encode(g, tokens, Branch::Momentum);
        ad::Var loss = g.mse_const(g.slice_rows(k, 0, 1), Mat(1, 32));
        g.backward(loss);
        for (const auto& p : m.store().all()) CHECK(all_zero(p->grad));
    }
}

TEST_CASE("ema_update blends exactly and respects endpoints") {
    auto perturb_q = [](model::SdmaeModel& m) {
        Rng r(123);
        for (auto& p : m.store().all()) {
            if (p->name.rfind("feat_q.", 0) == 0) {
                for (auto& v : p->value.data) v += r.uniform(-0.5, 0.5);
            }
        }
    };

    // a = 0.99: k' = a*k + (1-a)*q elementwise, computed here independently.
    {
        const double a = 0.99;
        model::SdmaeModel m(toy_cfg(), 2);
        perturb_q(m);
        std::vector<std::vector<double>> k_before;
        std::vector<std::vector<double>> q_now;
        for (const auto& p : m.store().all()) {
            if (p->name.rfind("feat_k.", 0) != 0) continue;
            k_before.push_back(p->value.data);
            q_now.push_back(m.store().get("feat_q." + p->name.substr(7)).value.data);
        }
        m.ema_update();
        size_t which = 0;
        for (const auto& p : m.store().all()) {
            if (p->name.rfind("feat_k.", 0) != 0) continue;
            const auto& k0 = k_before[which];
            const auto& q = q_now[which];
            ++which;
            size_t mismatches = 0;
            for (size_t i = 0; i < p->value.size(); ++i) {
                if (p->value.data[i] != a * k0[i] + (1.0 - a) * q[i]) ++mismatches;
            }
            CHECK(mismatches == 0);
        }
        CHECK(which == k_before.size());
    }

    // a = 1: k freezes. a = 0: k snaps to q.
    {
        ModelConfig cfg = toy_cfg();
        cfg.momentum_a = 1.0;
        model::SdmaeModel m(cfg, 2);
        perturb_q(m);
        const Mat before = m.store().get("feat_k.block0.attn.wq").value;
        m.ema_update();
        CHECK(m.store().get("feat_k.block0.attn.wq").value.data == before.data);
    }
    {
        ModelConfig cfg = toy_cfg();
        cfg.momentum_a = 0.0;
        model::SdmaeModel m(cfg, 2);
        perturb_q(m);
        m.ema_update();
        for (const auto& p : m.store().all()) {
            if (p->name.rfind("feat_k.", 0) != 0) continue;
            CHECK(p->value.data == m.store().get("feat_q." + p->name.substr(7)).value.data);
        }
    }

    // Repeated updates against a fixed query tower contract geometrically.
    {
        model::SdmaeModel m(toy_cfg(), 2);
        perturb_q(m);
        auto gap = [&]() {
            double worst = 0.0;
            for (const auto& p : m.store().all()) {
                if (p->name.rfind("feat_k.", 0) != 0) continue;
                worst = std::max(worst, max_abs_diff(
                                            p->value,
                                            m.store().get("feat_q." + p->name.substr(7)).value));
            }
            return worst;
        };
        const double g0 = gap();
        REQUIRE(g0 > 0.0);
        m.ema_update();
        const double g1 = gap();
        m.ema_update();
        const double g2 = gap();
        CHECK(g1 < g0);
        CHECK(g2 < g1);
        CHECK(g1 == doctest::Approx(0.99 * g0).epsilon(1e-12));
        CHECK(g2 == doctest::Approx(0.99 * g1).epsilon(1e-12));
    }
}

TEST_CASE("projector wired as plain affine chain when weights are identity") {
    model::SdmaeModel m(toy_cfg(), 8);
    auto& w1 = m.store().get("proj.w1");
    auto& b1 = m.store().get("proj.b1");
    auto& w2 = m.store().get("proj.w2");
    auto& b2 = m.store().get("proj.b2");
    w1.value.fill(0.0);
    b1.value.fill(0.0);
    w2.value.fill(0.0);
    b2.value.fill(0.0);
    for (int i = 0; i < 32; ++i) w1.value.at(i, i) = 1.0;  // embed into left half
    for (int i = 0; i < 32; ++i) w2.value.at(i, i) = 1.0;  // read left half back

    Rng rng(31);
    Mat x = random_mat(1, 32, rng);

    // Identity activation: the head passes the row through untouched.
    ad::Graph g1;
    const Mat& out_id = m.project(g1, g1.constant(x), ProjAct::Identity).value();
    CHECK(out_id.data == x.data);

    // Default activation: exactly one elementwise gelu between the layers.
    ad::Graph g2;
    const Mat& out_gelu = m.project(g2, g2.constant(x), ProjAct::Gelu).value();
    for (int c = 0; c < 32; ++c) {
        double expect;
        kernels::ref::gelu_forward(&x.at(0, c), &expect, 1);
        CHECK(out_gelu.at(0, c) == expect);
    }
}

TEST_CASE("decoder collapses to its pixel bias when weights are zeroed") {
    model::SdmaeModel m(toy_cfg(), 17);
    for (auto& p : m.store().all()) {
        if (p->name.rfind("decoder.", 0) == 0) p->value.fill(0.0);
    }
    m.store().get("decoder.pixel_head.b").value.fill(0.25);

    Rng rng(77);
    ad::Graph g;
    ad::Var z_all = g.constant(random_mat(65, 64, rng));
    auto [tokens, pixels] = m.decode_all(g, z_all);
    CHECK(all_zero(tokens.value()));
    for (double v : pixels.value().data) CHECK(v == 0.25);
}

TEST_CASE("finite differences agree through the assembled model") {
    model::SdmaeModel m(micro_cfg(), 13);
    Rng rng(55);
    std::vector<int> idx{0, 3};
    Mat vis = random_mat(2, 8, rng, 0.5);
    Mat target = random_mat(4, 8, rng, 0.5);

    auto forward = [&](bool want_grads) {
        ad::Graph g;
        ad::Var z = m.encode_visible(g, vis, idx);
        ad::Var filled = g.reassemble(g.slice_rows(z, 1, 2),
                                      g.param(m.store().get("decoder.mask_token")), idx, 4);
        std::vector<ad::Var> parts{g.slice_rows(z, 0, 1), filled};
        auto [tokens, pixels] = m.decode_all(g, g.concat_rows(parts));
        ad::Var q = m.project(g, g.slice_rows(m.feature_encode(g, tokens, Branch::Query), 0, 1));
        ad::Var loss = g.add(g.mse_const(pixels, target), g.mse_const(q, Mat(1, 8)));
        const double value = loss.value().at(0, 0);
        if (want_grads) g.backward(loss);
        return value;
    };

    m.store().zero_grads();
    forward(true);

    // Probe one entry in each family the loss should reach.
    const char* names[] = {"encoder.patch_embed.w", "encoder.cls_token",
                           "encoder.block0.attn.wv", "encoder.block0.mlp.w1",
                           "decoder.mask_token",     "decoder.embed.w",
                           "decoder.pixel_head.w",   "decoder.norm.gamma",
                           "feat_q.block0.attn.wq",  "proj.w1"};
    Rng pick(91);
    for (const char* name : names) {
        auto& p = m.store().get(name);
        const size_t i = static_cast<size_t>(pick.uniform_int(static_cast<int>(p.value.size())));
        const double analytic = p.grad.data[i];
        const double h = 1e-5;
        const double keep = p.value.data[i];
        p.value.data[i] = keep + h;
        const double up = forward(false);
        p.value.data[i] = keep - h;
        const double down = forward(false);
        p.value.data[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        // Near-zero gradients drown in central-difference cancellation noise,
        // hence the absolute floor alongside the relative bound.
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        INFO(std::string(name) << "[" << i << "] fd=" << fd << " analytic=" << analytic);
        CHECK(std::abs(fd - analytic) < 1e-5 * denom + 1e-9);
    }

    // The momentum tower must stay untouched by that loss.
    for (const auto& p : m.store().all()) {
        if (p->name.rfind("feat_k.", 0) == 0) CHECK(all_zero(p->grad));
    }
}

TEST_CASE("classifier: zero head, encoder transplant, scale hooks") {
    ModelConfig cfg = toy_cfg();
    model::ClassifierModel clf(cfg, 8, 19);
    Rng rng(3);
    Mat tokens = random_mat(64, 48, rng, 0.4);
    std::vector<double> ones(2, 1.0);

    // Zero-initialized head: logits are exactly zero whatever the input.
    {
        ad::Graph g;
        const Mat& out = clf.logits(g, tokens, ones).value();
        CHECK(out.rows == 1);
        CHECK(out.cols == 8);
        CHECK(all_zero(out));
    }

    // Transplanting encoder weights copies them bitwise.
    model::SdmaeModel pre(cfg, 4);
    clf.load_encoder_from(pre.store());
    CHECK(clf.store().get("encoder.block1.mlp.w2").value.data ==
          pre.store().get("encoder.block1.mlp.w2").value.data);
    CHECK(clf.store().get("encoder.norm.gamma").value.data ==
          pre.store().get("encoder.norm.gamma").value.data);

    // Branch scales change the outcome once the head is nonzero.
    clf.store().get("classifier.w").value.at(5, 2) = 1.0;
    ad::Graph ga, gb;
    const Mat& full = clf.logits(ga, tokens, ones).value();
    const Mat& damped = clf.logits(gb, tokens, {0.5, 0.5}).value();
    CHECK(max_abs_diff(full, damped) > 0.0);

    // Wrong scale count / token shape are configuration errors.
    ad::Graph gc;
    CHECK_THROWS_AS(clf.logits(gc, tokens, {1.0}), Error);
    Mat short_tokens = random_mat(63, 48, rng);
    CHECK_THROWS_AS(clf.logits(gc, short_tokens, ones), Error);

    // Transplant from an incompatible store fails loudly.
    ModelConfig other = toy_cfg();
    other.encoder.dim = 32;
    model::SdmaeModel small(other, 4);
    CHECK_THROWS_AS(clf.load_encoder_from(small.store()), Error);
    ParamStore empty;
    CHECK_THROWS_AS(clf.load_encoder_from(empty), Error);
}

TEST_CASE("classifier matches encoder semantics on the full sequence") {
    // With every class column zero except one bias entry, the logit value
    // equals that bias: the encoder path contributes only through the head.
    ModelConfig cfg = micro_cfg();
    model::ClassifierModel clf(cfg, 3, 2);
    clf.store().get("classifier.b").value.at(0, 1) = 0.75;
    Rng rng(8);
    Mat tokens = random_mat(4, 8, rng);
    ad::Graph g;
    const Mat& out = clf.logits(g, tokens, {1.0}).value();
    CHECK(out.at(0, 0) == 0.0);
    CHECK(out.at(0, 1) == 0.75);
    CHECK(out.at(0, 2) == 0.0);

    // Gradient spot check through the classifier stack.
    model::ClassifierModel c2(cfg, 3, 6);
    for (auto& v : c2.store().get("classifier.w").value.data) v = rng.normal() * 0.1;
    auto fwd = [&](bool grads) {
        ad::Graph gg;
        ad::Var logits = c2.logits(gg, tokens, {1.0});
        ad::Var loss = gg.cross_entropy_rows(logits, {2});
        double v = loss.value().at(0, 0);
        if (grads) gg.backward(loss);
        return v;
    };
    c2.store().zero_grads();
    fwd(true);
    auto& probe = c2.store().get("encoder.block0.attn.wo");
    const size_t i = 11;
    const double analytic = probe.grad.data[i];
    const double h = 1e-5, keep = probe.value.data[i];
    probe.value.data[i] = keep + h;
    const double up = fwd(false);
    probe.value.data[i] = keep - h;
    const double down = fwd(false);
    probe.value.data[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    CHECK(std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8}) < 1e-5);
}
