#include "sdmae/model.hpp"

#include <cmath>
#include <cstring>

namespace sdmae::model {

void EncoderConfig::validate() const {
    if (depth < 1) throw_config("encoder.depth must be >= 1");
    if (dim < 4 || dim % 4 != 0) {
        throw_config("encoder.dim must be a positive multiple of 4, got " + std::to_string(dim));
    }
    if (heads < 1 || dim % heads != 0) {
        throw_config("encoder.dim (" + std::to_string(dim) + ") must divide evenly into " +
                     std::to_string(heads) + " heads");
    }
    if (mlp_ratio <= 0.0) throw_config("encoder.mlp_ratio must be positive");
    if (patch_size < 1) throw_config("encoder.patch_size must be >= 1");
    if (!(drop_path >= 0.0 && drop_path < 1.0)) throw_config("encoder.drop_path must lie in [0,1)");
}

void DecoderConfig::validate() const {
    if (depth < 1) throw_config("decoder.depth must be >= 1");
    if (dim < 4 || dim % 4 != 0) {
        throw_config("decoder.dim must be a positive multiple of 4, got " + std::to_string(dim));
    }
    if (heads < 1 || dim % heads != 0) {
        throw_config("decoder.dim (" + std::to_string(dim) + ") must divide evenly into " +
                     std::to_string(heads) + " heads");
    }
}

void ModelConfig::validate() const {
    encoder.validate();
    decoder.validate();
    if (patch_dim < 2) throw_config("model.patch_dim must be >= 2");
    if (n_tokens < 2) throw_config("model.n_tokens must be >= 2");
    if (grid_h * grid_w != n_tokens) {
        throw_config("model grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                     " does not cover " + std::to_string(n_tokens) + " tokens");
    }
    if (loc_vocab < 0 || (loc_vocab > 0 && loc_vocab < 2)) {
        throw_config("model.loc_vocab must be 0 (= token count) or >= 2");
    }
    if (feature_depth < 1) throw_config("model.feature_depth must be >= 1");
    if (feature_heads < 1 || decoder.dim % feature_heads != 0) {
        throw_config("decoder.dim must divide evenly into model.feature_heads");
    }
    if (feature_mlp_ratio <= 0.0) throw_config("model.feature_mlp_ratio must be positive");
    if (!(momentum_a >= 0.0 && momentum_a <= 1.0)) throw_config("momentum_a must lie in [0,1]");
}

namespace {

void block_specs(std::vector<ParamSpec>& out, const std::string& prefix, int dim,
                 double mlp_ratio, bool trainable) {
    const int hidden = static_cast<int>(std::lround(dim * mlp_ratio));
    // When the block belongs to the momentum copy its weights are registered
    // zero (values are copied from the query twin afterwards) so the two
    // towers consume identical init RNG streams regardless of ordering.
    const Init weight_init = trainable ? Init::XavierUniform : Init::Zero;
    auto weight = [&](const char* n, int r, int c) {
        out.push_back({prefix + n, r, c, weight_init, true, trainable});
    };
    auto bias = [&](const char* n, int c) {
        out.push_back({prefix + n, 1, c, Init::Zero, false, trainable});
    };
    auto gain = [&](const char* n, int c) {
        out.push_back({prefix + n, 1, c, trainable ? Init::One : Init::Zero, false, trainable});
    };
    gain(".norm1.gamma", dim);
    bias(".norm1.beta", dim);
    weight(".attn.wq", dim, dim);
    bias(".attn.bq", dim);
    weight(".attn.wk", dim, dim);
    bias(".attn.bk", dim);
    weight(".attn.wv", dim, dim);
    bias(".attn.bv", dim);
    weight(".attn.wo", dim, dim);
    bias(".attn.bo", dim);
    gain(".norm2.gamma", dim);
    bias(".norm2.beta", dim);
    weight(".mlp.w1", dim, hidden);
    bias(".mlp.b1", hidden);
    weight(".mlp.w2", hidden, dim);
    bias(".mlp.b2", dim);
}

void encoder_specs(std::vector<ParamSpec>& out, const ModelConfig& cfg) {
    const int d = cfg.encoder.dim;
    out.push_back({"encoder.patch_embed.w", cfg.patch_dim, d, Init::XavierUniform, true, true});
    out.push_back({"encoder.patch_embed.b", 1, d, Init::Zero, false, true});
    out.push_back({"encoder.cls_token", 1, d, Init::TruncNormal002, false, true});
    for (int i = 0; i < cfg.encoder.depth; ++i) {
        block_specs(out, "encoder.block" + std::to_string(i), d, cfg.encoder.mlp_ratio, true);
    }
    out.push_back({"encoder.norm.gamma", 1, d, Init::One, false, true});
    out.push_back({"encoder.norm.beta", 1, d, Init::Zero, false, true});
}

}  // namespace

std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamSpec> out;
    const int d = cfg.encoder.dim;
    const int dd = cfg.decoder.dim;
    const int loc_hidden = d / 2;
    const int loc_vocab = cfg.resolved_loc_vocab();

    encoder_specs(out, cfg);

    out.push_back({"decoder.mask_token", 1, d, Init::TruncNormal002, false, true});
    out.push_back({"decoder.embed.w", d, dd, Init::XavierUniform, true, true});
    out.push_back({"decoder.embed.b", 1, dd, Init::Zero, false, true});
    for (int i = 0; i < cfg.decoder.depth; ++i) {
        block_specs(out, "decoder.block" + std::to_string(i), dd, 4.0, true);
    }
    out.push_back({"decoder.norm.gamma", 1, dd, Init::One, false, true});
    out.push_back({"decoder.norm.beta", 1, dd, Init::Zero, false, true});
    out.push_back({"decoder.pixel_head.w", dd, cfg.patch_dim, Init::XavierUniform, true, true});
    out.push_back({"decoder.pixel_head.b", 1, cfg.patch_dim, Init::Zero, false, true});

    // squeezed two-layer location predictor, hidden exactly D'/2
    out.push_back({"loc.wa", d, loc_hidden, Init::XavierUniform, true, true});
    out.push_back({"loc.ba", 1, loc_hidden, Init::Zero, false, true});
    out.push_back({"loc.wb", loc_hidden, loc_vocab, Init::XavierUniform, true, true});
    out.push_back({"loc.bb", 1, loc_vocab, Init::Zero, false, true});

    for (int i = 0; i < cfg.feature_depth; ++i) {
        block_specs(out, "feat_q.block" + std::to_string(i), dd, cfg.feature_mlp_ratio, true);
    }
    out.push_back({"feat_q.norm.gamma", 1, dd, Init::One, false, true});
    out.push_back({"feat_q.norm.beta", 1, dd, Init::Zero, false, true});
    for (int i = 0; i < cfg.feature_depth; ++i) {
        block_specs(out, "feat_k.block" + std::to_string(i), dd, cfg.feature_mlp_ratio, false);
    }
    out.push_back({"feat_k.norm.gamma", 1, dd, Init::Zero, false, false});
    out.push_back({"feat_k.norm.beta", 1, dd, Init::Zero, false, false});

    // expansive projector: width -> 2*width -> width
    out.push_back({"proj.w1", dd, 2 * dd, Init::XavierUniform, true, true});
    out.push_back({"proj.b1", 1, 2 * dd, Init::Zero, false, true});
    out.push_back({"proj.w2", 2 * dd, dd, Init::XavierUniform, true, true});
    out.push_back({"proj.b2", 1, dd, Init::Zero, false, true});
    return out;
}

std::vector<ParamSpec> enumerate_classifier_params(const ModelConfig& cfg, int classes) {
    cfg.validate();
    if (classes < 2) throw_config("classifier needs at least 2 classes");
    std::vector<ParamSpec> out;
    encoder_specs(out, cfg);
    // zero-init head: an untrained classifier predicts the lowest class index
    out.push_back({"classifier.w", cfg.encoder.dim, classes, Init::Zero, true, true});
    out.push_back({"classifier.b", 1, classes, Init::Zero, false, true});
    return out;
}

size_t count_params(const std::vector<ParamSpec>& specs, const std::string& prefix) {
    size_t n = 0;
    for (const auto& s : specs) {
        if (s.name.rfind(prefix, 0) == 0) n += static_cast<size_t>(s.rows) * s.cols;
    }
    return n;
}

// ---------------------------------------------------------------------------
// Forward building blocks
// ---------------------------------------------------------------------------

namespace {

using ad::Graph;
using ad::Var;

void check_finite(const Mat& m, const char* name) {
    for (double v : m.data) {
        if (!std::isfinite(v)) {
            throw_numeric(std::string(name) + " contains a non-finite value");
        }
    }
}

// Pixels arrive in [0,1]; the towers consume them centred at zero so the
// content signal is not dwarfed by the positional tables.
Mat standardize_pixels(const Mat& m) {
    Mat out(m.rows, m.cols);
    for (size_t i = 0; i < m.size(); ++i) out.data[i] = 2.0 * m.data[i] - 1.0;
    return out;
}

// Parameter leaf, or a constant copy of it on the momentum branch.
Var pvar(Graph& g, ParamStore& ps, const std::string& name, bool momentum) {
    Param& p = ps.get(name);
    return momentum ? g.constant(p.value) : g.param(p);
}

Var linear(Graph& g, Var x, Var w, Var b) { return g.add_rowvec(g.matmul(x, w), b); }

Var attention(Graph& g, Var x, ParamStore& ps, const std::string& prefix, int heads,
              bool momentum) {
    const int dim = x.cols();
    const int dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Var q = linear(g, x, pvar(g, ps, prefix + ".attn.wq", momentum),
                   pvar(g, ps, prefix + ".attn.bq", momentum));
    Var k = linear(g, x, pvar(g, ps, prefix + ".attn.wk", momentum),
                   pvar(g, ps, prefix + ".attn.bk", momentum));
    Var v = linear(g, x, pvar(g, ps, prefix + ".attn.wv", momentum),
                   pvar(g, ps, prefix + ".attn.bv", momentum));
    std::vector<Var> heads_out;
    heads_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        Var qh = g.slice_cols(q, h * dh, dh);
        Var kh = g.slice_cols(k, h * dh, dh);
        Var vh = g.slice_cols(v, h * dh, dh);
        Var scores = g.scale(g.matmul(qh, kh, false, true), inv_sqrt);
        heads_out.push_back(g.matmul(g.softmax_rows(scores), vh));
    }
    Var merged = g.concat_cols(heads_out);
    return linear(g, merged, pvar(g, ps, prefix + ".attn.wo", momentum),
                  pvar(g, ps, prefix + ".attn.bo", momentum));
}

Var mlp(Graph& g, Var x, ParamStore& ps, const std::string& prefix, bool momentum) {
    Var h = g.gelu(linear(g, x, pvar(g, ps, prefix + ".mlp.w1", momentum),
                          pvar(g, ps, prefix + ".mlp.b1", momentum)));
    return linear(g, h, pvar(g, ps, prefix + ".mlp.w2", momentum),
                  pvar(g, ps, prefix + ".mlp.b2", momentum));
}

// Pre-norm transformer block. branch_scale implements stochastic depth:
// out = x + s*attn(LN(x)), then + s*mlp(LN(..)).
Var transformer_block(Graph& g, Var x, ParamStore& ps, const std::string& prefix, int heads,
                      bool momentum, double branch_scale = 1.0) {
    Var n1 = g.layer_norm(x, pvar(g, ps, prefix + ".norm1.gamma", momentum),
                          pvar(g, ps, prefix + ".norm1.beta", momentum));
    Var a = attention(g, n1, ps, prefix, heads, momentum);
    if (branch_scale != 1.0) a = g.scale(a, branch_scale);
    x = g.add(x, a);
    Var n2 = g.layer_norm(x, pvar(g, ps, prefix + ".norm2.gamma", momentum),
                          pvar(g, ps, prefix + ".norm2.beta", momentum));
    Var m = mlp(g, n2, ps, prefix, momentum);
    if (branch_scale != 1.0) m = g.scale(m, branch_scale);
    return g.add(x, m);
}

Var final_norm(Graph& g, Var x, ParamStore& ps, const std::string& root, bool momentum) {
    return g.layer_norm(x, pvar(g, ps, root + ".norm.gamma", momentum),
                        pvar(g, ps, root + ".norm.beta", momentum));
}

void build_store(ParamStore& store, const std::vector<ParamSpec>& specs, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& s : specs) {
        store.add(s.name, s.rows, s.cols, s.init, rng, s.decay, s.trainable);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// SdmaeModel
// ---------------------------------------------------------------------------

SdmaeModel::SdmaeModel(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    build_store(store_, enumerate_params(cfg_), init_seed);
    // the momentum tower starts as an exact copy of the query tower
    for (auto& p : store_.all()) {
        if (p->name.rfind("feat_k.", 0) == 0) {
            const Param& q = store_.get("feat_q." + p->name.substr(7));
            p->value = q.value;
        }
    }
    enc_pos_ = masking::sincos_pos_embed(cfg_.n_tokens, cfg_.encoder.dim, cfg_.grid_h,
                                         cfg_.grid_w).table;
    dec_pos_ = masking::sincos_pos_embed(cfg_.n_tokens, cfg_.decoder.dim, cfg_.grid_h,
                                         cfg_.grid_w).table;
}

ad::Var SdmaeModel::encode_visible(ad::Graph& g, const Mat& visible_tokens,
                                   const std::vector<int>& visible_idx) {
    check_finite(visible_tokens, "visible tokens");
    if (visible_tokens.cols != cfg_.patch_dim) {
        throw_config("encode_visible: token width " + std::to_string(visible_tokens.cols) +
                     " != patch dim " + std::to_string(cfg_.patch_dim));
    }
    if (static_cast<int>(visible_idx.size()) != visible_tokens.rows) {
        throw_config("encode_visible: index count does not match token rows");
    }
    Mat pos(visible_tokens.rows, cfg_.encoder.dim);
    for (int i = 0; i < visible_tokens.rows; ++i) {
        const int idx = visible_idx[i];
        if (idx < 0 || idx >= cfg_.n_tokens) throw_config("encode_visible: index out of range");
        std::memcpy(pos.row_ptr(i), enc_pos_.row_ptr(1 + idx),
                    sizeof(double) * cfg_.encoder.dim);
    }
    Var x = linear(g, g.constant(standardize_pixels(visible_tokens)),
                   pvar(g, store_, "encoder.patch_embed.w", false),
                   pvar(g, store_, "encoder.patch_embed.b", false));
    x = g.add(x, g.constant(std::move(pos)));
    // the class slot's positional row is zero, so the token enters bare
    std::vector<Var> parts{pvar(g, store_, "encoder.cls_token", false), x};
    Var seq = g.concat_rows(parts);
    for (int i = 0; i < cfg_.encoder.depth; ++i) {
        seq = transformer_block(g, seq, store_, "encoder.block" + std::to_string(i),
                                cfg_.encoder.heads, false);
    }
    return final_norm(g, seq, store_, "encoder", false);
}

std::pair<ad::Var, ad::Var> SdmaeModel::decode_all(ad::Graph& g, ad::Var z_all) {
    check_finite(z_all.value(), "decoder input");
    if (z_all.rows() != cfg_.n_tokens + 1 || z_all.cols() != cfg_.encoder.dim) {
        throw_config("decode_all: expected (1+N) x D' input, got " + std::to_string(z_all.rows()) +
                     "x" + std::to_string(z_all.cols()));
    }
    Var x = linear(g, z_all, pvar(g, store_, "decoder.embed.w", false),
                   pvar(g, store_, "decoder.embed.b", false));
    x = g.add(x, g.constant(dec_pos_));
    for (int i = 0; i < cfg_.decoder.depth; ++i) {
        x = transformer_block(g, x, store_, "decoder.block" + std::to_string(i),
                              cfg_.decoder.heads, false);
    }
    Var tokens = final_norm(g, x, store_, "decoder", false);
    Var pixels = linear(g, g.slice_rows(tokens, 1, cfg_.n_tokens),
                        pvar(g, store_, "decoder.pixel_head.w", false),
                        pvar(g, store_, "decoder.pixel_head.b", false));
    return {tokens, pixels};
}

ad::Var SdmaeModel::predict_locations(ad::Graph& g, ad::Var z_vis_no_cls) {
    if (z_vis_no_cls.cols() != cfg_.encoder.dim || z_vis_no_cls.rows() < 1) {
        throw_config("predict_locations: expected N_v x D' input");
    }
    Var hidden = g.gelu(linear(g, z_vis_no_cls, pvar(g, store_, "loc.wa", false),
                               pvar(g, store_, "loc.ba", false)));
    return linear(g, hidden, pvar(g, store_, "loc.wb", false), pvar(g, store_, "loc.bb", false));
}

ad::Var SdmaeModel::feature_encode(ad::Graph& g, ad::Var decoded_tokens, Branch which) {
    if (decoded_tokens.cols() != cfg_.decoder.dim) {
        throw_config("feature_encode: expected width " + std::to_string(cfg_.decoder.dim));
    }
    check_finite(decoded_tokens.value(), "feature encoder input");
    const bool momentum = which == Branch::Momentum;
    const std::string root = momentum ? "feat_k" : "feat_q";
    // stop-gradient: the momentum branch sees its input as data, not graph
    Var x = momentum ? g.constant(decoded_tokens.value()) : decoded_tokens;
    for (int i = 0; i < cfg_.feature_depth; ++i) {
        x = transformer_block(g, x, store_, root + ".block" + std::to_string(i),
                              cfg_.feature_heads, momentum);
    }
    return final_norm(g, x, store_, root, momentum);
}

ad::Var SdmaeModel::project(ad::Graph& g, ad::Var cls_row, ProjAct act) {
    if (cls_row.rows() != 1 || cls_row.cols() != cfg_.decoder.dim) {
        throw_config("project: expected a 1 x " + std::to_string(cfg_.decoder.dim) +
                     " class-token row");
    }
    Var h = linear(g, cls_row, pvar(g, store_, "proj.w1", false),
                   pvar(g, store_, "proj.b1", false));
    if (act == ProjAct::Gelu) h = g.gelu(h);
    return linear(g, h, pvar(g, store_, "proj.w2", false), pvar(g, store_, "proj.b2", false));
}

void SdmaeModel::ema_update() {
    const double a = cfg_.momentum_a;
    for (auto& p : store_.all()) {
        if (p->name.rfind("feat_k.", 0) != 0) continue;
        const Param& q = store_.get("feat_q." + p->name.substr(7));
        if (!p->value.same_shape(q.value)) {
            throw_config("ema_update: shape mismatch between " + p->name + " and " + q.name);
        }
        for (size_t i = 0; i < p->value.size(); ++i) {
            p->value.data[i] = a * p->value.data[i] + (1.0 - a) * q.value.data[i];
        }
    }
}

// ---------------------------------------------------------------------------
// ClassifierModel
// ---------------------------------------------------------------------------

ClassifierModel::ClassifierModel(const ModelConfig& cfg, int classes, std::uint64_t init_seed)
    : cfg_(cfg), classes_(classes) {
    build_store(store_, enumerate_classifier_params(cfg_, classes), init_seed);
    enc_pos_ = masking::sincos_pos_embed(cfg_.n_tokens, cfg_.encoder.dim, cfg_.grid_h,
                                         cfg_.grid_w).table;
}

void ClassifierModel::load_encoder_from(const ParamStore& src) {
    for (auto& p : store_.all()) {
        if (p->name.rfind("encoder.", 0) != 0) continue;
        const Param* s = src.find(p->name);
        if (!s) throw_config("load_encoder_from: checkpoint lacks " + p->name);
        if (!s->value.same_shape(p->value)) {
            throw_config("load_encoder_from: shape mismatch for " + p->name + " (" +
                         std::to_string(s->value.rows) + "x" + std::to_string(s->value.cols) +
                         " vs " + std::to_string(p->value.rows) + "x" +
                         std::to_string(p->value.cols) + ")");
        }
        p->value = s->value;
    }
}

ad::Var ClassifierModel::logits(ad::Graph& g, const Mat& tokens,
                                const std::vector<double>& block_scales) {
    check_finite(tokens, "classifier input tokens");
    if (tokens.rows != cfg_.n_tokens || tokens.cols != cfg_.patch_dim) {
        throw_config("classifier: expected " + std::to_string(cfg_.n_tokens) + "x" +
                     std::to_string(cfg_.patch_dim) + " tokens");
    }
    if (static_cast<int>(block_scales.size()) != cfg_.encoder.depth) {
        throw_config("classifier: need one branch scale per encoder block");
    }
    Mat pos(cfg_.n_tokens, cfg_.encoder.dim);
    std::memcpy(pos.data.data(), enc_pos_.row_ptr(1),
                sizeof(double) * pos.size());
    Var x = linear(g, g.constant(standardize_pixels(tokens)),
                   pvar(g, store_, "encoder.patch_embed.w", false),
                   pvar(g, store_, "encoder.patch_embed.b", false));
    x = g.add(x, g.constant(std::move(pos)));
    std::vector<Var> parts{pvar(g, store_, "encoder.cls_token", false), x};
    Var seq = g.concat_rows(parts);
    for (int i = 0; i < cfg_.encoder.depth; ++i) {
        seq = transformer_block(g, seq, store_, "encoder.block" + std::to_string(i),
                                cfg_.encoder.heads, false, block_scales[i]);
    }
    seq = final_norm(g, seq, store_, "encoder", false);
    Var cls = g.slice_rows(seq, 0, 1);
    return linear(g, cls, pvar(g, store_, "classifier.w", false),
                  pvar(g, store_, "classifier.b", false));
}

}  // namespace sdmae::model
