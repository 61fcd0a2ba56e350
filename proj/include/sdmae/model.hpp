#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sdmae/ad.hpp"
#include "sdmae/common.hpp"
#include "sdmae/masking.hpp"
#include "sdmae/params.hpp"
#include "sdmae/rng.hpp"

namespace sdmae::model {

struct EncoderConfig {
    int depth = 12;
    int dim = 768;  // token width D'
    int heads = 12;
    double mlp_ratio = 4.0;
    int patch_size = 16;
    double drop_path = 0.0;  // stochastic depth, fine-tune only
    void validate() const;
};

struct DecoderConfig {
    int depth = 1;   // deliberately shallow
    int dim = 128;   // deliberately narrow
    int heads = 4;
    void validate() const;
};

// Everything needed to shape the full pre-training model.
struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    int patch_dim = 48;  // D = P*P*C
    int n_tokens = 64;   // N
    int grid_h = 8, grid_w = 8;
    int loc_vocab = 0;        // location classes L; 0 means "use n_tokens"
    int feature_depth = 2;    // blocks in each small feature encoder
    int feature_heads = 4;
    double feature_mlp_ratio = 4.0;
    double momentum_a = 0.99;  // EMA weight for the k-branch
    // Alternate contrastive routing kept for comparison runs: feed the
    // strong view's query through the momentum tower instead of the
    // gradient tower before projection.
    bool strong_query_via_momentum = false;

    int resolved_loc_vocab() const { return loc_vocab > 0 ? loc_vocab : n_tokens; }
    void validate() const;
};

// One parameter's name, shape and treatment. The same enumeration drives
// allocation, counting, and checkpoint layout, so they can never disagree.
struct ParamSpec {
    std::string name;
    int rows = 0, cols = 0;
    Init init = Init::Zero;
    bool decay = true;
    bool trainable = true;
};

std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg);

// Sum of parameter element counts whose name starts with `prefix`.
size_t count_params(const std::vector<ParamSpec>& specs, const std::string& prefix);

enum class Branch { Query, Momentum };
enum class ProjAct { Gelu, Identity };

// ---------------------------------------------------------------------------
// SdmaeModel: owns all pre-training parameters and builds forward graphs.
//
// Graph-building methods append nodes to the caller's graph and return the
// output Var; autodiff handles the rest. The momentum (k) branch detaches its
// input and binds parameters as constants, so no gradient can reach it.
// ---------------------------------------------------------------------------
class SdmaeModel {
public:
    SdmaeModel(const ModelConfig& cfg, std::uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    // Positional tables, fixed at construction. Row 0 is the class slot.
    const Mat& encoder_pos() const { return enc_pos_; }   // (N+1) x D'
    const Mat& decoder_pos() const { return dec_pos_; }   // (N+1) x dec_dim

    // Visible tokens -> (1+N_v) x D'; row 0 is the class token output.
    ad::Var encode_visible(ad::Graph& g, const Mat& visible_tokens,
                           const std::vector<int>& visible_idx);

    // z_all (1+N) x D' (class token + reassembled tokens) ->
    // {tokens (1+N) x dec_dim, pixels N x D}.
    std::pair<ad::Var, ad::Var> decode_all(ad::Graph& g, ad::Var z_all);

    // Visible encodings without the class row -> location logits N_v x L.
    ad::Var predict_locations(ad::Graph& g, ad::Var z_vis_no_cls);

    // Two small transformer blocks at decoder width. The momentum branch
    // treats both its input and its parameters as constants (stop-gradient).
    ad::Var feature_encode(ad::Graph& g, ad::Var decoded_tokens, Branch which);

    // Class-token row -> expanded two-layer head, same output width.
    ad::Var project(ad::Graph& g, ad::Var cls_row, ProjAct act = ProjAct::Gelu);

    // theta_k <- a*theta_k + (1-a)*theta_q, elementwise, once per call.
    void ema_update();

private:
    ModelConfig cfg_;
    ParamStore store_;
    Mat enc_pos_;
    Mat dec_pos_;
};

// ---------------------------------------------------------------------------
// ClassifierModel: the fine-tuning head — the same encoder shape over the
// full (unmasked) token sequence plus a linear classifier on the class token.
// ---------------------------------------------------------------------------
class ClassifierModel {
public:
    ClassifierModel(const ModelConfig& cfg, int classes, std::uint64_t init_seed);

    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }
    int classes() const { return classes_; }
    const ModelConfig& config() const { return cfg_; }

    // Copies every encoder.* tensor from a pre-trained store (shape-checked).
    void load_encoder_from(const ParamStore& src);

    // Full token sequence -> class logits 1 x C. block_scales holds one
    // residual-branch multiplier per encoder block (1 everywhere at eval;
    // 0 or 1/(1-p) for stochastic depth during training).
    ad::Var logits(ad::Graph& g, const Mat& tokens, const std::vector<double>& block_scales);

private:
    ModelConfig cfg_;
    int classes_;
    ParamStore store_;
    Mat enc_pos_;
};

std::vector<ParamSpec> enumerate_classifier_params(const ModelConfig& cfg, int classes);

}  // namespace sdmae::model
