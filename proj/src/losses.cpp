#include "sdmae/losses.hpp"

#include <cmath>
#include <numeric>

namespace sdmae::losses {

void LossWeights::validate() const {
    if (!(lambda_l >= 0.0) || !(lambda_c >= 0.0)) {
        throw_config("loss weights must be non-negative");
    }
}

ad::Var recon_loss(ad::Graph& g, ad::Var pred_s, ad::Var pred_w, const Mat& target_s,
                   const Mat& target_w) {
    if (pred_s.rows() != target_s.rows || pred_s.cols() != target_s.cols ||
        pred_w.rows() != target_w.rows || pred_w.cols() != target_w.cols ||
        pred_s.rows() != pred_w.rows() || pred_s.cols() != pred_w.cols()) {
        throw_config("recon_loss: prediction/target shapes disagree");
    }
    return g.add(g.mse_const(pred_s, target_s), g.mse_const(pred_w, target_w));
}

ad::Var location_loss(ad::Graph& g, ad::Var logits, const std::vector<int>& targets,
                      double tau_loc) {
    if (tau_loc <= 0.0) throw_config("location_loss: tau_loc must be positive");
    const int rows = logits.rows();
    const int vocab = logits.cols();
    if (static_cast<int>(targets.size()) != rows) {
        throw_config("location_loss: one target per logit row required");
    }
    const double inv_vocab = 1.0 / vocab;
    Mat scaled_targets(rows, 1);
    for (int i = 0; i < rows; ++i) {
        if (targets[i] < 0 || targets[i] >= vocab) {
            throw_config("location_loss: target " + std::to_string(targets[i]) +
                         " outside [0," + std::to_string(vocab) + ")");
        }
        scaled_targets.at(i, 0) = targets[i] * inv_vocab;
    }
    Mat positions(vocab, 1);
    for (int j = 0; j < vocab; ++j) positions.at(j, 0) = j;
    ad::Var p = g.softmax_rows(g.scale(logits, 1.0 / tau_loc));
    ad::Var predicted = g.matmul(p, g.constant(std::move(positions)));
    return g.mse_const(g.scale(predicted, inv_vocab), std::move(scaled_targets));
}

double location_accuracy(const Mat& logits, const std::vector<int>& targets) {
    if (static_cast<int>(targets.size()) != logits.rows) {
        throw_config("location_accuracy: one target per logit row required");
    }
    if (logits.rows == 0) throw_config("location_accuracy: empty logits");
    int hits = 0;
    for (int i = 0; i < logits.rows; ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols; ++j) {
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        }
        if (best == targets[i]) ++hits;
    }
    return static_cast<double>(hits) / logits.rows;
}

ad::Var contrastive_loss(ad::Graph& g, ad::Var q_s, ad::Var q_w, ad::Var k_s, ad::Var k_w,
                         double tau) {
    if (tau <= 0.0) throw_config("contrastive_loss: tau must be positive");
    const int b = q_s.rows();
    const int d = q_s.cols();
    if (b < 1) throw_config("contrastive_loss: empty batch");
    auto check = [&](ad::Var v, const char* name) {
        if (v.rows() != b || v.cols() != d) {
            throw_config(std::string("contrastive_loss: ") + name + " shape disagrees");
        }
    };
    check(q_w, "q_w");
    check(k_s, "k_s");
    check(k_w, "k_w");
    std::vector<int> diag(b);
    std::iota(diag.begin(), diag.end(), 0);
    ad::Var sims_sw = g.scale(g.matmul(q_s, k_w, false, true), 1.0 / tau);
    ad::Var sims_ws = g.scale(g.matmul(q_w, k_s, false, true), 1.0 / tau);
    ad::Var per_row = g.add(g.cross_entropy_rows(sims_sw, diag),
                            g.cross_entropy_rows(sims_ws, diag));
    return g.mean_all(per_row);
}

ad::Var combine(ad::Graph& g, ad::Var recon, ad::Var loc, ad::Var ctr, const LossWeights& w) {
    w.validate();
    return g.add(g.add(recon, g.scale(loc, w.lambda_l)), g.scale(ctr, w.lambda_c));
}

LossBreakdown total_loss(double recon, double loc, double ctr, const LossWeights& w) {
    w.validate();
    if (!std::isfinite(recon)) throw_numeric("total_loss: reconstruction term is not finite");
    if (!std::isfinite(loc)) throw_numeric("total_loss: location term is not finite");
    if (!std::isfinite(ctr)) throw_numeric("total_loss: contrastive term is not finite");
    LossBreakdown b;
    b.recon = recon;
    b.loc = loc;
    b.ctr = ctr;
    b.total = recon + w.lambda_l * loc + w.lambda_c * ctr;
    return b;
}

}  // namespace sdmae::losses
