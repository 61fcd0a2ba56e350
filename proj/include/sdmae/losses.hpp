#pragma once

#include <vector>

#include "sdmae/ad.hpp"
#include "sdmae/common.hpp"

namespace sdmae::losses {

// Weights of the auxiliary terms in the combined objective.
struct LossWeights {
    double lambda_l = 1.0;  // location term
    double lambda_c = 0.1;  // contrastive term
    void validate() const;
};

// Unweighted term values plus their weighted sum, for logging.
struct LossBreakdown {
    double recon = 0.0;
    double loc = 0.0;
    double ctr = 0.0;
    double total = 0.0;
};

// Mean squared error over the masked rows of each view, summed across the
// two views. Predictions and targets arrive already gathered at masked_idx;
// targets are per-patch normalized.
ad::Var recon_loss(ad::Graph& g, ad::Var pred_s, ad::Var pred_w, const Mat& target_s,
                   const Mat& target_w);

// Differentiable location objective: p = softmax(logits/tau_loc) per row,
// predicted position sum_j j*p_j, squared error against the true index with
// both sides scaled by 1/L, averaged over rows. (A hard argmax would have
// zero gradient almost everywhere; see location_accuracy for the metric.)
ad::Var location_loss(ad::Graph& g, ad::Var logits, const std::vector<int>& targets,
                      double tau_loc = 1.0);

// Fraction of rows whose hard argmax (lowest index wins ties) hits the
// target. Evaluation metric only; not differentiable.
double location_accuracy(const Mat& logits, const std::vector<int>& targets);

// Symmetric InfoNCE over a batch of class-token embeddings: row i of q_s
// pairs with row i of k_w against the other k_w rows, plus the mirrored
// (q_w, k_s) term; the two negative-log terms are summed, then averaged over
// the batch. Inputs are expected L2-normalized; keys should carry no
// gradient (the caller passes them as constants).
ad::Var contrastive_loss(ad::Graph& g, ad::Var q_s, ad::Var q_w, ad::Var k_s, ad::Var k_w,
                         double tau);

// Weighted sum, graph side: recon + lambda_l*loc + lambda_c*ctr.
ad::Var combine(ad::Graph& g, ad::Var recon, ad::Var loc, ad::Var ctr, const LossWeights& w);

// Weighted sum, scalar side, with the unweighted terms retained.
LossBreakdown total_loss(double recon, double loc, double ctr, const LossWeights& w);

}  // namespace sdmae::losses
