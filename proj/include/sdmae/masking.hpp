#pragma once

#include <utility>
#include <vector>

#include "sdmae/common.hpp"
#include "sdmae/rng.hpp"

namespace sdmae::masking {

// A uniform random partition of token indices into visible and masked sets.
// Both index lists are kept sorted ascending so gathers preserve image order.
struct MaskPlan {
    int n_total = 0;
    double mask_ratio = 0.0;
    std::vector<int> visible_idx;
    std::vector<int> masked_idx;

    int n_visible() const { return static_cast<int>(visible_idx.size()); }
    int n_masked() const { return static_cast<int>(masked_idx.size()); }
};

// Fixed 2D sine-cosine positional table, (N+1) x D with row 0 (the class
// token's slot) all zero. Deterministic function of (N, D, grid); no RNG.
struct PositionalEmbedding {
    Mat table;  // (N+1) x D
};

// Visible count is round((1-m)*N); masked is the rest. Degenerate splits
// (either side empty) are rejected.
MaskPlan sample_mask_plan(int n_total, double mask_ratio, Rng& rng);

// Gather token rows into (visible, masked_targets), each in ascending index
// order.
std::pair<Mat, Mat> split_tokens(const Mat& tokens, const MaskPlan& plan);

// Output row i is the next encoded visible row if i is visible, otherwise a
// copy of mask_token. Inverse of the visible gather up to the mask fill.
Mat reassemble(const Mat& encoded_visible, const Mat& mask_token, const MaskPlan& plan);

PositionalEmbedding sincos_pos_embed(int n_tokens, int dim, int grid_h, int grid_w);

}  // namespace sdmae::masking
