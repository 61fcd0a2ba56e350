#include "sdmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace sdmae::masking {

MaskPlan sample_mask_plan(int n_total, double mask_ratio, Rng& rng) {
    if (n_total < 2) throw_config("sample_mask_plan: need at least 2 tokens");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw_config("sample_mask_plan: mask_ratio must lie in (0,1), got " +
                     std::to_string(mask_ratio));
    }
    const int n_vis = static_cast<int>(std::lround((1.0 - mask_ratio) * n_total));
    const int n_mask = n_total - n_vis;
    if (n_vis < 1 || n_mask < 1) {
        throw_config("sample_mask_plan: ratio " + std::to_string(mask_ratio) + " at N=" +
                     std::to_string(n_total) + " leaves an empty visible or masked set");
    }

    std::vector<int> perm(n_total);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    MaskPlan plan;
    plan.n_total = n_total;
    plan.mask_ratio = mask_ratio;
    plan.visible_idx.assign(perm.begin(), perm.begin() + n_vis);
    plan.masked_idx.assign(perm.begin() + n_vis, perm.end());
    std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
    std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
    return plan;
}

std::pair<Mat, Mat> split_tokens(const Mat& tokens, const MaskPlan& plan) {
    if (tokens.rows != plan.n_total) {
        throw_config("split_tokens: sequence has " + std::to_string(tokens.rows) +
                     " tokens but plan covers " + std::to_string(plan.n_total));
    }
    Mat visible(plan.n_visible(), tokens.cols);
    Mat masked(plan.n_masked(), tokens.cols);
    for (int i = 0; i < plan.n_visible(); ++i) {
        std::memcpy(visible.row_ptr(i), tokens.row_ptr(plan.visible_idx[i]),
                    sizeof(double) * tokens.cols);
    }
    for (int i = 0; i < plan.n_masked(); ++i) {
        std::memcpy(masked.row_ptr(i), tokens.row_ptr(plan.masked_idx[i]),
                    sizeof(double) * tokens.cols);
    }
    return {std::move(visible), std::move(masked)};
}

Mat reassemble(const Mat& encoded_visible, const Mat& mask_token, const MaskPlan& plan) {
    if (encoded_visible.rows != plan.n_visible()) {
        throw_config("reassemble: got " + std::to_string(encoded_visible.rows) +
                     " encoded rows for " + std::to_string(plan.n_visible()) + " visible slots");
    }
    if (mask_token.rows != 1 || mask_token.cols != encoded_visible.cols) {
        throw_config("reassemble: mask token must be 1x" + std::to_string(encoded_visible.cols));
    }
    Mat out(plan.n_total, encoded_visible.cols);
    for (int i = 0; i < plan.n_total; ++i) {
        std::memcpy(out.row_ptr(i), mask_token.data.data(), sizeof(double) * mask_token.cols);
    }
    for (int i = 0; i < plan.n_visible(); ++i) {
        std::memcpy(out.row_ptr(plan.visible_idx[i]), encoded_visible.row_ptr(i),
                    sizeof(double) * encoded_visible.cols);
    }
    return out;
}

namespace {

// 1D half-table: for a scalar position, D/2 values laid out as
// [sin(p*w_0..w_{q-1}), cos(p*w_0..w_{q-1})] with q = D/4 geometric
// inverse frequencies 10000^(i/q).
void fill_axis(double* dst, int half_dim, double pos) {
    const int q = half_dim / 2;
    for (int i = 0; i < q; ++i) {
        const double inv_freq = std::pow(10000.0, static_cast<double>(i) / q);
        const double angle = pos / inv_freq;
        dst[i] = std::sin(angle);
        dst[q + i] = std::cos(angle);
    }
}

}  // namespace

PositionalEmbedding sincos_pos_embed(int n_tokens, int dim, int grid_h, int grid_w) {
    if (dim % 4 != 0) {
        throw_config("sincos_pos_embed: dim must be divisible by 4, got " + std::to_string(dim));
    }
    if (grid_h * grid_w != n_tokens) {
        throw_config("sincos_pos_embed: grid " + std::to_string(grid_h) + "x" +
                     std::to_string(grid_w) + " does not cover " + std::to_string(n_tokens) +
                     " tokens");
    }
    PositionalEmbedding emb;
    emb.table = Mat(n_tokens + 1, dim);  // row 0 stays zero for the class token
    const int half = dim / 2;
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            double* row = emb.table.row_ptr(1 + r * grid_w + c);
            fill_axis(row, half, static_cast<double>(r));
            fill_axis(row + half, half, static_cast<double>(c));
        }
    }
    return emb;
}

}  // namespace sdmae::masking
