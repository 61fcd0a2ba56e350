#pragma once

#include <span>
#include <vector>

#include "sdmae/common.hpp"
#include "sdmae/params.hpp"

namespace sdmae::ad {

// ---------------------------------------------------------------------------
// Reverse-mode autodiff on matrices.
//
// The Graph is an eager tape: each op computes its value immediately and
// records enough to replay gradients in reverse. One graph holds one training
// step; parameters bind as leaves (deduplicated, so re-using a Param in both
// augmented views accumulates into a single gradient).
//
// Nodes whose ancestry contains no grad-requiring leaf are skipped in
// backward. The momentum (key) branch is built from constants, which is
// exactly the stop-gradient the contrastive task needs.
// ---------------------------------------------------------------------------

class Graph;

struct Var {
    Graph* g = nullptr;
    int id = -1;

    int rows() const;
    int cols() const;
    const Mat& value() const;
    const Mat& grad() const;
    bool valid() const { return g != nullptr && id >= 0; }
};

enum class Op {
    Leaf,
    Add,
    Sub,
    Scale,
    AddRowVec,
    MatMul,
    Gelu,
    LayerNorm,
    SoftmaxRows,
    L2NormalizeRows,
    GatherRows,
    SliceRows,
    SliceCols,
    ConcatRows,
    ConcatCols,
    Reassemble,
    CrossEntropyRows,
    MseConst,
    MeanAll,
};

struct Node {
    Op op = Op::Leaf;
    int a = -1, b = -1, c = -1;       // argument node ids
    std::vector<int> arg_list;        // concat inputs
    std::vector<int> indices;         // gather/reassemble/cross-entropy targets
    bool trans_a = false, trans_b = false;
    double scalar = 0.0;              // scale factor or epsilon
    int i0 = 0, i1 = 0;               // slice offsets / reassemble total
    Mat value;
    Mat grad;
    Mat aux;                          // layernorm xhat, softmax output copy, mse target
    std::vector<double> aux_vec;      // layernorm inv_std
    bool requires_grad = false;
    Param* bound = nullptr;           // set for parameter leaves
};

class Graph {
public:
    // ---- leaves ----
    Var leaf(Mat value, bool requires_grad);
    Var constant(Mat value) { return leaf(std::move(value), false); }
    Var param(Param& p);   // deduplicated per graph

    // ---- ops ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var add_rowvec(Var a, Var row);                      // row broadcast over a's rows
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var gelu(Var a);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
    Var softmax_rows(Var a);
    Var l2_normalize_rows(Var a, double eps = 1e-12);
    Var gather_rows(Var a, std::vector<int> idx);
    Var slice_rows(Var a, int start, int len);
    Var slice_cols(Var a, int start, int len);
    Var concat_rows(std::span<const Var> parts);
    Var concat_cols(std::span<const Var> parts);
    // out[i] = visible row (in order) for i in visible_idx, else fill_row.
    Var reassemble(Var visible, Var fill_row, const std::vector<int>& visible_idx, int n_total);
    Var cross_entropy_rows(Var logits, std::vector<int> targets);  // N x 1
    Var mse_const(Var pred, Mat target);                           // 1 x 1
    Var mean_all(Var a);                                           // 1 x 1

    // ---- execution ----
    void backward(Var loss);   // seeds d(loss)=1, accumulates into bound Params
    size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[id]; }
    Node& node(int id) { return nodes_[id]; }

private:
    friend struct Var;
    Var push(Node n);
    void ensure_grad(int id);
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::unordered_map<const Param*, int> param_leaves_;
    bool backward_done_ = false;
};

}  // namespace sdmae::ad
