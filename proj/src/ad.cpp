#include "sdmae/ad.hpp"

#include <cmath>
#include <cstring>

#include "sdmae/kernels.hpp"

namespace sdmae::ad {

int Var::rows() const { return g->node(id).value.rows; }
int Var::cols() const { return g->node(id).value.cols; }
const Mat& Var::value() const { return g->node(id).value; }
const Mat& Var::grad() const { return g->node(id).grad; }

Var Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Mat value, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Var Graph::param(Param& p) {
    auto it = param_leaves_.find(&p);
    if (it != param_leaves_.end()) return Var{this, it->second};
    Node n;
    n.op = Op::Leaf;
    n.value = p.value;
    n.requires_grad = true;
    n.bound = &p;
    Var v = push(std::move(n));
    param_leaves_[&p] = v.id;
    return v;
}

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (!a.same_shape(b)) {
        throw_config(std::string(op) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols) + ")");
    }
}

}  // namespace

Var Graph::add(Var a, Var b) {
    const Mat& av = node(a.id).value;
    const Mat& bv = node(b.id).value;
    check_same_shape(av, bv, "add");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    kernels::add(av.data.data(), bv.data.data(), n.value.data.data(),
                 static_cast<std::int64_t>(av.size()));
    return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
    const Mat& av = node(a.id).value;
    const Mat& bv = node(b.id).value;
    check_same_shape(av, bv, "sub");
    Node n;
    n.op = Op::Sub;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    for (size_t i = 0; i < av.size(); ++i) n.value.data[i] = av.data[i] - bv.data[i];
    return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
    const Mat& av = node(a.id).value;
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.scalar = s;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    kernels::scale(av.data.data(), s, n.value.data.data(), static_cast<std::int64_t>(av.size()));
    return push(std::move(n));
}

Var Graph::add_rowvec(Var a, Var row) {
    const Mat& av = node(a.id).value;
    const Mat& rv = node(row.id).value;
    if (rv.rows != 1 || rv.cols != av.cols) {
        throw_config("add_rowvec: row must be 1x" + std::to_string(av.cols));
    }
    Node n;
    n.op = Op::AddRowVec;
    n.a = a.id;
    n.b = row.id;
    n.requires_grad = node(a.id).requires_grad || node(row.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    for (int r = 0; r < av.rows; ++r) {
        const double* src = av.row_ptr(r);
        double* dst = n.value.row_ptr(r);
        for (int c = 0; c < av.cols; ++c) dst[c] = src[c] + rv.data[c];
    }
    return push(std::move(n));
}

Var Graph::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    const Mat& av = node(a.id).value;
    const Mat& bv = node(b.id).value;
    const int m = trans_a ? av.cols : av.rows;
    const int k = trans_a ? av.rows : av.cols;
    const int kb = trans_b ? bv.cols : bv.rows;
    const int nn = trans_b ? bv.rows : bv.cols;
    if (k != kb) {
        throw_config("matmul: inner dimensions disagree (" + std::to_string(k) + " vs " +
                     std::to_string(kb) + ")");
    }
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    n.value = Mat(m, nn);
    kernels::matmul(av.data.data(), bv.data.data(), n.value.data.data(), m, k, nn,
                    trans_a, trans_b, false);
    return push(std::move(n));
}

Var Graph::gelu(Var a) {
    const Mat& av = node(a.id).value;
    Node n;
    n.op = Op::Gelu;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    kernels::gelu_forward(av.data.data(), n.value.data.data(), static_cast<std::int64_t>(av.size()));
    return push(std::move(n));
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Mat& xv = node(x.id).value;
    const Mat& gv = node(gamma.id).value;
    const Mat& bv = node(beta.id).value;
    if (gv.rows != 1 || gv.cols != xv.cols || bv.rows != 1 || bv.cols != xv.cols) {
        throw_config("layer_norm: gamma/beta must be 1x" + std::to_string(xv.cols));
    }
    Node n;
    n.op = Op::LayerNorm;
    n.a = x.id;
    n.b = gamma.id;
    n.c = beta.id;
    n.scalar = eps;
    n.requires_grad =
        node(x.id).requires_grad || node(gamma.id).requires_grad || node(beta.id).requires_grad;
    n.value = Mat(xv.rows, xv.cols);
    n.aux = Mat(xv.rows, xv.cols);  // xhat
    n.aux_vec.assign(xv.rows, 0.0);
    kernels::layer_norm_forward(xv.data.data(), gv.data.data(), bv.data.data(),
                                n.value.data.data(), n.aux.data.data(), n.aux_vec.data(),
                                xv.rows, xv.cols, eps);
    return push(std::move(n));
}

Var Graph::softmax_rows(Var a) {
    const Mat& av = node(a.id).value;
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    kernels::softmax_rows_forward(av.data.data(), n.value.data.data(), av.rows, av.cols);
    return push(std::move(n));
}

Var Graph::l2_normalize_rows(Var a, double eps) {
    const Mat& av = node(a.id).value;
    Node n;
    n.op = Op::L2NormalizeRows;
    n.a = a.id;
    n.scalar = eps;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(av.rows, av.cols);
    n.aux_vec.assign(av.rows, 0.0);  // norms
    for (int r = 0; r < av.rows; ++r) {
        const double* src = av.row_ptr(r);
        double s = 0.0;
        for (int c = 0; c < av.cols; ++c) s += src[c] * src[c];
        const double norm = std::sqrt(s + eps);
        n.aux_vec[r] = norm;
        double* dst = n.value.row_ptr(r);
        for (int c = 0; c < av.cols; ++c) dst[c] = src[c] / norm;
    }
    return push(std::move(n));
}

Var Graph::gather_rows(Var a, std::vector<int> idx) {
    const Mat& av = node(a.id).value;
    for (int i : idx) {
        if (i < 0 || i >= av.rows) throw_config("gather_rows: index out of range");
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = a.id;
    n.indices = std::move(idx);
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(static_cast<int>(n.indices.size()), av.cols);
    for (size_t r = 0; r < n.indices.size(); ++r) {
        std::memcpy(n.value.row_ptr(static_cast<int>(r)), av.row_ptr(n.indices[r]),
                    sizeof(double) * av.cols);
    }
    return push(std::move(n));
}

Var Graph::slice_rows(Var a, int start, int len) {
    const Mat& av = node(a.id).value;
    if (start < 0 || len < 0 || start + len > av.rows) throw_config("slice_rows: out of range");
    Node n;
    n.op = Op::SliceRows;
    n.a = a.id;
    n.i0 = start;
    n.i1 = len;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(len, av.cols);
    std::memcpy(n.value.data.data(), av.row_ptr(start), sizeof(double) * len * av.cols);
    return push(std::move(n));
}

Var Graph::slice_cols(Var a, int start, int len) {
    const Mat& av = node(a.id).value;
    if (start < 0 || len < 0 || start + len > av.cols) throw_config("slice_cols: out of range");
    Node n;
    n.op = Op::SliceCols;
    n.a = a.id;
    n.i0 = start;
    n.i1 = len;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(av.rows, len);
    for (int r = 0; r < av.rows; ++r) {
        std::memcpy(n.value.row_ptr(r), av.row_ptr(r) + start, sizeof(double) * len);
    }
    return push(std::move(n));
}

Var Graph::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw_config("concat_rows: no inputs");
    const int cols = node(parts[0].id).value.cols;
    int rows = 0;
    bool rg = false;
    for (const Var& p : parts) {
        const Mat& v = node(p.id).value;
        if (v.cols != cols) throw_config("concat_rows: column mismatch");
        rows += v.rows;
        rg = rg || node(p.id).requires_grad;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.requires_grad = rg;
    n.value = Mat(rows, cols);
    int at = 0;
    for (const Var& p : parts) {
        const Mat& v = node(p.id).value;
        std::memcpy(n.value.row_ptr(at), v.data.data(), sizeof(double) * v.size());
        at += v.rows;
        n.arg_list.push_back(p.id);
    }
    return push(std::move(n));
}

Var Graph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw_config("concat_cols: no inputs");
    const int rows = node(parts[0].id).value.rows;
    int cols = 0;
    bool rg = false;
    for (const Var& p : parts) {
        const Mat& v = node(p.id).value;
        if (v.rows != rows) throw_config("concat_cols: row mismatch");
        cols += v.cols;
        rg = rg || node(p.id).requires_grad;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.requires_grad = rg;
    n.value = Mat(rows, cols);
    int at = 0;
    for (const Var& p : parts) {
        const Mat& v = node(p.id).value;
        for (int r = 0; r < rows; ++r) {
            std::memcpy(n.value.row_ptr(r) + at, v.row_ptr(r), sizeof(double) * v.cols);
        }
        at += v.cols;
        n.arg_list.push_back(p.id);
    }
    return push(std::move(n));
}

Var Graph::reassemble(Var visible, Var fill_row, const std::vector<int>& visible_idx, int n_total) {
    const Mat& vv = node(visible.id).value;
    const Mat& fv = node(fill_row.id).value;
    if (static_cast<int>(visible_idx.size()) != vv.rows) {
        throw_config("reassemble: visible row count (" + std::to_string(vv.rows) +
                     ") != plan visible count (" + std::to_string(visible_idx.size()) + ")");
    }
    if (fv.rows != 1 || fv.cols != vv.cols) {
        throw_config("reassemble: fill row must be 1x" + std::to_string(vv.cols));
    }
    Node n;
    n.op = Op::Reassemble;
    n.a = visible.id;
    n.b = fill_row.id;
    n.indices = visible_idx;
    n.i1 = n_total;
    n.requires_grad = node(visible.id).requires_grad || node(fill_row.id).requires_grad;
    n.value = Mat(n_total, vv.cols);
    for (int r = 0; r < n_total; ++r) {
        std::memcpy(n.value.row_ptr(r), fv.data.data(), sizeof(double) * fv.cols);
    }
    for (size_t j = 0; j < visible_idx.size(); ++j) {
        const int dst = visible_idx[j];
        if (dst < 0 || dst >= n_total) throw_config("reassemble: index out of range");
        std::memcpy(n.value.row_ptr(dst), vv.row_ptr(static_cast<int>(j)), sizeof(double) * vv.cols);
    }
    return push(std::move(n));
}

Var Graph::cross_entropy_rows(Var logits, std::vector<int> targets) {
    const Mat& lv = node(logits.id).value;
    if (static_cast<int>(targets.size()) != lv.rows) {
        throw_config("cross_entropy_rows: one target per row required");
    }
    for (int t : targets) {
        if (t < 0 || t >= lv.cols) throw_config("cross_entropy_rows: target out of range");
    }
    Node n;
    n.op = Op::CrossEntropyRows;
    n.a = logits.id;
    n.indices = std::move(targets);
    n.requires_grad = node(logits.id).requires_grad;
    n.value = Mat(lv.rows, 1);
    n.aux = Mat(lv.rows, lv.cols);  // softmax probabilities for backward
    kernels::softmax_rows_forward(lv.data.data(), n.aux.data.data(), lv.rows, lv.cols);
    for (int r = 0; r < lv.rows; ++r) {
        // loss = logsumexp(x) - x[t], computed stably from the softmax row
        const double p = n.aux.at(r, n.indices[r]);
        n.value.at(r, 0) = -std::log(p);
    }
    return push(std::move(n));
}

Var Graph::mse_const(Var pred, Mat target) {
    const Mat& pv = node(pred.id).value;
    check_same_shape(pv, target, "mse_const");
    Node n;
    n.op = Op::MseConst;
    n.a = pred.id;
    n.requires_grad = node(pred.id).requires_grad;
    n.aux = std::move(target);
    double sum = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        const double d = pv.data[i] - n.aux.data[i];
        sum += d * d;
    }
    n.value = Mat(1, 1);
    n.value.data[0] = sum / static_cast<double>(pv.size());
    return push(std::move(n));
}

Var Graph::mean_all(Var a) {
    const Mat& av = node(a.id).value;
    Node n;
    n.op = Op::MeanAll;
    n.a = a.id;
    n.requires_grad = node(a.id).requires_grad;
    n.value = Mat(1, 1);
    double sum = 0.0;
    for (double v : av.data) sum += v;
    n.value.data[0] = sum / static_cast<double>(av.size());
    return push(std::move(n));
}

void Graph::ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.rows == 0) n.grad = Mat(n.value.rows, n.value.cols);
}

void Graph::backward(Var loss) {
    if (backward_done_) throw_config("backward: already run on this graph");
    backward_done_ = true;
    Node& top = nodes_[loss.id];
    if (top.value.rows != 1 || top.value.cols != 1) {
        throw_config("backward: loss must be a 1x1 node");
    }
    for (int id = 0; id <= loss.id; ++id) {
        if (nodes_[id].requires_grad) ensure_grad(id);
    }
    if (!top.requires_grad) return;  // nothing trainable upstream
    top.grad.data[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        if (nodes_[id].requires_grad && nodes_[id].op != Op::Leaf) backward_node(id);
    }
    for (const auto& kv : param_leaves_) {
        Node& leaf = nodes_[kv.second];
        if (leaf.grad.rows != 0) {
            kernels::axpy(1.0, leaf.grad.data.data(), leaf.bound->grad.data.data(),
                          static_cast<std::int64_t>(leaf.grad.size()));
        }
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    auto rg = [&](int arg) { return arg >= 0 && nodes_[arg].requires_grad; };
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            if (rg(n.a))
                kernels::axpy(1.0, n.grad.data.data(), nodes_[n.a].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            if (rg(n.b))
                kernels::axpy(1.0, n.grad.data.data(), nodes_[n.b].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            break;
        }
        case Op::Sub: {
            if (rg(n.a))
                kernels::axpy(1.0, n.grad.data.data(), nodes_[n.a].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            if (rg(n.b))
                kernels::axpy(-1.0, n.grad.data.data(), nodes_[n.b].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            break;
        }
        case Op::Scale: {
            if (rg(n.a))
                kernels::axpy(n.scalar, n.grad.data.data(), nodes_[n.a].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            break;
        }
        case Op::AddRowVec: {
            if (rg(n.a))
                kernels::axpy(1.0, n.grad.data.data(), nodes_[n.a].grad.data.data(),
                              static_cast<std::int64_t>(n.grad.size()));
            if (rg(n.b)) {
                Mat& db = nodes_[n.b].grad;
                for (int r = 0; r < n.grad.rows; ++r) {
                    const double* gr = n.grad.row_ptr(r);
                    for (int c = 0; c < n.grad.cols; ++c) db.data[c] += gr[c];
                }
            }
            break;
        }
        case Op::MatMul: {
            const Mat& av = nodes_[n.a].value;
            const Mat& bv = nodes_[n.b].value;
            const Mat& dc = n.grad;
            const int m = dc.rows, nn = dc.cols;
            const int k = n.trans_a ? av.rows : av.cols;
            // Four layouts; each gradient is itself a matmul into the arg grad.
            if (!n.trans_a && !n.trans_b) {
                if (rg(n.a))
                    kernels::matmul(dc.data.data(), bv.data.data(), nodes_[n.a].grad.data.data(),
                                    m, nn, k, false, true, true);
                if (rg(n.b))
                    kernels::matmul(av.data.data(), dc.data.data(), nodes_[n.b].grad.data.data(),
                                    k, m, nn, true, false, true);
            } else if (!n.trans_a && n.trans_b) {
                if (rg(n.a))
                    kernels::matmul(dc.data.data(), bv.data.data(), nodes_[n.a].grad.data.data(),
                                    m, nn, k, false, false, true);
                if (rg(n.b))
                    kernels::matmul(dc.data.data(), av.data.data(), nodes_[n.b].grad.data.data(),
                                    nn, m, k, true, false, true);
            } else if (n.trans_a && !n.trans_b) {
                if (rg(n.a))
                    kernels::matmul(bv.data.data(), dc.data.data(), nodes_[n.a].grad.data.data(),
                                    k, nn, m, false, true, true);
                if (rg(n.b))
                    kernels::matmul(av.data.data(), dc.data.data(), nodes_[n.b].grad.data.data(),
                                    k, m, nn, false, false, true);
            } else {
                if (rg(n.a))
                    kernels::matmul(bv.data.data(), dc.data.data(), nodes_[n.a].grad.data.data(),
                                    k, nn, m, true, true, true);
                if (rg(n.b))
                    kernels::matmul(dc.data.data(), av.data.data(), nodes_[n.b].grad.data.data(),
                                    nn, m, k, true, true, true);
            }
            break;
        }
        case Op::Gelu: {
            if (rg(n.a)) {
                const Mat& x = nodes_[n.a].value;
                kernels::gelu_backward(x.data.data(), n.grad.data.data(),
                                       nodes_[n.a].grad.data.data(),
                                       static_cast<std::int64_t>(x.size()));
            }
            break;
        }
        case Op::LayerNorm: {
            const Mat& gv = nodes_[n.b].value;
            // The kernel always writes all three grads; route unneeded ones to scratch.
            Mat scratch_dx, scratch_dg, scratch_db;
            double* dx = rg(n.a) ? nodes_[n.a].grad.data.data()
                                 : (scratch_dx = Mat(n.value.rows, n.value.cols)).data.data();
            double* dg = rg(n.b) ? nodes_[n.b].grad.data.data()
                                 : (scratch_dg = Mat(1, n.value.cols)).data.data();
            double* db = rg(n.c) ? nodes_[n.c].grad.data.data()
                                 : (scratch_db = Mat(1, n.value.cols)).data.data();
            kernels::layer_norm_backward(n.aux.data.data(), n.aux_vec.data(), gv.data.data(),
                                         n.grad.data.data(), dx, dg, db, n.value.rows,
                                         n.value.cols);
            break;
        }
        case Op::SoftmaxRows: {
            if (rg(n.a)) {
                kernels::softmax_rows_backward(n.value.data.data(), n.grad.data.data(),
                                               nodes_[n.a].grad.data.data(), n.value.rows,
                                               n.value.cols);
            }
            break;
        }
        case Op::L2NormalizeRows: {
            if (rg(n.a)) {
                const Mat& x = nodes_[n.a].value;
                Mat& dx = nodes_[n.a].grad;
                for (int r = 0; r < x.rows; ++r) {
                    const double* xr = x.row_ptr(r);
                    const double* gr = n.grad.row_ptr(r);
                    double* dr = dx.row_ptr(r);
                    const double norm = n.aux_vec[r];
                    double dot = 0.0;
                    for (int c = 0; c < x.cols; ++c) dot += gr[c] * xr[c];
                    const double inv = 1.0 / norm;
                    const double inv3 = inv * inv * inv;
                    for (int c = 0; c < x.cols; ++c) dr[c] += gr[c] * inv - xr[c] * dot * inv3;
                }
            }
            break;
        }
        case Op::GatherRows: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                for (size_t r = 0; r < n.indices.size(); ++r) {
                    const double* gr = n.grad.row_ptr(static_cast<int>(r));
                    double* dr = da.row_ptr(n.indices[r]);
                    for (int c = 0; c < n.grad.cols; ++c) dr[c] += gr[c];
                }
            }
            break;
        }
        case Op::SliceRows: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                kernels::axpy(1.0, n.grad.data.data(), da.row_ptr(n.i0),
                              static_cast<std::int64_t>(n.grad.size()));
            }
            break;
        }
        case Op::SliceCols: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                for (int r = 0; r < n.grad.rows; ++r) {
                    const double* gr = n.grad.row_ptr(r);
                    double* dr = da.row_ptr(r) + n.i0;
                    for (int c = 0; c < n.i1; ++c) dr[c] += gr[c];
                }
            }
            break;
        }
        case Op::ConcatRows: {
            int at = 0;
            for (int arg : n.arg_list) {
                const Mat& v = nodes_[arg].value;
                if (rg(arg)) {
                    kernels::axpy(1.0, n.grad.row_ptr(at), nodes_[arg].grad.data.data(),
                                  static_cast<std::int64_t>(v.size()));
                }
                at += v.rows;
            }
            break;
        }
        case Op::ConcatCols: {
            int at = 0;
            for (int arg : n.arg_list) {
                const Mat& v = nodes_[arg].value;
                if (rg(arg)) {
                    Mat& da = nodes_[arg].grad;
                    for (int r = 0; r < v.rows; ++r) {
                        const double* gr = n.grad.row_ptr(r) + at;
                        double* dr = da.row_ptr(r);
                        for (int c = 0; c < v.cols; ++c) dr[c] += gr[c];
                    }
                }
                at += v.cols;
            }
            break;
        }
        case Op::Reassemble: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                for (size_t j = 0; j < n.indices.size(); ++j) {
                    kernels::axpy(1.0, n.grad.row_ptr(n.indices[j]),
                                  da.row_ptr(static_cast<int>(j)), n.grad.cols);
                }
            }
            if (rg(n.b)) {
                std::vector<char> visible(n.value.rows, 0);
                for (int i : n.indices) visible[i] = 1;
                Mat& db = nodes_[n.b].grad;
                for (int r = 0; r < n.value.rows; ++r) {
                    if (visible[r]) continue;
                    const double* gr = n.grad.row_ptr(r);
                    for (int c = 0; c < n.grad.cols; ++c) db.data[c] += gr[c];
                }
            }
            break;
        }
        case Op::CrossEntropyRows: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                for (int r = 0; r < n.aux.rows; ++r) {
                    const double g = n.grad.at(r, 0);
                    const double* pr = n.aux.row_ptr(r);
                    double* dr = da.row_ptr(r);
                    for (int c = 0; c < n.aux.cols; ++c) dr[c] += g * pr[c];
                    dr[n.indices[r]] -= g;
                }
            }
            break;
        }
        case Op::MseConst: {
            if (rg(n.a)) {
                const Mat& pv = nodes_[n.a].value;
                Mat& da = nodes_[n.a].grad;
                const double g = 2.0 * n.grad.data[0] / static_cast<double>(pv.size());
                for (size_t i = 0; i < pv.size(); ++i) {
                    da.data[i] += g * (pv.data[i] - n.aux.data[i]);
                }
            }
            break;
        }
        case Op::MeanAll: {
            if (rg(n.a)) {
                Mat& da = nodes_[n.a].grad;
                const double g = n.grad.data[0] / static_cast<double>(da.size());
                for (auto& v : da.data) v += g;
            }
            break;
        }
    }
}

}  // namespace sdmae::ad
