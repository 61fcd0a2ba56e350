#include "sdmae/kernels.hpp"

#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sdmae::kernels {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

inline double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// One output row of C = op(A) * op(B). Accumulation over k runs in ascending
// order for every variant, which is what makes ref and omp bit-identical.
inline void matmul_row(const double* a, const double* b, double* c, int i,
                       int m, int k, int n, bool trans_a, bool trans_b,
                       bool accumulate) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) {
        std::memset(crow, 0, sizeof(double) * n);
    }
    if (!trans_b) {
        // C[i,:] += A[i,kk] * B[kk,:]  (row streaming over B)
        for (int kk = 0; kk < k; ++kk) {
            const double av = trans_a ? a[static_cast<size_t>(kk) * m + i]
                                      : a[static_cast<size_t>(i) * k + kk];
            const double* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    } else {
        // B is stored n x k; each C[i,j] is a contiguous dot product.
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<size_t>(j) * k;
            double sum = 0.0;
            if (!trans_a) {
                const double* arow = a + static_cast<size_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) sum += arow[kk] * brow[kk];
            } else {
                for (int kk = 0; kk < k; ++kk) sum += a[static_cast<size_t>(kk) * m + i] * brow[kk];
            }
            crow[j] += sum;
        }
    }
}

inline void layer_norm_row(const double* x, const double* gamma, const double* beta,
                           double* y, double* xhat, double* inv_std,
                           int r, int cols, double eps) {
    const double* xr = x + static_cast<size_t>(r) * cols;
    double* yr = y + static_cast<size_t>(r) * cols;
    double* hr = xhat + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) {
        const double d = xr[c] - mean;
        var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int c = 0; c < cols; ++c) {
        hr[c] = (xr[c] - mean) * is;
        yr[c] = gamma[c] * hr[c] + beta[c];
    }
}

inline void layer_norm_backward_row(const double* xhat, const double* inv_std,
                                    const double* gamma, const double* dy, double* dx,
                                    int r, int cols) {
    const double* hr = xhat + static_cast<size_t>(r) * cols;
    const double* dyr = dy + static_cast<size_t>(r) * cols;
    double* dxr = dx + static_cast<size_t>(r) * cols;
    double sum_g = 0.0, sum_gh = 0.0;
    for (int c = 0; c < cols; ++c) {
        const double g = gamma[c] * dyr[c];
        sum_g += g;
        sum_gh += g * hr[c];
    }
    const double mg = sum_g / cols;
    const double mgh = sum_gh / cols;
    const double is = inv_std[r];
    for (int c = 0; c < cols; ++c) {
        dxr[c] += (gamma[c] * dyr[c] - mg - hr[c] * mgh) * is;
    }
}

inline void softmax_row(const double* x, double* y, int r, int cols) {
    const double* xr = x + static_cast<size_t>(r) * cols;
    double* yr = y + static_cast<size_t>(r) * cols;
    double mx = xr[0];
    for (int c = 1; c < cols; ++c) mx = xr[c] > mx ? xr[c] : mx;
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
        yr[c] = std::exp(xr[c] - mx);
        sum += yr[c];
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < cols; ++c) yr[c] *= inv;
}

inline void softmax_backward_row(const double* y, const double* dy, double* dx, int r, int cols) {
    const double* yr = y + static_cast<size_t>(r) * cols;
    const double* dyr = dy + static_cast<size_t>(r) * cols;
    double* dxr = dx + static_cast<size_t>(r) * cols;
    double dot = 0.0;
    for (int c = 0; c < cols; ++c) dot += yr[c] * dyr[c];
    for (int c = 0; c < cols; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
}

}  // namespace

// ----------------------------- serial reference -----------------------------

namespace ref {

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        matmul_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
    }
}

void add(const double* a, const double* b, double* c, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void axpy(double alpha, const double* x, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const double* x, double alpha, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void gelu_forward(const double* x, double* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        int rows, int cols, double eps) {
    for (int r = 0; r < rows; ++r) {
        layer_norm_row(x, gamma, beta, y, xhat, inv_std, r, cols, eps);
    }
}

void layer_norm_backward(const double* xhat, const double* inv_std, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         int rows, int cols) {
    // dgamma/dbeta reduce over rows; kept serial so accumulation order is pinned.
    for (int r = 0; r < rows; ++r) {
        const double* hr = xhat + static_cast<size_t>(r) * cols;
        const double* dyr = dy + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            dgamma[c] += dyr[c] * hr[c];
            dbeta[c] += dyr[c];
        }
    }
    for (int r = 0; r < rows; ++r) {
        layer_norm_backward_row(xhat, inv_std, gamma, dy, dx, r, cols);
    }
}

void softmax_rows_forward(const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) softmax_backward_row(y, dy, dx, r, cols);
}

}  // namespace ref

// ------------------------------ OpenMP kernels ------------------------------

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * k * n > 32768)
    for (int i = 0; i < m; ++i) {
        matmul_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
    }
}

void add(const double* a, const double* b, double* c, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void axpy(double alpha, const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(const double* x, double alpha, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > 16384)
    for (std::int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void gelu_forward(const double* x, double* y, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n > 4096)
    for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        int rows, int cols, double eps) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * cols > 8192)
    for (int r = 0; r < rows; ++r) {
        layer_norm_row(x, gamma, beta, y, xhat, inv_std, r, cols, eps);
    }
}

void layer_norm_backward(const double* xhat, const double* inv_std, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         int rows, int cols) {
    // Row reduction into dgamma/dbeta stays serial: parallelizing it would race
    // (or need a reduction whose order depends on the thread count).
    for (int r = 0; r < rows; ++r) {
        const double* hr = xhat + static_cast<size_t>(r) * cols;
        const double* dyr = dy + static_cast<size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            dgamma[c] += dyr[c] * hr[c];
            dbeta[c] += dyr[c];
        }
    }
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * cols > 8192)
    for (int r = 0; r < rows; ++r) {
        layer_norm_backward_row(xhat, inv_std, gamma, dy, dx, r, cols);
    }
}

void softmax_rows_forward(const double* x, double* y, int rows, int cols) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * cols > 8192)
    for (int r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, int rows, int cols) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(rows) * cols > 8192)
    for (int r = 0; r < rows; ++r) softmax_backward_row(y, dy, dx, r, cols);
}

}  // namespace sdmae::kernels
