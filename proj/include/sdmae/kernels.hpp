#pragma once

#include <cstdint>

namespace sdmae::kernels {

// ---------------------------------------------------------------------------
// Dense double-precision kernels behind the autodiff ops.
//
// Each kernel exists twice with an identical signature: the OpenMP version in
// this namespace (parallel over rows / elements) and a plain serial reference
// in kernels::ref. Both traverse each output element in the same scalar order, so
// their results are bit-identical; tests assert exact equality and the bench
// target times them against each other.
//
// Matrices are row-major. M, K, N always describe op(A): M x K and op(B): K x N.
// ---------------------------------------------------------------------------

namespace ref {

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate);

void add(const double* a, const double* b, double* c, std::int64_t n);
void axpy(double alpha, const double* x, double* y, std::int64_t n);
void scale(const double* x, double alpha, double* y, std::int64_t n);

void gelu_forward(const double* x, double* y, std::int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::int64_t n);

// Saves xhat and inv_std for the backward pass.
void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        int rows, int cols, double eps);
void layer_norm_backward(const double* xhat, const double* inv_std, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         int rows, int cols);

void softmax_rows_forward(const double* x, double* y, int rows, int cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx, int rows, int cols);

}  // namespace ref

void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool trans_a, bool trans_b, bool accumulate);

void add(const double* a, const double* b, double* c, std::int64_t n);
void axpy(double alpha, const double* x, double* y, std::int64_t n);
void scale(const double* x, double alpha, double* y, std::int64_t n);

void gelu_forward(const double* x, double* y, std::int64_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::int64_t n);

void layer_norm_forward(const double* x, const double* gamma, const double* beta,
                        double* y, double* xhat, double* inv_std,
                        int rows, int cols, double eps);
void layer_norm_backward(const double* xhat, const double* inv_std, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         int rows, int cols);

void softmax_rows_forward(const double* x, double* y, int rows, int cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx, int rows, int cols);

}  // namespace sdmae::kernels
