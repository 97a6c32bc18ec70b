#pragma once

#include <cstddef>

namespace tsa::kernels {

// Production kernels for the dense inner loops. Loops parallelize with OpenMP
// when enabled and the problem is large enough to pay for a fork; every
// parallel loop owns a disjoint output slice and accumulates serially inside
// it, so results are bit-identical to the serial reference for any thread
// count. tsa::kernels::serial holds the naive reference used by the tests and
// the benchmark.
//
// Matrix convention: row-major, C is m x n.
//   matmul_nn: C (+)= A[m,k] * B[k,n]
//   matmul_nt: C (+)= A[m,k] * B[n,k]^T
//   matmul_tn: C (+)= A[k,m]^T * B[k,n]   (here A is stored [k,m], C is m x n)

bool& openmp_enabled();  // process-wide switch, default true

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);

// Row-wise, numerically safe softmax (max subtraction per row).
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
// dx += J_softmax^T dy given the forward output y.
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows,
                           std::size_t cols);

// y = gamma * xhat + beta with xhat = (x - mean) / sqrt(var + eps), biased
// variance. xhat and inv_std are cached for the backward pass.
void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y,
                     double* xhat, double* inv_std, std::size_t rows, std::size_t cols,
                     double eps);
void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gamma,
                              const double* dy, double* dx, double* dgamma, double* dbeta,
                              std::size_t rows, std::size_t cols);

// Exact-erf GELU: y = x * Phi(x).
void gelu(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);

void add(const double* a, const double* b, double* c, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha * x

namespace serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows,
                           std::size_t cols);
void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y,
                     double* xhat, double* inv_std, std::size_t rows, std::size_t cols,
                     double eps);
void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gamma,
                              const double* dy, double* dx, double* dgamma, double* dbeta,
                              std::size_t rows, std::size_t cols);
void gelu(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);
void add(const double* a, const double* b, double* c, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

}  // namespace serial

}  // namespace tsa::kernels
