// Naive serial reference kernels. These are the oracles the production
// OpenMP kernels are tested and benchmarked against; keep them obvious.
#include <cmath>

#include "tsa/kernels.hpp"

namespace tsa::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows,
                           std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = y + r * cols;
    const double* dyr = dy + r * cols;
    double* dxr = dx + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
    for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y,
                     double* xhat, double* inv_std, std::size_t rows, std::size_t cols,
                     double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(cols);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[r * cols + j] = (xr[j] - mean) * istd;
      y[r * cols + j] = gamma[j] * xhat[r * cols + j] + beta[j];
    }
  }
}

void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gamma,
                              const double* dy, double* dx, double* dgamma, double* dbeta,
                              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      dgamma[j] += dy[r * cols + j] * xhat[r * cols + j];
      dbeta[j] += dy[r * cols + j];
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double sum_g = 0.0, sum_gh = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = dy[r * cols + j] * gamma[j];
      sum_g += g;
      sum_gh += g * xhat[r * cols + j];
    }
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = dy[r * cols + j] * gamma[j];
      dx[r * cols + j] +=
          (g - inv_n * sum_g - xhat[r * cols + j] * inv_n * sum_gh) * inv_std[r];
    }
  }
}

void gelu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] * 0.5 * std::erfc(-x[i] * M_SQRT1_2);
  }
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double cdf = 0.5 * std::erfc(-x[i] * M_SQRT1_2);
    const double pdf = std::exp(-0.5 * x[i] * x[i]) * 0.3989422804014327;
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

void add(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace tsa::kernels::serial
