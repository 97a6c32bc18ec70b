#include "tsa/kernels.hpp"

#include <cmath>

namespace tsa::kernels {

namespace {

// Work below these sizes runs serial; a fork costs more than the loop.
constexpr std::size_t kMatmulParThreshold = 64 * 1024;  // m*k*n
constexpr std::size_t kRowParThreshold = 16 * 1024;     // rows*cols
constexpr std::size_t kEltParThreshold = 32 * 1024;

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014327; }

// Small loops must not touch the OpenMP runtime at all: entering a nested
// region, even with an if(false) clause, serializes on runtime internals.
template <class F>
inline void par_for(std::size_t n, bool par, const F& body) {
  if (par) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace

bool& openmp_enabled() {
  static bool enabled = true;
  return enabled;
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const bool par = openmp_enabled() && m * k * n >= kMatmulParThreshold && m > 1;
  par_for(m, par, [=](std::size_t i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    }
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  });
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const bool par = openmp_enabled() && m * k * n >= kMatmulParThreshold && m > 1;
  par_for(m, par, [=](std::size_t i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + acc : acc;
    }
  });
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  // a is stored [k, m]; c[i,j] = sum_p a[p,i] * b[p,j].
  const bool par = openmp_enabled() && m * k * n >= kMatmulParThreshold && m > 1;
  par_for(m, par, [=](std::size_t i) {
    double* ci = c + i * n;
    if (!accumulate) {
      for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
    }
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  });
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const bool par = openmp_enabled() && rows * cols >= kRowParThreshold && rows > 1;
  par_for(rows, par, [=](std::size_t r) {
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
  });
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows,
                           std::size_t cols) {
  const bool par = openmp_enabled() && rows * cols >= kRowParThreshold && rows > 1;
  par_for(rows, par, [=](std::size_t r) {
    const double* yr = y + r * cols;
    const double* dyr = dy + r * cols;
    double* dxr = dx + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
    for (std::size_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  });
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y,
                     double* xhat, double* inv_std, std::size_t rows, std::size_t cols,
                     double eps) {
  const bool par = openmp_enabled() && rows * cols >= kRowParThreshold && rows > 1;
  par_for(rows, par, [=](std::size_t r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    double* hr = xhat + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (std::size_t j = 0; j < cols; ++j) {
      hr[j] = (xr[j] - mean) * istd;
      yr[j] = gamma[j] * hr[j] + beta[j];
    }
  });
}

void layer_norm_rows_backward(const double* xhat, const double* inv_std, const double* gamma,
                              const double* dy, double* dx, double* dgamma, double* dbeta,
                              std::size_t rows, std::size_t cols) {
  // dgamma/dbeta accumulate across rows, so those sums stay serial.
  for (std::size_t r = 0; r < rows; ++r) {
    const double* hr = xhat + r * cols;
    const double* dyr = dy + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      dgamma[j] += dyr[j] * hr[j];
      dbeta[j] += dyr[j];
    }
  }
  const bool par = openmp_enabled() && rows * cols >= kRowParThreshold && rows > 1;
  par_for(rows, par, [=](std::size_t r) {
    const double* hr = xhat + r * cols;
    const double* dyr = dy + r * cols;
    double* dxr = dx + r * cols;
    double sum_g = 0.0, sum_gh = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = dyr[j] * gamma[j];
      sum_g += g;
      sum_gh += g * hr[j];
    }
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      const double g = dyr[j] * gamma[j];
      dxr[j] += (g - inv_n * sum_g - hr[j] * inv_n * sum_gh) * inv_std[r];
    }
  });
}

namespace {

constexpr std::size_t kEltChunk = 4096;

template <class F>
inline void elt_par_for(std::size_t n, const F& body) {
  const bool par = openmp_enabled() && n >= kEltParThreshold;
  if (par) {
    const std::size_t chunks = (n + kEltChunk - 1) / kEltChunk;
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t end = std::min(n, (c + 1) * kEltChunk);
      for (std::size_t i = c * kEltChunk; i < end; ++i) body(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
}

}  // namespace

void gelu(const double* x, double* y, std::size_t n) {
  elt_par_for(n, [=](std::size_t i) { y[i] = x[i] * norm_cdf(x[i]); });
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
  elt_par_for(n, [=](std::size_t i) { dx[i] += dy[i] * (norm_cdf(x[i]) + x[i] * norm_pdf(x[i])); });
}

void add(const double* a, const double* b, double* c, std::size_t n) {
  elt_par_for(n, [=](std::size_t i) { c[i] = a[i] + b[i]; });
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  elt_par_for(n, [=](std::size_t i) { y[i] += alpha * x[i]; });
}

}  // namespace tsa::kernels
