#include "ddn/kernels.hpp"

namespace ddn::kern {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    a0 += x[i + 0] * y[i + 0];
    a1 += x[i + 1] * y[i + 1];
    a2 += x[i + 2] * y[i + 2];
    a3 += x[i + 3] * y[i + 3];
  }
  double acc = (a0 + a2) + (a1 + a3);
  for (std::size_t i = n4; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    a0 += x[i + 0];
    a1 += x[i + 1];
    a2 += x[i + 2];
    a3 += x[i + 3];
  }
  double acc = (a0 + a2) + (a1 + a3);
  for (std::size_t i = n4; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale_scalar(std::size_t n, double a, double* x) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void add_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void relu_scalar(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bw_acc_scalar(std::size_t n, const double* x, const double* g,
                        double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += g[i];
  }
}

void matmul_nn_acc_scalar(std::size_t b, std::size_t k, std::size_t m,
                          const double* A, const double* W, double* C) {
  for (std::size_t i = 0; i < b; ++i) {
    double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const double* wrow = W + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += a * wrow[j];
    }
  }
}

void matmul_tn_acc_scalar(std::size_t b, std::size_t k, std::size_t m,
                          const double* A, const double* C, double* W) {
  for (std::size_t i = 0; i < b; ++i) {
    const double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      double* wrow = W + p * m;
      for (std::size_t j = 0; j < m; ++j) wrow[j] += a * crow[j];
    }
  }
}

void matmul_nt_acc_scalar(std::size_t b, std::size_t k, std::size_t m,
                          const double* C, const double* W, double* A) {
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      A[i * k + p] += dot_scalar(C + i * m, W + p * m, m);
    }
  }
}

void col_sum_acc_scalar(std::size_t b, std::size_t m, const double* C,
                        double* out) {
  for (std::size_t i = 0; i < b; ++i) {
    const double* crow = C + i * m;
    for (std::size_t j = 0; j < m; ++j) out[j] += crow[j];
  }
}

}  // namespace

const Kernels& scalar_kernels() {
  static const Kernels k = {
      dot_scalar,           sum_scalar,
      axpy_scalar,          scale_scalar,
      add_scalar,           mul_scalar,
      relu_scalar,          relu_bw_acc_scalar,
      matmul_nn_acc_scalar, matmul_tn_acc_scalar,
      matmul_nt_acc_scalar, col_sum_acc_scalar,
      "scalar",
  };
  return k;
}

}  // namespace ddn::kern
