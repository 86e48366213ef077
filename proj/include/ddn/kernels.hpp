#pragma once

#include <cstddef>
#include <string_view>

namespace ddn::kern {

// Dense float64 kernels. Scalar and SIMD backends follow one fixed
// accumulation convention so they produce bit-identical results and the
// dispatcher's choice never changes any downstream number:
//
//   * dot / sum run four independent lane accumulators over length-4
//     blocks, combine them as ((a0+a2) + (a1+a3)), then fold the tail
//     elements in index order onto that partial result.
//   * matmul contractions accumulate strictly in contraction-index order
//     per output element (matmul_nt reuses the dot convention).
//   * col_sum accumulates rows in row order.
//
// Anything that recomputes these quantities and wants bit equality (tests,
// reference trainers) must follow the same convention.
struct Kernels {
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += a * x
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  // x *= a
  void (*scale)(std::size_t n, double a, double* x);
  // out = a + b
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  // out = a * b (elementwise)
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  // out = max(0, x), with relu(x) = x if x > 0 else 0
  void (*relu)(std::size_t n, const double* x, double* out);
  // dx += (x > 0) * g
  void (*relu_bw_acc)(std::size_t n, const double* x, const double* g,
                      double* dx);
  // C[b,m] += A[b,k] * W[k,m]
  void (*matmul_nn_acc)(std::size_t b, std::size_t k, std::size_t m,
                        const double* A, const double* W, double* C);
  // W[k,m] += sum_b A[b,k] * C[b,m]   (A stored [b,k], C stored [b,m])
  void (*matmul_tn_acc)(std::size_t b, std::size_t k, std::size_t m,
                        const double* A, const double* C, double* W);
  // A[b,k] += sum_m C[b,m] * W[k,m]   (C stored [b,m], W stored [k,m])
  void (*matmul_nt_acc)(std::size_t b, std::size_t k, std::size_t m,
                        const double* C, const double* W, double* A);
  // out[m] += sum_b C[b,m]
  void (*col_sum_acc)(std::size_t b, std::size_t m, const double* C,
                      double* out);
  const char* name;
};

const Kernels& scalar_kernels();

bool avx2_supported();
// Only valid when avx2_supported().
const Kernels& avx2_kernels();

// Backend selected once per process from DDN_LAB_KERNELS=scalar|avx2|auto
// (default auto: AVX2 when the CPU has it).
const Kernels& active_kernels();
std::string_view active_backend_name();

}  // namespace ddn::kern
