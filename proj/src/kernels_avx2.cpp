#include "ddn/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

namespace ddn::kern {
namespace {

inline double hsum4(__m256d acc) {
  __m128d lo = _mm256_castpd256_pd128(acc);    // (a0, a1)
  __m128d hi = _mm256_extractf128_pd(acc, 1);  // (a2, a3)
  __m128d s = _mm_add_pd(lo, hi);              // (a0+a2, a1+a3)
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  double r = hsum4(acc);
  for (std::size_t i = n4; i < n; ++i) r += x[i] * y[i];
  return r;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  }
  double r = hsum4(acc);
  for (std::size_t i = n4; i < n; ++i) r += x[i];
  return r;
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, yv);
  }
  for (std::size_t i = n4; i < n; ++i) y[i] += a * x[i];
}

void scale_avx2(std::size_t n, double a, double* x) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
  }
  for (std::size_t i = n4; i < n; ++i) x[i] *= a;
}

void add_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(
        out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = n4; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    _mm256_storeu_pd(
        out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (std::size_t i = n4; i < n; ++i) out[i] = a[i] * b[i];
}

void relu_avx2(std::size_t n, const double* x, double* out) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(xv, mask));
  }
  for (std::size_t i = n4; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bw_acc_avx2(std::size_t n, const double* x, const double* g,
                      double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t n4 = n & ~std::size_t{3};
  for (std::size_t i = 0; i < n4; i += 4) {
    __m256d xv = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
    __m256d dv = _mm256_loadu_pd(dx + i);
    __m256d upd = _mm256_add_pd(dv, _mm256_loadu_pd(g + i));
    // blend keeps the untouched lanes bit-identical to the scalar path
    _mm256_storeu_pd(dx + i, _mm256_blendv_pd(dv, upd, mask));
  }
  for (std::size_t i = n4; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += g[i];
  }
}

void matmul_nn_acc_avx2(std::size_t b, std::size_t k, std::size_t m,
                        const double* A, const double* W, double* C) {
  std::size_t m4 = m & ~std::size_t{3};
  for (std::size_t i = 0; i < b; ++i) {
    double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const __m256d av = _mm256_set1_pd(a);
      const double* wrow = W + p * m;
      for (std::size_t j = 0; j < m4; j += 4) {
        __m256d cv = _mm256_loadu_pd(crow + j);
        cv = _mm256_add_pd(cv, _mm256_mul_pd(av, _mm256_loadu_pd(wrow + j)));
        _mm256_storeu_pd(crow + j, cv);
      }
      for (std::size_t j = m4; j < m; ++j) crow[j] += a * wrow[j];
    }
  }
}

void matmul_tn_acc_avx2(std::size_t b, std::size_t k, std::size_t m,
                        const double* A, const double* C, double* W) {
  std::size_t m4 = m & ~std::size_t{3};
  for (std::size_t i = 0; i < b; ++i) {
    const double* crow = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double a = A[i * k + p];
      const __m256d av = _mm256_set1_pd(a);
      double* wrow = W + p * m;
      for (std::size_t j = 0; j < m4; j += 4) {
        __m256d wv = _mm256_loadu_pd(wrow + j);
        wv = _mm256_add_pd(wv, _mm256_mul_pd(av, _mm256_loadu_pd(crow + j)));
        _mm256_storeu_pd(wrow + j, wv);
      }
      for (std::size_t j = m4; j < m; ++j) wrow[j] += a * crow[j];
    }
  }
}

void matmul_nt_acc_avx2(std::size_t b, std::size_t k, std::size_t m,
                        const double* C, const double* W, double* A) {
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      A[i * k + p] += dot_avx2(C + i * m, W + p * m, m);
    }
  }
}

void col_sum_acc_avx2(std::size_t b, std::size_t m, const double* C,
                      double* out) {
  std::size_t m4 = m & ~std::size_t{3};
  for (std::size_t i = 0; i < b; ++i) {
    const double* crow = C + i * m;
    for (std::size_t j = 0; j < m4; j += 4) {
      __m256d ov = _mm256_loadu_pd(out + j);
      _mm256_storeu_pd(out + j, _mm256_add_pd(ov, _mm256_loadu_pd(crow + j)));
    }
    for (std::size_t j = m4; j < m; ++j) out[j] += crow[j];
  }
}

}  // namespace

const Kernels& avx2_kernels() {
  static const Kernels k = {
      dot_avx2,           sum_avx2,
      axpy_avx2,          scale_avx2,
      add_avx2,           mul_avx2,
      relu_avx2,          relu_bw_acc_avx2,
      matmul_nn_acc_avx2, matmul_tn_acc_avx2,
      matmul_nt_acc_avx2, col_sum_acc_avx2,
      "avx2",
  };
  return k;
}

}  // namespace ddn::kern

#else

#include <stdexcept>

namespace ddn::kern {

const Kernels& avx2_kernels() {
  throw std::runtime_error("avx2 kernels not built for this target");
}

}  // namespace ddn::kern

#endif
