#if defined(DGSTMTL_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "dgstmtl/kernels.hpp"

// AVX2 variants. Deliberately no FMA: each output element sees the same
// mul-then-add sequence as the scalar reference, so results are bit-identical.
namespace dgstmtl::kernels::detail {
namespace {

void gemm_avx2(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  const int n16 = n & ~15;
  const int n4 = n & ~3;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    int j = 0;
    for (; j < n16; j += 16) {
      __m256d acc0, acc1, acc2, acc3;
      if (accumulate) {
        acc0 = _mm256_loadu_pd(crow + j);
        acc1 = _mm256_loadu_pd(crow + j + 4);
        acc2 = _mm256_loadu_pd(crow + j + 8);
        acc3 = _mm256_loadu_pd(crow + j + 12);
      } else {
        acc0 = acc1 = acc2 = acc3 = _mm256_setzero_pd();
      }
      for (int kk = 0; kk < k; ++kk) {
        const __m256d s = _mm256_set1_pd(arow[kk]);
        const double* bp = b + std::size_t(kk) * n + j;
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(s, _mm256_loadu_pd(bp)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(s, _mm256_loadu_pd(bp + 4)));
        acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(s, _mm256_loadu_pd(bp + 8)));
        acc3 = _mm256_add_pd(acc3, _mm256_mul_pd(s, _mm256_loadu_pd(bp + 12)));
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
      _mm256_storeu_pd(crow + j + 8, acc2);
      _mm256_storeu_pd(crow + j + 12, acc3);
    }
    for (; j < n4; j += 4) {
      __m256d acc =
          accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
      for (int kk = 0; kk < k; ++kk) {
        const __m256d s = _mm256_set1_pd(arow[kk]);
        acc = _mm256_add_pd(
            acc, _mm256_mul_pd(s, _mm256_loadu_pd(b + std::size_t(kk) * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = accumulate ? crow[j] : 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * b[std::size_t(kk) * n + j];
      crow[j] = acc;
    }
  }
}

inline double hsum_lanes(__m256d acc) {
  // (s0+s2) + (s1+s3), matching the scalar reference's lane combination.
  const __m128d lo = _mm256_castpd256_pd128(acc);
  const __m128d hi = _mm256_extractf128_pd(acc, 1);
  const __m128d t = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(t) + _mm_cvtsd_f64(_mm_unpackhi_pd(t, t));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    acc = _mm256_add_pd(acc,
                        _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double total = hsum_lanes(acc);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void gemm_abt_avx2(double* c, const double* a, const double* b, int m, int k,
                   int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double d = dot_avx2(arow, b + std::size_t(j) * k, std::size_t(k));
      crow[j] = accumulate ? crow[j] + d : d;
    }
  }
}

void gemm_atb_avx2(double* c, const double* a, const double* b, int l, int m,
                   int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
  const int n4 = n & ~3;
  for (int r = 0; r < l; ++r) {
    const double* arow = a + std::size_t(r) * m;
    const double* brow = b + std::size_t(r) * n;
    for (int i = 0; i < m; ++i) {
      const __m256d s = _mm256_set1_pd(arow[i]);
      double* crow = c + std::size_t(i) * n;
      int j = 0;
      for (; j < n4; j += 4) {
        const __m256d cv = _mm256_loadu_pd(crow + j);
        _mm256_storeu_pd(crow + j,
                         _mm256_add_pd(cv, _mm256_mul_pd(s, _mm256_loadu_pd(brow + j))));
      }
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(y + i,
                     _mm256_add_pd(_mm256_loadu_pd(y + i),
                                   _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(const double* x, double alpha, double* out, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void relu_avx2(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(out + i, _mm256_and_pd(v, mask));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_acc_avx2(const double* x, const double* dy, double* dx,
                            std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gated = _mm256_and_pd(_mm256_loadu_pd(dy + i), mask);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum_lanes(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

void adam_update_avx2(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
  const __m256d b1v = _mm256_set1_pd(beta1);
  const __m256d b2v = _mm256_set1_pd(beta2);
  const __m256d omb1v = _mm256_set1_pd(1.0 - beta1);
  const __m256d omb2v = _mm256_set1_pd(1.0 - beta2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d bc1v = _mm256_set1_pd(bc1);
  const __m256d bc2v = _mm256_set1_pd(bc2);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1v, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(omb1v, gv));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2v, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2v, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d num = _mm256_mul_pd(_mm256_mul_pd(mv, bc1v), lrv);
    const __m256d den =
        _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, bc2v)), epsv);
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i),
                                          _mm256_div_pd(num, den)));
  }
  const double omb1 = 1.0 - beta1;
  const double omb2 = 1.0 - beta2;
  for (; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + omb1 * gi;
    v[i] = beta2 * v[i] + omb2 * (gi * gi);
    const double num = (m[i] * bc1) * lr;
    const double den = std::sqrt(v[i] * bc2) + eps;
    p[i] = p[i] - num / den;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t = {
      gemm_avx2,  gemm_abt_avx2, gemm_atb_avx2,
      add_avx2,   sub_avx2,      mul_avx2,
      axpy_avx2,  scale_avx2,    relu_avx2,
      relu_backward_acc_avx2,    dot_avx2,
      sum_avx2,   adam_update_avx2,
  };
  return t;
}

}  // namespace dgstmtl::kernels::detail

#endif  // DGSTMTL_HAVE_AVX2
