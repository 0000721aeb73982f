#if defined(DGSTMTL_HAVE_NEON)

#include <arm_neon.h>

#include <cmath>
#include <cstring>

#include "dgstmtl/kernels.hpp"

// NEON variants (2 doubles per vector). Reductions keep the reference's
// 4-lane partial-sum structure via two q-registers so all backends match
// bit-for-bit.
namespace dgstmtl::kernels::detail {
namespace {

void gemm_neon(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  const int n8 = n & ~7;
  const int n2 = n & ~1;
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    int j = 0;
    for (; j < n8; j += 8) {
      float64x2_t acc0, acc1, acc2, acc3;
      if (accumulate) {
        acc0 = vld1q_f64(crow + j);
        acc1 = vld1q_f64(crow + j + 2);
        acc2 = vld1q_f64(crow + j + 4);
        acc3 = vld1q_f64(crow + j + 6);
      } else {
        acc0 = acc1 = acc2 = acc3 = vdupq_n_f64(0.0);
      }
      for (int kk = 0; kk < k; ++kk) {
        const float64x2_t s = vdupq_n_f64(arow[kk]);
        const double* bp = b + std::size_t(kk) * n + j;
        acc0 = vaddq_f64(acc0, vmulq_f64(s, vld1q_f64(bp)));
        acc1 = vaddq_f64(acc1, vmulq_f64(s, vld1q_f64(bp + 2)));
        acc2 = vaddq_f64(acc2, vmulq_f64(s, vld1q_f64(bp + 4)));
        acc3 = vaddq_f64(acc3, vmulq_f64(s, vld1q_f64(bp + 6)));
      }
      vst1q_f64(crow + j, acc0);
      vst1q_f64(crow + j + 2, acc1);
      vst1q_f64(crow + j + 4, acc2);
      vst1q_f64(crow + j + 6, acc3);
    }
    for (; j < n2; j += 2) {
      float64x2_t acc = accumulate ? vld1q_f64(crow + j) : vdupq_n_f64(0.0);
      for (int kk = 0; kk < k; ++kk) {
        const float64x2_t s = vdupq_n_f64(arow[kk]);
        acc = vaddq_f64(acc, vmulq_f64(s, vld1q_f64(b + std::size_t(kk) * n + j)));
      }
      vst1q_f64(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = accumulate ? crow[j] : 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * b[std::size_t(kk) * n + j];
      crow[j] = acc;
    }
  }
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);  // lanes s0, s1
  float64x2_t acc23 = vdupq_n_f64(0.0);  // lanes s2, s3
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    acc01 = vaddq_f64(acc01, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    acc23 = vaddq_f64(acc23,
                      vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  const float64x2_t t = vaddq_f64(acc01, acc23);  // [s0+s2, s1+s3]
  double total = vgetq_lane_f64(t, 0) + vgetq_lane_f64(t, 1);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void gemm_abt_neon(double* c, const double* a, const double* b, int m, int k,
                   int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double d = dot_neon(arow, b + std::size_t(j) * k, std::size_t(k));
      crow[j] = accumulate ? crow[j] + d : d;
    }
  }
}

void gemm_atb_neon(double* c, const double* a, const double* b, int l, int m,
                   int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
  const int n2 = n & ~1;
  for (int r = 0; r < l; ++r) {
    const double* arow = a + std::size_t(r) * m;
    const double* brow = b + std::size_t(r) * n;
    for (int i = 0; i < m; ++i) {
      const float64x2_t s = vdupq_n_f64(arow[i]);
      double* crow = c + std::size_t(i) * n;
      int j = 0;
      for (; j < n2; j += 2) {
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j),
                                      vmulq_f64(s, vld1q_f64(brow + j))));
      }
      for (; j < n; ++j) crow[j] += arow[i] * brow[j];
    }
  }
}

void add_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(av, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(const double* x, double alpha, double* out, std::size_t n) {
  const float64x2_t av = vdupq_n_f64(alpha);
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), av));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void relu_neon(const double* x, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const uint64x2_t mask = vcgtq_f64(v, zero);
    vst1q_f64(out + i,
              vreinterpretq_f64_u64(vandq_u64(vreinterpretq_u64_f64(v), mask)));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_acc_neon(const double* x, const double* dy, double* dx,
                            std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(x + i), zero);
    const float64x2_t gated = vreinterpretq_f64_u64(
        vandq_u64(vreinterpretq_u64_f64(vld1q_f64(dy + i)), mask));
    vst1q_f64(dx + i, vaddq_f64(vld1q_f64(dx + i), gated));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc01 = vdupq_n_f64(0.0);
  float64x2_t acc23 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    acc01 = vaddq_f64(acc01, vld1q_f64(x + i));
    acc23 = vaddq_f64(acc23, vld1q_f64(x + i + 2));
  }
  const float64x2_t t = vaddq_f64(acc01, acc23);
  double total = vgetq_lane_f64(t, 0) + vgetq_lane_f64(t, 1);
  for (; i < n; ++i) total += x[i];
  return total;
}

void adam_update_neon(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
  const float64x2_t b1v = vdupq_n_f64(beta1);
  const float64x2_t b2v = vdupq_n_f64(beta2);
  const float64x2_t omb1v = vdupq_n_f64(1.0 - beta1);
  const float64x2_t omb2v = vdupq_n_f64(1.0 - beta2);
  const float64x2_t lrv = vdupq_n_f64(lr);
  const float64x2_t epsv = vdupq_n_f64(eps);
  const float64x2_t bc1v = vdupq_n_f64(bc1);
  const float64x2_t bc2v = vdupq_n_f64(bc2);
  std::size_t i = 0;
  const std::size_t n2 = n & ~std::size_t(1);
  for (; i < n2; i += 2) {
    const float64x2_t gv = vld1q_f64(g + i);
    const float64x2_t mv =
        vaddq_f64(vmulq_f64(b1v, vld1q_f64(m + i)), vmulq_f64(omb1v, gv));
    const float64x2_t vv = vaddq_f64(vmulq_f64(b2v, vld1q_f64(v + i)),
                                     vmulq_f64(omb2v, vmulq_f64(gv, gv)));
    vst1q_f64(m + i, mv);
    vst1q_f64(v + i, vv);
    const float64x2_t num = vmulq_f64(vmulq_f64(mv, bc1v), lrv);
    const float64x2_t den = vaddq_f64(vsqrtq_f64(vmulq_f64(vv, bc2v)), epsv);
    vst1q_f64(p + i, vsubq_f64(vld1q_f64(p + i), vdivq_f64(num, den)));
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

const KernelTable& neon_table() {
  static const KernelTable t = {
      gemm_neon,  gemm_abt_neon, gemm_atb_neon,
      add_neon,   sub_neon,      mul_neon,
      axpy_neon,  scale_neon,    relu_neon,
      relu_backward_acc_neon,    dot_neon,
      sum_neon,   adam_update_neon,
  };
  return t;
}

}  // namespace dgstmtl::kernels::detail

#endif  // DGSTMTL_HAVE_NEON
