#include <cmath>
#include <cstring>

#include "dgstmtl/kernels.hpp"

// Reference kernels. The lane-split structure in dot/sum and the k-ordered
// accumulation in the GEMM variants are normative: vector backends must
// reproduce the exact same sequence of rounded operations per output element.
namespace dgstmtl::kernels::detail {
namespace {

void gemm_scalar(double* c, const double* a, const double* b, int m, int k,
                 int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double s = arow[kk];
      const double* brow = b + std::size_t(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double total = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void gemm_abt_scalar(double* c, const double* a, const double* b, int m, int k,
                     int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double d = dot_scalar(arow, b + std::size_t(j) * k, std::size_t(k));
      crow[j] = accumulate ? crow[j] + d : d;
    }
  }
}

void gemm_atb_scalar(double* c, const double* a, const double* b, int l, int m,
                     int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(double) * std::size_t(m) * n);
  for (int r = 0; r < l; ++r) {
    const double* arow = a + std::size_t(r) * m;
    const double* brow = b + std::size_t(r) * n;
    for (int i = 0; i < m; ++i) {
      const double s = arow[i];
      double* crow = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(const double* x, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * alpha;
}

void relu_scalar(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_acc_scalar(const double* x, const double* dy, double* dx,
                              std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += dy[i];
  }
}

double sum_scalar(const double* x, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  const std::size_t n4 = n & ~std::size_t(3);
  for (; i < n4; i += 4) {
    s0 += x[i];
    s1 += x[i + 1];
    s2 += x[i + 2];
    s3 += x[i + 3];
  }
  double total = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) total += x[i];
  return total;
}

void adam_update_scalar(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2) {
  const double omb1 = 1.0 - beta1;
  const double omb2 = 1.0 - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = g[i];
    m[i] = beta1 * m[i] + omb1 * gi;
    v[i] = beta2 * v[i] + omb2 * (gi * gi);
    const double num = (m[i] * bc1) * lr;
    const double den = std::sqrt(v[i] * bc2) + eps;
    p[i] = p[i] - num / den;
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t = {
      gemm_scalar,  gemm_abt_scalar, gemm_atb_scalar,
      add_scalar,   sub_scalar,      mul_scalar,
      axpy_scalar,  scale_scalar,    relu_scalar,
      relu_backward_acc_scalar,      dot_scalar,
      sum_scalar,   adam_update_scalar,
  };
  return t;
}

}  // namespace dgstmtl::kernels::detail
