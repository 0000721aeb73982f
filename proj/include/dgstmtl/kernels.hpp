#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Dense double-precision kernels behind a runtime-dispatched table.
//
// Every backend executes the same per-element operation order as the scalar
// reference (k-loop order in GEMM, 4-lane partial sums in reductions, no FMA
// contraction), so backends agree bit-for-bit. The equivalence tests assert
// exact equality; the library-wide contract is agreement within 1e-12.
namespace dgstmtl::kernels {

enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
Backend active_backend();
bool backend_supported(Backend b);
std::vector<Backend> supported_backends();

// Returns false (and leaves the active backend unchanged) if unsupported on
// this host. The DGSTMTL_KERNEL_BACKEND environment variable, when set to
// "scalar", "avx2" or "neon", selects the initial backend.
bool set_backend(Backend b);

struct KernelTable {
  // c[m x n] (+)= a[m x k] * b[k x n]
  void (*gemm)(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate);
  // c[m x n] (+)= a[m x k] * b[n x k]^T
  void (*gemm_abt)(double* c, const double* a, const double* b, int m, int k,
                   int n, bool accumulate);
  // c[m x n] (+)= a[l x m]^T * b[l x n]
  void (*gemm_atb)(double* c, const double* a, const double* b, int l, int m,
                   int n, bool accumulate);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(const double* x, double alpha, double* out, std::size_t n);
  void (*relu)(const double* x, double* out, std::size_t n);
  // dx[i] += x[i] > 0 ? dy[i] : 0
  void (*relu_backward_acc)(const double* x, const double* dy, double* dx,
                            std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // One Adam step on a parameter block. bc1/bc2 are the precomputed
  // bias-correction factors 1/(1-beta1^t) and 1/(1-beta2^t).
  void (*adam_update)(double* p, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2);
};

const KernelTable& table();

namespace detail {
const KernelTable& scalar_table();
#if defined(DGSTMTL_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(DGSTMTL_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

// Convenience forwarders.
inline void gemm(double* c, const double* a, const double* b, int m, int k,
                 int n, bool accumulate = false) {
  table().gemm(c, a, b, m, k, n, accumulate);
}
inline void gemm_abt(double* c, const double* a, const double* b, int m, int k,
                     int n, bool accumulate = false) {
  table().gemm_abt(c, a, b, m, k, n, accumulate);
}
inline void gemm_atb(double* c, const double* a, const double* b, int l, int m,
                     int n, bool accumulate = false) {
  table().gemm_atb(c, a, b, l, m, n, accumulate);
}
inline void add(const double* a, const double* b, double* out, std::size_t n) {
  table().add(a, b, out, n);
}
inline void sub(const double* a, const double* b, double* out, std::size_t n) {
  table().sub(a, b, out, n);
}
inline void mul(const double* a, const double* b, double* out, std::size_t n) {
  table().mul(a, b, out, n);
}
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
inline void scale(const double* x, double alpha, double* out, std::size_t n) {
  table().scale(x, alpha, out, n);
}
inline void relu(const double* x, double* out, std::size_t n) {
  table().relu(x, out, n);
}
inline void relu_backward_acc(const double* x, const double* dy, double* dx,
                              std::size_t n) {
  table().relu_backward_acc(x, dy, dx, n);
}
inline double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}
inline double sum(const double* x, std::size_t n) { return table().sum(x, n); }
inline void adam_update(double* p, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2) {
  table().adam_update(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace dgstmtl::kernels
