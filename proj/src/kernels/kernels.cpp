#include "dgstmtl/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace dgstmtl::kernels {
namespace {

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &detail::scalar_table();
    case Backend::avx2:
#if defined(DGSTMTL_HAVE_AVX2)
      if (__builtin_cpu_supports("avx2")) return &detail::avx2_table();
#endif
      return nullptr;
    case Backend::neon:
#if defined(DGSTMTL_HAVE_NEON)
      return &detail::neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Backend default_backend() {
  if (const char* env = std::getenv("DGSTMTL_KERNEL_BACKEND")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0 && table_for(Backend::avx2))
      return Backend::avx2;
    if (std::strcmp(env, "neon") == 0 && table_for(Backend::neon))
      return Backend::neon;
  }
  if (table_for(Backend::avx2)) return Backend::avx2;
  if (table_for(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

struct State {
  Backend backend;
  const KernelTable* table;
  State() : backend(default_backend()), table(table_for(backend)) {}
};

State& state() {
  static State s;
  return s;
}

}  // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

Backend active_backend() { return state().backend; }

bool backend_supported(Backend b) { return table_for(b) != nullptr; }

std::vector<Backend> supported_backends() {
  std::vector<Backend> out;
  for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon})
    if (backend_supported(b)) out.push_back(b);
  return out;
}

bool set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (!t) return false;
  state().backend = b;
  state().table = t;
  return true;
}

const KernelTable& table() { return *state().table; }

}  // namespace dgstmtl::kernels
