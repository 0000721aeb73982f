#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients of the deterministic scalar computation f
// against central finite differences on the given leaf parameters.
//
// Per sampled coordinate the error is
//   |analytic - fd| / max(1, |fd|)
// with fd = (f(x+eps) - f(x-eps)) / (2 eps). sample_fraction in (0, 1]
// selects a random subset of coordinates (at least one); 1 checks them all.
// Throws NumericError if any evaluation of f is non-finite.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<Tensor>& params, double eps = 1e-5,
                           double sample_fraction = 1.0,
                           std::uint64_t seed = 0x5EEDu);

}  // namespace dgstmtl
