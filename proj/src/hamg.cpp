#include "dgstmtl/hamg.hpp"

#include "dgstmtl/ops.hpp"

namespace dgstmtl {

GatingParams init_gating_params(int tasks, int block_rows) {
  if (tasks <= 0 || block_rows <= 0)
    throw ConfigError("init_gating_params: non-positive dimensions");
  GatingParams g;
  g.m_k.reserve(std::size_t(tasks));
  for (int k = 0; k < tasks; ++k)
    g.m_k.push_back(Tensor::full({block_rows, block_rows}, 1.0, true));
  return g;
}

const char* adjacency_mode_name(AdjacencyMode m) {
  switch (m) {
    case AdjacencyMode::static_only:
      return "static_only";
    case AdjacencyMode::dynamic_only:
      return "dynamic_only";
    case AdjacencyMode::no_gate:
      return "no_gate";
    case AdjacencyMode::full:
      return "full";
  }
  return "?";
}

Tensor hybrid(const GraphPrior& prior, const Tensor& b, const GatingParams& gates,
              int k) {
  if (k < 0 || k >= int(gates.m_k.size()))
    throw InputError("hybrid: task index " + std::to_string(k) +
                     " out of range for " + std::to_string(gates.m_k.size()) +
                     " gates");
  if (b.shape() != prior.a_p.shape())
    throw DimensionError("hybrid: dynamic matrix shape " + shape_str(b.shape()) +
                         " does not match prior " + shape_str(prior.a_p.shape()));
  return elementwise_mul(gates.m_k[std::size_t(k)], add(prior.a_p, b));
}

Tensor effective_adjacency(AdjacencyMode mode, const GraphPrior& prior,
                           const Tensor& b, const GatingParams* gates, int k) {
  switch (mode) {
    case AdjacencyMode::static_only:
      return prior.a_p;
    case AdjacencyMode::dynamic_only:
      return b;
    case AdjacencyMode::no_gate:
      return add(prior.a_p, b);
    case AdjacencyMode::full:
      if (!gates) throw InputError("effective_adjacency: full mode needs gates");
      return hybrid(prior, b, *gates, k);
  }
  throw InputError("effective_adjacency: bad mode");
}

}  // namespace dgstmtl
