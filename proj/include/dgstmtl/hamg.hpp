#pragma once

#include <vector>

#include "dgstmtl/graph_prior.hpp"
#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// One learnable 3N x 3N gate per task, initialized to all ones so training
// starts from the un-gated hybrid.
struct GatingParams {
  std::vector<Tensor> m_k;
};

GatingParams init_gating_params(int tasks, int block_rows);

enum class AdjacencyMode { static_only, dynamic_only, no_gate, full };

const char* adjacency_mode_name(AdjacencyMode m);

// m_k ⊙ (a_p + b); gradients flow to the gate and to b, the prior is constant.
Tensor hybrid(const GraphPrior& prior, const Tensor& b, const GatingParams& gates,
              int k);

// The effective adjacency under an ablation mode:
//   static_only -> a_p, dynamic_only -> b, no_gate -> a_p + b, full -> hybrid.
// `b` may be undefined for static_only and `gates` null for all modes but full.
Tensor effective_adjacency(AdjacencyMode mode, const GraphPrior& prior,
                           const Tensor& b, const GatingParams* gates, int k);

}  // namespace dgstmtl
