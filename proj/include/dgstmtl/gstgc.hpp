#pragma once

#include <array>
#include <vector>

#include "dgstmtl/dims.hpp"
#include "dgstmtl/rng.hpp"
#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// Parameters of one group-wise learning block: a stack of GCN-AGG layers plus
// the raw weights of the dense residual fusion. The raw 4-vector is passed
// through softmax so the effective fusion weights are positive and sum to 1.
// residual_raw is left undefined when the dense residual is ablated (fusion
// then degenerates to the last layer's output). input_proj_* are only needed
// when the block's input channel count differs from its output one.
struct GroupBlockParams {
  std::vector<Tensor> weights;  // layer i: C_in x C_out (i = 0) or C_out x C_out
  std::vector<Tensor> biases;   // each C_out
  Tensor residual_raw;          // (layers + 1) raw fusion weights
  Tensor input_proj_w;
  Tensor input_proj_b;
};

struct GstgcParams {
  std::vector<GroupBlockParams> stage1;  // T/m temporal groups
  std::vector<GroupBlockParams> stage2;  // 2 overlapping feature groups
};

GroupBlockParams init_group_block(int c_in, int c_out, int layers,
                                  bool dense_residual, Rng& rng);
GstgcParams init_gstgc_params(const Dims& dims, int layers, bool dense_residual,
                              Rng& rng);

// Effective fusion weights of a block (softmax of the raw vector).
Tensor residual_weights(const GroupBlockParams& p);

// Non-overlapping slices of m consecutive time steps: [0:m), [m:2m), ...
std::vector<Tensor> temporal_group(const Tensor& x, int m);

// N x m x C -> (mN) x C, time-block-major: rows [sN, (s+1)N) hold step s.
Tensor stack_time(const Tensor& z);

// ReLU(a_star * h * w + b) with the bias broadcast over rows.
Tensor gcn_agg(const Tensor& h, const Tensor& a_star, const Tensor& w,
               const Tensor& b);

// Stacked GCN-AGG layers, weighted dense residual fusion over H_0..H_L and a
// crop to the middle row segment [n, 2n).
Tensor group_block(const Tensor& h0, const Tensor& a_star,
                   const GroupBlockParams& p, int n);

// Four stage-1 outputs (N x C') -> two overlapping groups (N x C' x 3):
// outputs (1,2,3) and (2,3,4).
std::array<Tensor, 2> feature_group(const std::vector<Tensor>& outputs);

// The full two-stage pipeline; returns N x C'.
Tensor gstgc_forward(const Tensor& x, const Tensor& a_star,
                     const GstgcParams& params, const Dims& dims);

}  // namespace dgstmtl
