#pragma once

#include <vector>

#include "dgstmtl/dims.hpp"
#include "dgstmtl/rng.hpp"
#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// Learnable temporal (1 x T x K x 1) and spatial (N x 1 x K x 1) task
// embeddings, broadcast onto the concatenated multi-task input.
struct TaskEmbeddings {
  Tensor e_tk;
  Tensor e_sk;
};

struct CtkeParams {
  Tensor w;  // (C*K) x D
  Tensor b;  // D
  TaskEmbeddings emb;
};

CtkeParams init_ctke_params(const Dims& dims, Rng& rng);

// Stacks K tensors of shape N x T x C along a new task axis -> N x T x K x C.
Tensor concat_tasks(const std::vector<Tensor>& task_inputs);

// x + e_tk + e_sk with singleton axes broadcast.
Tensor embed(const Tensor& x, const TaskEmbeddings& emb);

// The dynamic adjacency matrix: max-pool over time, affine + ReLU to width D,
// node-major reshape to (mN) x D', dot-product correlation, row softmax.
// Output is mN x mN with rows summing to 1.
Tensor dynamic_matrix(const Tensor& x_embedded, const CtkeParams& p,
                      const Dims& dims);

}  // namespace dgstmtl
