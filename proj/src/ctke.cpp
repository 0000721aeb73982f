#include "dgstmtl/ctke.hpp"

#include <cmath>

#include "dgstmtl/ops.hpp"

namespace dgstmtl {

CtkeParams init_ctke_params(const Dims& dims, Rng& rng) {
  dims.validate();
  CtkeParams p;
  const int in = dims.c * dims.k;
  const double bound = 1.0 / std::sqrt(double(in));
  std::vector<double> w(std::size_t(in) * dims.d);
  for (double& v : w) v = rng.uniform(-bound, bound);
  p.w = Tensor::from_data({in, dims.d}, std::move(w), true);
  p.b = Tensor::zeros({dims.d}, true);

  std::vector<double> etk(std::size_t(dims.t) * dims.k);
  for (double& v : etk) v = rng.uniform(-0.04, 0.04);
  p.emb.e_tk = Tensor::from_data({1, dims.t, dims.k, 1}, std::move(etk), true);
  std::vector<double> esk(std::size_t(dims.n) * dims.k);
  for (double& v : esk) v = rng.uniform(-0.04, 0.04);
  p.emb.e_sk = Tensor::from_data({dims.n, 1, dims.k, 1}, std::move(esk), true);
  return p;
}

Tensor concat_tasks(const std::vector<Tensor>& task_inputs) {
  if (task_inputs.empty()) throw InputError("concat_tasks: no task inputs");
  const Shape& first = task_inputs[0].shape();
  if (first.size() != 3)
    throw DimensionError("concat_tasks: task inputs must be N x T x C, got " +
                         shape_str(first));
  std::vector<Tensor> expanded;
  expanded.reserve(task_inputs.size());
  for (std::size_t k = 0; k < task_inputs.size(); ++k) {
    if (task_inputs[k].shape() != first)
      throw DimensionError("concat_tasks: task " + std::to_string(k) +
                           " has shape " + shape_str(task_inputs[k].shape()) +
                           ", expected " + shape_str(first));
    expanded.push_back(reshape(task_inputs[k], {first[0], first[1], 1, first[2]}));
  }
  return concat(expanded, 2);
}

Tensor embed(const Tensor& x, const TaskEmbeddings& emb) {
  if (x.rank() != 4)
    throw DimensionError("embed: expected N x T x K x C input, got " +
                         shape_str(x.shape()));
  return broadcast_add(broadcast_add(x, emb.e_tk), emb.e_sk);
}

Tensor dynamic_matrix(const Tensor& x_embedded, const CtkeParams& p,
                      const Dims& dims) {
  dims.validate();
  const Shape expected = {dims.n, dims.t, dims.k, dims.c};
  if (x_embedded.shape() != expected)
    throw DimensionError("dynamic_matrix: input shape " +
                         shape_str(x_embedded.shape()) + " does not match dims " +
                         shape_str(expected));

  // (i) aggregate over time, (ii) task-major flatten + affine + ReLU,
  Tensor agg = max_over_axis(x_embedded, 1);               // N x K x C
  Tensor flat = reshape(agg, {dims.n, dims.k * dims.c});   // N x KC
  Tensor transformed = relu(affine(flat, p.w, p.b));       // N x D

  // (iii) node-major regrouping: chunk s of node i lands on row s*N + i, so
  // row blocks line up with the prior's time blocks.
  Tensor chunked = reshape(transformed, {dims.n, dims.m, dims.d_prime()});
  Tensor regrouped = reshape(permute(chunked, {1, 0, 2}),
                             {dims.block_rows(), dims.d_prime()});

  // (iv) dot-product correlation, (v) row softmax.
  Tensor corr = matmul(regrouped, transpose(regrouped));
  return softmax_rows(corr);
}

}  // namespace dgstmtl
