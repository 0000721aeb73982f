#include "dgstmtl/gstgc.hpp"

#include <cmath>

#include "dgstmtl/ops.hpp"

namespace dgstmtl {

GroupBlockParams init_group_block(int c_in, int c_out, int layers,
                                  bool dense_residual, Rng& rng) {
  if (layers < 1) throw ConfigError("init_group_block: need at least one layer");
  GroupBlockParams p;
  for (int i = 0; i < layers; ++i) {
    const int in = i == 0 ? c_in : c_out;
    const double bound = 1.0 / std::sqrt(double(in));
    std::vector<double> w(std::size_t(in) * c_out);
    for (double& v : w) v = rng.uniform(-bound, bound);
    p.weights.push_back(Tensor::from_data({in, c_out}, std::move(w), true));
    p.biases.push_back(Tensor::zeros({c_out}, true));
  }
  if (dense_residual) {
    p.residual_raw = Tensor::zeros({layers + 1}, true);
    if (c_in != c_out) {
      // fusion operand for H_0 must match the layer outputs
      const double bound = 1.0 / std::sqrt(double(c_in));
      std::vector<double> w(std::size_t(c_in) * c_out);
      for (double& v : w) v = rng.uniform(-bound, bound);
      p.input_proj_w = Tensor::from_data({c_in, c_out}, std::move(w), true);
      p.input_proj_b = Tensor::zeros({c_out}, true);
    }
  }
  return p;
}

GstgcParams init_gstgc_params(const Dims& dims, int layers, bool dense_residual,
                              Rng& rng) {
  dims.validate();
  GstgcParams p;
  const int groups = dims.t / dims.m;
  for (int g = 0; g < groups; ++g)
    p.stage1.push_back(
        init_group_block(dims.c_prime, dims.c_prime, layers, dense_residual, rng));
  for (int g = 0; g < 2; ++g)
    p.stage2.push_back(
        init_group_block(dims.c_prime, dims.c_prime, layers, dense_residual, rng));
  return p;
}

Tensor residual_weights(const GroupBlockParams& p) {
  if (!p.residual_raw.defined())
    throw ConfigError("residual_weights: block has no dense residual");
  const int n = p.residual_raw.extent(0);
  return softmax_rows(reshape(p.residual_raw, {1, n}));
}

std::vector<Tensor> temporal_group(const Tensor& x, int m) {
  if (x.rank() != 3)
    throw DimensionError("temporal_group: expected N x T x C input, got " +
                         shape_str(x.shape()));
  const int t = x.extent(1);
  if (m <= 0 || t % m != 0)
    throw ConfigError("temporal_group: history length " + std::to_string(t) +
                      " is not divisible by m = " + std::to_string(m));
  std::vector<Tensor> groups;
  groups.reserve(std::size_t(t / m));
  for (int s = 0; s < t; s += m) groups.push_back(slice(x, 1, s, s + m));
  return groups;
}

Tensor stack_time(const Tensor& z) {
  if (z.rank() != 3)
    throw DimensionError("stack_time: expected N x m x C input, got " +
                         shape_str(z.shape()));
  const int n = z.extent(0), m = z.extent(1), c = z.extent(2);
  return reshape(permute(z, {1, 0, 2}), {m * n, c});
}

Tensor gcn_agg(const Tensor& h, const Tensor& a_star, const Tensor& w,
               const Tensor& b) {
  return relu(affine(matmul(a_star, h), w, b));
}

Tensor group_block(const Tensor& h0, const Tensor& a_star,
                   const GroupBlockParams& p, int n) {
  if (h0.rank() != 2)
    throw DimensionError("group_block: expected (mN) x C input, got " +
                         shape_str(h0.shape()));
  if (p.weights.empty()) throw ConfigError("group_block: no layers configured");
  const int c_in = p.weights.front().extent(0);
  const int c_out = p.weights.back().extent(1);
  if (!p.input_proj_w.defined() && p.residual_raw.defined() && c_in != c_out)
    throw ConfigError(
        "group_block: layers map " + std::to_string(c_in) + " -> " +
        std::to_string(c_out) +
        " channels; dense residual fusion needs equal counts - configure the "
        "input projection option");

  std::vector<Tensor> states;
  states.push_back(h0);
  for (std::size_t i = 0; i < p.weights.size(); ++i)
    states.push_back(gcn_agg(states.back(), a_star, p.weights[i], p.biases[i]));

  Tensor fused;
  if (p.residual_raw.defined()) {
    if (int(states.size()) != p.residual_raw.extent(0))
      throw ConfigError("group_block: residual weight count " +
                        std::to_string(p.residual_raw.extent(0)) +
                        " does not match " + std::to_string(states.size()) +
                        " fusion operands");
    // H_0 enters the fusion through the projection when channel counts differ
    if (p.input_proj_w.defined())
      states[0] = affine(h0, p.input_proj_w, p.input_proj_b);
    Tensor w = residual_weights(p);  // 1 x (L+1)
    for (std::size_t i = 0; i < states.size(); ++i) {
      Tensor term = scale_by(states[i], slice(w, 1, int(i), int(i) + 1));
      fused = i == 0 ? term : add(fused, term);
    }
  } else {
    fused = states.back();
  }

  if (fused.extent(0) < 2 * n)
    throw DimensionError("group_block: cannot crop rows [" + std::to_string(n) +
                         ", " + std::to_string(2 * n) + ") from " +
                         shape_str(fused.shape()));
  return slice(fused, 0, n, 2 * n);
}

std::array<Tensor, 2> feature_group(const std::vector<Tensor>& outputs) {
  if (outputs.size() != 4)
    throw ConfigError("feature_group: expected exactly 4 stage-1 outputs, got " +
                      std::to_string(outputs.size()));
  std::vector<Tensor> expanded;
  expanded.reserve(4);
  for (const auto& o : outputs) {
    if (o.rank() != 2)
      throw DimensionError("feature_group: outputs must be N x C', got " +
                           shape_str(o.shape()));
    expanded.push_back(reshape(o, {o.extent(0), o.extent(1), 1}));
  }
  Tensor f = concat(expanded, 2);  // N x C' x 4
  return {slice(f, 2, 0, 3), slice(f, 2, 1, 4)};
}

Tensor gstgc_forward(const Tensor& x, const Tensor& a_star,
                     const GstgcParams& params, const Dims& dims) {
  const auto groups = temporal_group(x, dims.m);
  if (groups.size() != params.stage1.size())
    throw ConfigError("gstgc_forward: " + std::to_string(groups.size()) +
                      " temporal groups but " +
                      std::to_string(params.stage1.size()) + " stage-1 blocks");

  std::vector<Tensor> stage1_out;
  stage1_out.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g)
    stage1_out.push_back(
        group_block(stack_time(groups[g]), a_star, params.stage1[g], dims.n));

  const auto feature_groups = feature_group(stage1_out);
  if (params.stage2.size() != 2)
    throw ConfigError("gstgc_forward: expected 2 stage-2 blocks, got " +
                      std::to_string(params.stage2.size()));

  std::vector<Tensor> stage2_out;
  for (int fg = 0; fg < 2; ++fg) {
    // The 3 overlapping outputs act as pseudo-time steps so the same 3N x 3N
    // adjacency applies; stack them time-block-major like stage 1.
    const Tensor& grp = feature_groups[std::size_t(fg)];  // N x C' x 3
    Tensor stacked = reshape(permute(grp, {2, 0, 1}),
                             {3 * dims.n, grp.extent(1)});
    stage2_out.push_back(
        group_block(stacked, a_star, params.stage2[std::size_t(fg)], dims.n));
  }

  Tensor paired = concat({reshape(stage2_out[0], {dims.n, dims.c_prime, 1}),
                          reshape(stage2_out[1], {dims.n, dims.c_prime, 1})},
                         2);
  return max_over_axis(paired, 2);
}

}  // namespace dgstmtl
