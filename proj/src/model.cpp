#include "dgstmtl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dgstmtl/kernels.hpp"
#include "dgstmtl/ops.hpp"

namespace dgstmtl {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full:
      return "full";
    case Variant::static_only:
      return "static_only";
    case Variant::dynamic_only:
      return "dynamic_only";
    case Variant::no_gate:
      return "no_gate";
    case Variant::no_shared_head:
      return "no_shared_head";
    case Variant::shared_input:
      return "shared_input";
    case Variant::no_residual:
      return "no_residual";
    case Variant::mlp_temporal:
      return "mlp_temporal";
    case Variant::mlp_all:
      return "mlp_all";
  }
  return "?";
}

Variant variant_from_name(const std::string& s) {
  for (Variant v :
       {Variant::full, Variant::static_only, Variant::dynamic_only,
        Variant::no_gate, Variant::no_shared_head, Variant::shared_input,
        Variant::no_residual, Variant::mlp_temporal, Variant::mlp_all}) {
    if (s == variant_name(v)) return v;
  }
  throw ConfigError("unknown ablation variant '" + s + "'");
}

AdjacencyMode adjacency_mode_for(Variant v) {
  switch (v) {
    case Variant::static_only:
      return AdjacencyMode::static_only;
    case Variant::dynamic_only:
      return AdjacencyMode::dynamic_only;
    case Variant::no_gate:
      return AdjacencyMode::no_gate;
    default:
      return AdjacencyMode::full;
  }
}

bool variant_uses_adjacency(Variant v) { return v != Variant::mlp_all; }

bool variant_uses_dynamic(Variant v) {
  return variant_uses_adjacency(v) && v != Variant::static_only;
}

bool variant_uses_gates(Variant v) {
  return variant_uses_adjacency(v) &&
         adjacency_mode_for(v) == AdjacencyMode::full;
}

LossConfig LossConfig::defaults(int tasks) {
  LossConfig c;
  c.beta.assign(std::size_t(tasks), 1.0 / tasks);
  c.alpha.assign(std::size_t(tasks), 1.0);
  c.delta.assign(std::size_t(tasks), 1.0);
  return c;
}

void LossConfig::validate(int tasks) const {
  if (int(beta.size()) != tasks || int(alpha.size()) != tasks ||
      int(delta.size()) != tasks)
    throw ConfigError("LossConfig: expected " + std::to_string(tasks) +
                      " entries per coefficient vector");
  double sum = 0.0;
  for (double b : beta) {
    if (b < 0.0) throw ConfigError("LossConfig: beta entries must be nonnegative");
    sum += b;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("LossConfig: beta must sum to 1, got " + std::to_string(sum));
  for (double a : alpha)
    if (a <= 0.0) throw ConfigError("LossConfig: alpha entries must be positive");
  for (double d : delta)
    if (d <= 0.0) throw ConfigError("LossConfig: delta entries must be positive");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
  if (learning_rate < 0.0)
    throw ConfigError("TrainConfig: learning_rate must be nonnegative");
  if (hidden_dim < 1) throw ConfigError("TrainConfig: hidden_dim must be positive");
  if (gcn_layers < 1) throw ConfigError("TrainConfig: gcn_layers must be positive");
  if (max_epochs < 1) throw ConfigError("TrainConfig: max_epochs must be positive");
  if (patience < 1) throw ConfigError("TrainConfig: patience must be positive");
  if (history < 1) throw ConfigError("TrainConfig: history must be positive");
  if (ctke_dim < 1) throw ConfigError("TrainConfig: ctke_dim must be positive");
  if (corr_threshold < 0.0 || corr_threshold > 1.0)
    throw ConfigError("TrainConfig: corr_threshold must lie in [0, 1]");
  if (gate_l1 < 0.0) throw ConfigError("TrainConfig: gate_l1 must be nonnegative");
}

namespace {

AffineParams init_affine(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(double(in));
  std::vector<double> w(std::size_t(in) * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  AffineParams p;
  p.w = Tensor::from_data({in, out}, std::move(w), true);
  p.b = Tensor::zeros({out}, true);
  return p;
}

void push_named(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& name, const Tensor& t) {
  if (t.defined()) out.emplace_back(name, t);
}

void push_block(std::vector<std::pair<std::string, Tensor>>& out,
                const std::string& prefix, const GroupBlockParams& p) {
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    push_named(out, prefix + ".layer" + std::to_string(i) + ".w", p.weights[i]);
    push_named(out, prefix + ".layer" + std::to_string(i) + ".b", p.biases[i]);
  }
  push_named(out, prefix + ".residual", p.residual_raw);
  push_named(out, prefix + ".proj_w", p.input_proj_w);
  push_named(out, prefix + ".proj_b", p.input_proj_b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t k = 0; k < input_layers.size(); ++k) {
    push_named(out, "input." + std::to_string(k) + ".w", input_layers[k].w);
    push_named(out, "input." + std::to_string(k) + ".b", input_layers[k].b);
  }
  if (ctke) {
    push_named(out, "ctke.w", ctke->w);
    push_named(out, "ctke.b", ctke->b);
    push_named(out, "ctke.e_tk", ctke->emb.e_tk);
    push_named(out, "ctke.e_sk", ctke->emb.e_sk);
  }
  for (std::size_t k = 0; k < gates.m_k.size(); ++k)
    push_named(out, "gate." + std::to_string(k), gates.m_k[k]);
  for (std::size_t k = 0; k < gstgc.size(); ++k) {
    const std::string base = "gstgc." + std::to_string(k);
    for (std::size_t g = 0; g < gstgc[k].stage1.size(); ++g)
      push_block(out, base + ".stage1." + std::to_string(g), gstgc[k].stage1[g]);
    for (std::size_t g = 0; g < gstgc[k].stage2.size(); ++g)
      push_block(out, base + ".stage2." + std::to_string(g), gstgc[k].stage2[g]);
  }
  for (std::size_t k = 0; k < mlp_temporal.size(); ++k) {
    push_named(out, "mlp_temporal." + std::to_string(k) + ".w", mlp_temporal[k].w);
    push_named(out, "mlp_temporal." + std::to_string(k) + ".b", mlp_temporal[k].b);
  }
  for (std::size_t k = 0; k < mlp_all.size(); ++k) {
    push_named(out, "mlp_all." + std::to_string(k) + ".w", mlp_all[k].w);
    push_named(out, "mlp_all." + std::to_string(k) + ".b", mlp_all[k].b);
  }
  push_named(out, "head1.w", head1.w);
  push_named(out, "head1.b", head1.b);
  push_named(out, "head2.w", head2.w);
  push_named(out, "head2.b", head2.b);
  push_named(out, "res_proj.w", res_proj.w);
  push_named(out, "res_proj.b", res_proj.b);
  for (std::size_t k = 0; k < task_heads.size(); ++k) {
    push_named(out, "task_head." + std::to_string(k) + ".w", task_heads[k].w);
    push_named(out, "task_head." + std::to_string(k) + ".b", task_heads[k].b);
  }
  return out;
}

std::vector<Tensor> ModelParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& t : all()) n += t.size();
  return n;
}

ModelParams init_model_params(const Dims& dims, const TrainConfig& cfg, Rng& rng) {
  dims.validate();
  cfg.validate();
  const Variant v = cfg.variant;
  if (v != Variant::mlp_all && dims.t / dims.m != 4)
    throw ConfigError("the grouped pipeline requires T/m == 4 temporal groups, got " +
                      std::to_string(dims.t / dims.m));

  ModelParams p;
  const int in_layers = v == Variant::shared_input ? 1 : dims.k;
  for (int k = 0; k < in_layers; ++k)
    p.input_layers.push_back(init_affine(dims.c, dims.c_prime, rng));

  if (variant_uses_dynamic(v)) p.ctke = init_ctke_params(dims, rng);
  if (variant_uses_gates(v))
    p.gates = init_gating_params(dims.k, dims.block_rows());

  const bool residual = v != Variant::no_residual;
  for (int k = 0; k < dims.k; ++k) {
    switch (v) {
      case Variant::mlp_all:
        p.mlp_all.push_back(init_affine(dims.t * dims.c_prime, dims.c_prime, rng));
        break;
      case Variant::mlp_temporal: {
        p.mlp_temporal.push_back(
            init_affine(dims.t * dims.c_prime, 4 * dims.c_prime, rng));
        GstgcParams g;
        for (int fg = 0; fg < 2; ++fg)
          g.stage2.push_back(init_group_block(dims.c_prime, dims.c_prime,
                                              cfg.gcn_layers, residual, rng));
        p.gstgc.push_back(std::move(g));
        break;
      }
      default:
        p.gstgc.push_back(
            init_gstgc_params(dims, cfg.gcn_layers, residual, rng));
    }
  }

  if (v == Variant::no_shared_head) {
    for (int k = 0; k < dims.k; ++k)
      p.task_heads.push_back(init_affine(dims.c_prime, 1, rng));
  } else {
    p.head1 = init_affine(dims.c_prime * dims.k, dims.c_prime, rng);
    p.head2 = init_affine(dims.c_prime, dims.k, rng);
    p.res_proj = init_affine(dims.c_prime * dims.k, dims.k, rng);
  }
  return p;
}

Model build_model(const LoadedData& data, const TrainConfig& cfg,
                  const LossConfig& loss_cfg,
                  const std::array<double, 3>& ratios) {
  cfg.validate();
  Model model;
  model.cfg = cfg;
  model.dims.n = data.n;
  model.dims.t = cfg.history;
  model.dims.k = int(data.tasks.size());
  model.dims.c = 1;
  model.dims.c_prime = cfg.hidden_dim;
  model.dims.m = 3;
  model.dims.d = cfg.ctke_dim;
  model.dims.validate();
  loss_cfg.validate(model.dims.k);
  model.loss_cfg = loss_cfg;
  for (const auto& t : data.tasks) model.task_names.push_back(t.name);

  BasicMatrices basics;
  basics.threshold = cfg.corr_threshold;
  basics.a_s = build_physical(data.edges, data.n);
  basics.a_t = identity_matrix(data.n);
  std::vector<Tensor> per_task;
  for (const auto& t : data.tasks) {
    per_task.push_back(build_st_correlation(train_columns(t, cfg.history, ratios),
                                            cfg.corr_threshold, cfg.corr_mode)
                           .matrix);
  }
  basics.a_st = or_combine(per_task);
  model.prior = assemble_prior(basics, cfg.prior_layout);
  model.basics = basics;

  Rng rng(derive_seed(cfg.seed, SeedStream::param_init));
  model.params = init_model_params(model.dims, cfg, rng);
  return model;
}

namespace {

Tensor project_input(const Tensor& x, const AffineParams& layer, const Dims& d) {
  Tensor flat = reshape(x, {d.n * d.t, d.c});
  return reshape(affine(flat, layer.w, layer.b), {d.n, d.t, d.c_prime});
}

Tensor forward_one_sample(const Model& model, const std::vector<Tensor>& inputs) {
  const Dims& d = model.dims;
  const Variant v = model.cfg.variant;
  const ModelParams& p = model.params;

  Tensor dyn;
  if (variant_uses_dynamic(v)) {
    Tensor x_cat = concat_tasks(inputs);
    dyn = dynamic_matrix(embed(x_cat, p.ctke->emb), *p.ctke, d);
  }

  std::vector<Tensor> task_out;
  task_out.reserve(std::size_t(d.k));
  for (int k = 0; k < d.k; ++k) {
    const AffineParams& input_layer =
        v == Variant::shared_input ? p.input_layers[0]
                                   : p.input_layers[std::size_t(k)];
    Tensor x = project_input(inputs[std::size_t(k)], input_layer, d);

    Tensor a_star;
    if (variant_uses_adjacency(v))
      a_star = effective_adjacency(adjacency_mode_for(v), model.prior, dyn,
                                   variant_uses_gates(v) ? &p.gates : nullptr, k);

    switch (v) {
      case Variant::mlp_all: {
        Tensor flat = reshape(x, {d.n, d.t * d.c_prime});
        task_out.push_back(relu(affine(flat, p.mlp_all[std::size_t(k)].w,
                                       p.mlp_all[std::size_t(k)].b)));
        break;
      }
      case Variant::mlp_temporal: {
        Tensor flat = reshape(x, {d.n, d.t * d.c_prime});
        Tensor h = relu(affine(flat, p.mlp_temporal[std::size_t(k)].w,
                               p.mlp_temporal[std::size_t(k)].b));
        Tensor grouped = reshape(h, {d.n, 4, d.c_prime});
        std::vector<Tensor> stage1;
        for (int g = 0; g < 4; ++g)
          stage1.push_back(
              reshape(slice(grouped, 1, g, g + 1), {d.n, d.c_prime}));
        const auto fgroups = feature_group(stage1);
        std::vector<Tensor> stage2;
        for (int fg = 0; fg < 2; ++fg) {
          Tensor stacked = reshape(permute(fgroups[std::size_t(fg)], {2, 0, 1}),
                                   {3 * d.n, d.c_prime});
          stage2.push_back(group_block(stacked, a_star,
                                       p.gstgc[std::size_t(k)].stage2[std::size_t(fg)],
                                       d.n));
        }
        Tensor paired = concat({reshape(stage2[0], {d.n, d.c_prime, 1}),
                                reshape(stage2[1], {d.n, d.c_prime, 1})},
                               2);
        task_out.push_back(max_over_axis(paired, 2));
        break;
      }
      default:
        task_out.push_back(
            gstgc_forward(x, a_star, p.gstgc[std::size_t(k)], d));
    }
  }

  if (v == Variant::no_shared_head) {
    std::vector<Tensor> preds;
    for (int k = 0; k < d.k; ++k)
      preds.push_back(affine(task_out[std::size_t(k)],
                             p.task_heads[std::size_t(k)].w,
                             p.task_heads[std::size_t(k)].b));
    return reshape(concat(preds, 1), {1, d.n, d.k});
  }

  Tensor merged = concat(task_out, 1);  // N x C'K
  Tensor hidden = relu(affine(merged, p.head1.w, p.head1.b));
  Tensor out = affine(hidden, p.head2.w, p.head2.b);
  Tensor res = affine(merged, p.res_proj.w, p.res_proj.b);
  return reshape(add(out, res), {1, d.n, d.k});
}

}  // namespace

Tensor forward(const Model& model, const std::vector<std::vector<Tensor>>& batch) {
  if (batch.empty()) throw InputError("forward: empty batch");
  const Dims& d = model.dims;
  const Shape expected = {d.n, d.t, d.c};
  std::vector<Tensor> per_sample;
  per_sample.reserve(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& inputs = batch[s];
    if (int(inputs.size()) != d.k)
      throw DimensionError("forward: sample " + std::to_string(s) + " has " +
                           std::to_string(inputs.size()) + " task inputs, expected " +
                           std::to_string(d.k));
    for (const auto& t : inputs)
      if (t.shape() != expected)
        throw DimensionError("forward: sample " + std::to_string(s) +
                             " input shape " + shape_str(t.shape()) +
                             " does not match " + shape_str(expected));
    try {
      per_sample.push_back(forward_one_sample(model, inputs));
    } catch (const DimensionError& e) {
      throw DimensionError("sample " + std::to_string(s) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("sample " + std::to_string(s) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("sample " + std::to_string(s) + ": " + e.what());
    }
  }
  return concat(per_sample, 0);
}

double smooth_l1_value(double y, double y_hat, double alpha, double delta) {
  const double e = y - y_hat;
  const double ae = std::abs(e);
  return ae < delta ? 0.5 * alpha * e * e : alpha * (ae - 0.5);
}

Tensor mtl_loss(const Tensor& y_hat, const Tensor& y, const LossConfig& cfg) {
  if (y_hat.shape() != y.shape())
    throw DimensionError("mtl_loss: prediction shape " + shape_str(y_hat.shape()) +
                         " does not match target " + shape_str(y.shape()));
  if (y_hat.rank() != 3)
    throw DimensionError("mtl_loss: expected batch x N x K tensors, got " +
                         shape_str(y_hat.shape()));
  const int k = y_hat.extent(2);
  cfg.validate(k);
  Tensor total;
  for (int task = 0; task < k; ++task) {
    Tensor pk = slice(y_hat, 2, task, task + 1);
    Tensor yk = slice(y, 2, task, task + 1);
    Tensor lk = mean_all(smooth_l1(pk, yk, cfg.alpha[std::size_t(task)],
                                   cfg.delta[std::size_t(task)]));
    Tensor weighted = scale(lk, cfg.beta[std::size_t(task)]);
    total = task == 0 ? weighted : add(total, weighted);
  }
  return total;
}

TaskMetrics compute_metrics(std::span<const double> y_true,
                            std::span<const double> y_pred,
                            const std::string& task_name) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw InputError("compute_metrics: need equally many observations on both sides");
  double se = 0.0, ae = 0.0, ape = 0.0;
  long long ape_count = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double e = y_true[i] - y_pred[i];
    se += e * e;
    ae += std::abs(e);
    if (std::abs(y_true[i]) > 1e-8) {
      ape += std::abs(e) / std::abs(y_true[i]);
      ++ape_count;
    }
  }
  TaskMetrics tm;
  tm.task = task_name;
  const double n = double(y_true.size());
  tm.mse = se / n;
  tm.rmse = std::sqrt(tm.mse);
  tm.mae = ae / n;
  tm.mape = ape_count > 0 ? ape / double(ape_count) : 0.0;
  return tm;
}

MetricsReport evaluate(const Model& model, const WindowedSplit& split) {
  if (split.samples < 1) throw InputError("evaluate: empty split");
  if (int(model.scalers.size()) != model.dims.k)
    throw InputError("evaluate: model has no fitted scalers");
  NoGradGuard ng;

  const int k = model.dims.k;
  const int n = model.dims.n;
  std::vector<std::vector<double>> yt(static_cast<std::size_t>(k));
  std::vector<std::vector<double>> yp(static_cast<std::size_t>(k));

  constexpr int kChunk = 64;
  const auto targets = split.targets.values();
  for (int start = 0; start < split.samples; start += kChunk) {
    const int count = std::min(kChunk, split.samples - start);
    std::vector<std::vector<Tensor>> batch(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s)
      for (int task = 0; task < k; ++task)
        batch[std::size_t(s)].push_back(sample_input(split, task, start + s));
    Tensor pred = forward(model, batch);
    const auto pv = pred.values();
    for (int s = 0; s < count; ++s) {
      for (int node = 0; node < n; ++node) {
        for (int task = 0; task < k; ++task) {
          const std::size_t off =
              (std::size_t(start + s) * n + node) * std::size_t(k) + task;
          const std::size_t poff = (std::size_t(s) * n + node) * std::size_t(k) + task;
          const Scaler& sc = model.scalers[std::size_t(task)];
          yt[std::size_t(task)].push_back(denormalize_value(targets[off], sc));
          yp[std::size_t(task)].push_back(denormalize_value(pv[poff], sc));
        }
      }
    }
  }

  MetricsReport report;
  for (int task = 0; task < k; ++task) {
    const std::string name = model.task_names.empty()
                                 ? "task_" + std::to_string(task)
                                 : model.task_names[std::size_t(task)];
    report.per_task.push_back(
        compute_metrics(yt[std::size_t(task)], yp[std::size_t(task)], name));
  }
  return report;
}

GradCheckToy make_gradcheck_toy(std::uint64_t seed, int hidden_dim) {
  GradCheckToy toy;
  Model& model = toy.model;
  model.dims = Dims{4, 12, 2, 1, hidden_dim, 3, 6};
  model.cfg.hidden_dim = hidden_dim;
  model.cfg.ctke_dim = 6;
  model.cfg.seed = seed;
  model.loss_cfg = LossConfig::defaults(2);

  BasicMatrices basics;
  basics.threshold = 0.7;
  std::vector<std::pair<int, int>> ring, skip;
  for (int i = 0; i < 4; ++i) {
    ring.emplace_back(i, (i + 1) % 4);
    skip.emplace_back(i, (i + 2) % 4);
  }
  basics.a_s = build_physical(ring, 4);
  basics.a_t = identity_matrix(4);
  basics.a_st = build_physical(skip, 4);
  model.prior = assemble_prior(basics, PriorLayout::P1);
  model.basics = basics;

  Rng rng(derive_seed(seed, SeedStream::param_init));
  model.params = init_model_params(model.dims, model.cfg, rng);
  for (auto& p : model.params.all()) {
    for (double& v : p.values_mut()) v += rng.uniform(-0.05, 0.05);
  }

  toy.batch.resize(2);
  for (auto& sample : toy.batch) {
    for (int k = 0; k < 2; ++k) {
      std::vector<double> x(std::size_t(4) * 12);
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      sample.push_back(Tensor::from_data({4, 12, 1}, std::move(x)));
    }
  }
  std::vector<double> y(std::size_t(2) * 4 * 2);
  for (double& v : y) v = rng.uniform(-1.0, 1.0);
  toy.targets = Tensor::from_data({2, 4, 2}, std::move(y));
  return toy;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr, double beta1,
                             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 / (1.0 - std::pow(beta1_, t_));
  const double bc2 = 1.0 / (1.0 - std::pow(beta2_, t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    kernels::adam_update(p.values_mut().data(), p.grad_mut().data(),
                         m_[i].data(), v_[i].data(), p.size(), lr_, beta1_,
                         beta2_, eps_, bc1, bc2);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

namespace {

std::vector<std::vector<Tensor>> gather_batch(const WindowedSplit& split,
                                              const std::vector<int>& order,
                                              int start, int count, int tasks) {
  std::vector<std::vector<Tensor>> batch(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    batch[std::size_t(s)].reserve(std::size_t(tasks));
    for (int k = 0; k < tasks; ++k)
      batch[std::size_t(s)].push_back(
          sample_input(split, k, order[std::size_t(start + s)]));
  }
  return batch;
}

Tensor gather_targets(const WindowedSplit& split, const std::vector<int>& order,
                      int start, int count) {
  const int n = split.targets.extent(1), k = split.targets.extent(2);
  const auto src = split.targets.values();
  std::vector<double> out(std::size_t(count) * n * k);
  const std::size_t block = std::size_t(n) * k;
  for (int s = 0; s < count; ++s) {
    const std::size_t sample = std::size_t(order[std::size_t(start + s)]);
    std::copy(src.begin() + sample * block, src.begin() + (sample + 1) * block,
              out.begin() + std::size_t(s) * block);
  }
  return Tensor::from_data({count, n, k}, std::move(out));
}

Tensor training_loss(const Model& model, const Tensor& y_hat, const Tensor& y) {
  Tensor loss = mtl_loss(y_hat, y, model.loss_cfg);
  if (model.cfg.gate_l1 > 0.0 && !model.params.gates.m_k.empty()) {
    Tensor penalty;
    for (std::size_t k = 0; k < model.params.gates.m_k.size(); ++k) {
      Tensor l1 = l1_norm(model.params.gates.m_k[k]);
      penalty = k == 0 ? l1 : add(penalty, l1);
    }
    loss = add(loss, scale(penalty, model.cfg.gate_l1));
  }
  return loss;
}

double split_loss(const Model& model, const WindowedSplit& split) {
  NoGradGuard ng;
  constexpr int kChunk = 64;
  double total = 0.0;
  std::vector<int> order(std::size_t(split.samples));
  for (int i = 0; i < split.samples; ++i) order[std::size_t(i)] = i;
  for (int start = 0; start < split.samples; start += kChunk) {
    const int count = std::min(kChunk, split.samples - start);
    const auto batch = gather_batch(split, order, start, count, model.dims.k);
    const Tensor y = gather_targets(split, order, start, count);
    const Tensor loss = training_loss(model, forward(model, batch), y);
    total += loss.item() * count;
  }
  return total / split.samples;
}

}  // namespace

TrainResult train_model(Model& model,
                        const DatasetSplits& data,
                        const std::function<bool(const EpochStats&)>& stop_after_epoch) {
  model.cfg.validate();
  model.loss_cfg.validate(model.dims.k);
  if (data.train.samples < 1) throw InputError("train_model: empty train split");
  if (data.n != model.dims.n || data.k != model.dims.k)
    throw InputError("train_model: dataset dims (" + std::to_string(data.n) + ", " +
                     std::to_string(data.k) + ") do not match model (" +
                     std::to_string(model.dims.n) + ", " +
                     std::to_string(model.dims.k) + ")");
  model.scalers = data.scalers;
  if (!data.task_names.empty()) model.task_names = data.task_names;

  auto params = model.params.all();
  AdamOptimizer opt(params, model.cfg.learning_rate);
  Rng shuffle_rng(derive_seed(model.cfg.seed, SeedStream::batch_order));

  const int samples = data.train.samples;
  std::vector<int> order(static_cast<std::size_t>(samples), 0);
  for (int i = 0; i < samples; ++i) order[std::size_t(i)] = i;

  TrainResult result;
  double best_metric = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values;
  auto snapshot = [&]() {
    best_values.clear();
    for (const auto& p : params)
      best_values.emplace_back(p.values().begin(), p.values().end());
  };
  snapshot();
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= model.cfg.max_epochs; ++epoch) {
    // Fisher-Yates on the sample order, seeded per run
    for (int i = samples - 1; i > 0; --i) {
      const int j = int(shuffle_rng.below(std::uint64_t(i) + 1));
      std::swap(order[std::size_t(i)], order[std::size_t(j)]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < samples; start += model.cfg.batch_size) {
      const int count = std::min(model.cfg.batch_size, samples - start);
      const auto batch = gather_batch(data.train, order, start, count, model.dims.k);
      const Tensor y = gather_targets(data.train, order, start, count);
      Tensor loss = training_loss(model, forward(model, batch), y);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NumericError("train_model: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(start / model.cfg.batch_size));
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += value * count;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / samples;
    stats.val_loss = data.val.samples > 0 ? split_loss(model, data.val)
                                          : stats.train_loss;
    result.trace.push_back(stats);

    const double metric = stats.val_loss;
    if (metric < best_metric) {
      best_metric = metric;
      result.best_epoch = epoch;
      snapshot();
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }
    if (stop_after_epoch && stop_after_epoch(stats)) break;
    if (stale_epochs >= model.cfg.patience) break;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].values_mut();
    std::copy(best_values[i].begin(), best_values[i].end(), dst.begin());
  }
  result.best_val_loss = best_metric;
  return result;
}

}  // namespace dgstmtl
