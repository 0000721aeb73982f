#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dgstmtl/ctke.hpp"
#include "dgstmtl/data.hpp"
#include "dgstmtl/dims.hpp"
#include "dgstmtl/graph_prior.hpp"
#include "dgstmtl/gstgc.hpp"
#include "dgstmtl/hamg.hpp"
#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// Ablation variants selectable by configuration. static_only/dynamic_only/
// no_gate change the adjacency rule; the others swap structural pieces.
enum class Variant {
  full,
  static_only,     // prior only, no dynamic unit, no gates
  dynamic_only,    // dynamic matrix only, no prior, no gates
  no_gate,         // prior + dynamic, no gates
  no_shared_head,  // per-task output heads instead of the shared two-layer head
  shared_input,    // one input projection shared by all tasks
  no_residual,     // group blocks without dense residual fusion
  mlp_temporal,    // stage 1 replaced by a per-task MLP
  mlp_all,         // the whole graph module replaced by a per-task MLP
};

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);
AdjacencyMode adjacency_mode_for(Variant v);
bool variant_uses_dynamic(Variant v);
bool variant_uses_gates(Variant v);
bool variant_uses_adjacency(Variant v);

struct LossConfig {
  std::vector<double> beta;   // task weights, nonnegative, sum to 1
  std::vector<double> alpha;  // loss magnitude coefficients
  std::vector<double> delta;  // quadratic/linear switch points

  static LossConfig defaults(int tasks);
  void validate(int tasks) const;
};

struct TrainConfig {
  int batch_size = 24;
  double learning_rate = 0.003;
  int hidden_dim = 64;  // C'
  int gcn_layers = 3;
  int max_epochs = 200;
  int patience = 10;
  std::uint64_t seed = 1;
  PriorLayout prior_layout = PriorLayout::P1;
  Variant variant = Variant::full;
  int history = 12;
  int ctke_dim = 48;
  double corr_threshold = 0.7;
  CorrelationMode corr_mode = CorrelationMode::abs;
  double gate_l1 = 0.0;  // optional sparsity penalty on the gates

  void validate() const;
};

struct AffineParams {
  Tensor w;
  Tensor b;
};

struct ModelParams {
  std::vector<AffineParams> input_layers;  // K entries, or 1 under shared_input
  std::optional<CtkeParams> ctke;
  GatingParams gates;                      // empty unless the variant gates
  std::vector<GstgcParams> gstgc;          // per task (empty for MLP variants)
  std::vector<AffineParams> mlp_temporal;  // per task, mlp_temporal variant
  std::vector<AffineParams> mlp_all;       // per task, mlp_all variant
  AffineParams head1, head2, res_proj;     // shared integration head
  std::vector<AffineParams> task_heads;    // no_shared_head variant

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
  std::size_t parameter_count() const;
};

struct Model {
  Dims dims;
  TrainConfig cfg;
  LossConfig loss_cfg;
  ModelParams params;
  GraphPrior prior;
  BasicMatrices basics;  // transient, for inspection exports; not checkpointed
  std::vector<Scaler> scalers;
  std::vector<std::string> task_names;
};

ModelParams init_model_params(const Dims& dims, const TrainConfig& cfg, Rng& rng);

// Derives Dims from data + config, assembles the prior from the edge list and
// train-split correlations (leak-free: only columns visible to the train
// split are used), and initializes parameters.
Model build_model(const LoadedData& data, const TrainConfig& cfg,
                  const LossConfig& loss_cfg,
                  const std::array<double, 3>& ratios = {0.6, 0.2, 0.2});

// Per-sample inputs indexed [sample][task], each N x T x C. Returns the
// next-step predictions, batch x N x K.
Tensor forward(const Model& model, const std::vector<std::vector<Tensor>>& batch);

// Piecewise quadratic/linear loss on one residual.
double smooth_l1_value(double y, double y_hat, double alpha, double delta);

// Sum over tasks of beta_k * mean(smooth_l1) for that task.
Tensor mtl_loss(const Tensor& y_hat, const Tensor& y, const LossConfig& cfg);

struct TaskMetrics {
  std::string task;
  double mse = 0.0, rmse = 0.0, mae = 0.0, mape = 0.0;
};

struct MetricsReport {
  std::vector<TaskMetrics> per_task;
};

// MSE/RMSE/MAE/MAPE of paired observations. MAPE skips terms with
// |y_true| < 1e-8 and reports 0 when every term is skipped.
TaskMetrics compute_metrics(std::span<const double> y_true,
                            std::span<const double> y_pred,
                            const std::string& task_name);

// Metrics on denormalized values; n = samples x nodes per task.
MetricsReport evaluate(const Model& model, const WindowedSplit& split);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> trace;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// Minibatch Adam with early stopping on the total validation loss; restores
// the best-validation parameters before returning. stop_after_epoch, when
// set, can cut training short (used by the acceptance harness).
TrainResult train_model(
    Model& model, const DatasetSplits& data,
    const std::function<bool(const EpochStats&)>& stop_after_epoch = nullptr);

// The built-in full-model gradient-check fixture: 4 nodes, 2 tasks, T = 12,
// a ring prior and a small random batch. Parameters are jittered off their
// init so the check probes a generic point.
struct GradCheckToy {
  Model model;
  std::vector<std::vector<Tensor>> batch;
  Tensor targets;
};

GradCheckToy make_gradcheck_toy(std::uint64_t seed, int hidden_dim = 8);

// Adam over a fixed parameter list (standard moments + bias correction).
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace dgstmtl
