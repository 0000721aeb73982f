#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "dgstmtl/checkpoint.hpp"
#include "dgstmtl/grad_check.hpp"
#include "dgstmtl/model.hpp"
#include "dgstmtl/ops.hpp"
#include "test_support.hpp"

using namespace dgstmtl;
using test_support::Mat;
using test_support::random_tensor;

namespace {

// A tiny in-memory dataset + model, shared by the training-behaviour tests.
struct Fixture {
  LoadedData data;
  DatasetSplits splits;
  Model model;
};

Fixture make_fixture(Variant variant, std::uint64_t seed, int n = 4,
                     int length = 160, int hidden = 6, double coupling = 0.8) {
  Fixture f;
  const SynthResult synth = synth_coupled(n, length, coupling, seed);
  f.data.tasks = {synth.task_a, synth.task_b};
  f.data.edges = synth.edges;
  f.data.n = n;
  f.splits = window_and_split(f.data.tasks, 12, {0.6, 0.2, 0.2});

  TrainConfig cfg;
  cfg.variant = variant;
  cfg.hidden_dim = hidden;
  cfg.ctke_dim = 6;
  cfg.batch_size = 16;
  cfg.max_epochs = 3;
  cfg.seed = seed;
  f.model = build_model(f.data, cfg, LossConfig::defaults(2));
  return f;
}

std::vector<std::vector<Tensor>> first_samples(const WindowedSplit& split,
                                               int count, int tasks) {
  std::vector<std::vector<Tensor>> batch;
  for (int s = 0; s < count; ++s) {
    std::vector<Tensor> inputs;
    for (int k = 0; k < tasks; ++k) inputs.push_back(sample_input(split, k, s));
    batch.push_back(std::move(inputs));
  }
  return batch;
}

std::set<std::string> name_set(const ModelParams& p) {
  std::set<std::string> out;
  for (const auto& [name, t] : p.named()) out.insert(name);
  return out;
}

bool any_name_starts_with(const std::set<std::string>& names,
                          const std::string& prefix) {
  for (const auto& n : names)
    if (n.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("forward returns batch x N x K for every variant") {
  for (Variant v : {Variant::full, Variant::static_only, Variant::dynamic_only,
                    Variant::no_gate, Variant::no_shared_head,
                    Variant::shared_input, Variant::no_residual,
                    Variant::mlp_temporal, Variant::mlp_all}) {
    Fixture f = make_fixture(v, 11);
    const auto batch = first_samples(f.splits.train, 3, 2);
    Tensor y = forward(f.model, batch);
    CHECK(y.shape() == Shape{3, 4, 2});
    for (double val : y.values()) CHECK(std::isfinite(val));
  }
}

TEST_CASE("a single-task model degenerates cleanly") {
  const SynthResult synth = synth_coupled(4, 120, 0.8, 3);
  LoadedData data;
  data.tasks = {synth.task_a};
  data.edges = synth.edges;
  data.n = 4;
  TrainConfig cfg;
  cfg.hidden_dim = 6;
  cfg.ctke_dim = 6;
  Model model = build_model(data, cfg, LossConfig::defaults(1));
  CHECK(model.loss_cfg.beta == std::vector<double>{1.0});
  CHECK(model.params.head2.w.shape() == Shape{6, 1});

  DatasetSplits splits = window_and_split(data.tasks, 12, {0.6, 0.2, 0.2});
  Tensor y = forward(model, first_samples(splits.train, 2, 1));
  CHECK(y.shape() == Shape{2, 4, 1});
}

TEST_CASE("the full forward matches a straight-line whole-network oracle") {
  // 2 nodes, 2 tasks, C' = 3, frozen params
  const int n = 2, hidden = 3;
  const SynthResult synth = synth_coupled(n, 60, 0.8, 21);
  LoadedData data;
  data.tasks = {synth.task_a, synth.task_b};
  data.edges = synth.edges;
  data.n = n;
  TrainConfig cfg;
  cfg.hidden_dim = hidden;
  cfg.ctke_dim = 6;
  cfg.seed = 77;
  Model model = build_model(data, cfg, LossConfig::defaults(2));
  // jitter every parameter so the point is generic
  Rng jitter(5);
  for (auto& p : model.params.all())
    for (double& v : p.values_mut()) v += jitter.uniform(-0.1, 0.1);

  DatasetSplits splits = window_and_split(data.tasks, 12, {0.6, 0.2, 0.2});
  const auto batch = first_samples(splits.train, 1, 2);
  Tensor got = forward(model, batch);

  // ---- straight-line oracle ----
  const Dims& d = model.dims;
  // dynamic matrix from the raw concatenated inputs
  Tensor x_cat = Tensor::zeros({d.n, d.t, d.k, 1});
  for (int i = 0; i < d.n; ++i)
    for (int t = 0; t < d.t; ++t)
      for (int k = 0; k < d.k; ++k)
        x_cat.values_mut()[(std::size_t(i) * d.t + t) * d.k + k] =
            batch[0][std::size_t(k)].at({i, t, 0});
  const auto bvec = test_support::o_dynamic_matrix(x_cat, *model.params.ctke, d);

  std::vector<Mat> task_out;
  for (int k = 0; k < d.k; ++k) {
    // hybrid adjacency
    Mat a = test_support::zeros_mat(3 * n, 3 * n);
    for (int i = 0; i < 3 * n; ++i)
      for (int j = 0; j < 3 * n; ++j)
        a.at(i, j) = model.params.gates.m_k[std::size_t(k)].at({i, j}) *
                     (model.prior.a_p.at({i, j}) + bvec[std::size_t(i) * 3 * n + j]);
    // input projection N x T x 1 -> N x T x C'
    const AffineParams& in = model.params.input_layers[std::size_t(k)];
    Tensor xp = Tensor::zeros({n, d.t, hidden});
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < d.t; ++t)
        for (int h = 0; h < hidden; ++h)
          xp.values_mut()[(std::size_t(i) * d.t + t) * hidden + h] =
              batch[0][std::size_t(k)].at({i, t, 0}) * in.w.at({0, h}) +
              in.b.values()[std::size_t(h)];
    task_out.push_back(test_support::o_gstgc_pipeline(
        xp, a, model.params.gstgc[std::size_t(k)], n, hidden));
  }

  // shared head on the concatenated features
  Mat merged = test_support::zeros_mat(n, hidden * d.k);
  for (int k = 0; k < d.k; ++k)
    for (int i = 0; i < n; ++i)
      for (int h = 0; h < hidden; ++h)
        merged.at(i, k * hidden + h) = task_out[std::size_t(k)].at(i, h);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d.k; ++k) {
      double acc = model.params.head2.b.values()[std::size_t(k)];
      for (int h = 0; h < hidden; ++h) {
        double pre = model.params.head1.b.values()[std::size_t(h)];
        for (int q = 0; q < hidden * d.k; ++q)
          pre += merged.at(i, q) * model.params.head1.w.at({q, h});
        acc += (pre > 0 ? pre : 0) * model.params.head2.w.at({h, k});
      }
      double res = model.params.res_proj.b.values()[std::size_t(k)];
      for (int q = 0; q < hidden * d.k; ++q)
        res += merged.at(i, q) * model.params.res_proj.w.at({q, k});
      CHECK(std::abs(got.at({0, i, k}) - (acc + res)) < 1e-12);
    }
  }
}

TEST_CASE("mtl_loss trivial cases and loop oracle") {
  LossConfig cfg = LossConfig::defaults(2);
  Rng rng(700);
  Tensor y = random_tensor({3, 2, 2}, rng);
  CHECK(mtl_loss(y, y, cfg).item() == 0.0);

  // beta = [1, 0] keeps only task 0
  LossConfig only_first = cfg;
  only_first.beta = {1.0, 0.0};
  Tensor p = random_tensor({3, 2, 2}, rng);
  Tensor just_task0 = mtl_loss(p, y, only_first);
  double want0 = 0.0;
  for (int s = 0; s < 3; ++s)
    for (int node = 0; node < 2; ++node)
      want0 += smooth_l1_value(y.at({s, node, 0}), p.at({s, node, 0}), 1.0, 1.0);
  want0 /= 6.0;
  CHECK(just_task0.item() == doctest::Approx(want0).epsilon(1e-12));

  // full double-loop oracle with distinct alpha/delta/beta
  LossConfig mixed;
  mixed.beta = {0.3, 0.7};
  mixed.alpha = {1.5, 2.0};
  mixed.delta = {0.4, 1.2};
  double want = 0.0;
  for (int k = 0; k < 2; ++k) {
    double task = 0.0;
    for (int s = 0; s < 3; ++s)
      for (int node = 0; node < 2; ++node)
        task += smooth_l1_value(y.at({s, node, k}), p.at({s, node, k}),
                                mixed.alpha[std::size_t(k)],
                                mixed.delta[std::size_t(k)]);
    want += mixed.beta[std::size_t(k)] * task / 6.0;
  }
  CHECK(std::abs(mtl_loss(p, y, mixed).item() - want) < 1e-12);
}

TEST_CASE("beta rescaling then renormalizing leaves the loss unchanged") {
  Rng rng(701);
  Tensor y = random_tensor({4, 3, 2}, rng);
  Tensor p = random_tensor({4, 3, 2}, rng);
  LossConfig cfg;
  cfg.beta = {0.25, 0.75};
  cfg.alpha = {1.0, 1.0};
  cfg.delta = {1.0, 1.0};
  const double base = mtl_loss(p, y, cfg).item();

  const double c = 3.7;
  LossConfig scaled = cfg;
  double sum = 0.0;
  for (double& b : scaled.beta) {
    b *= c;
    sum += b;
  }
  for (double& b : scaled.beta) b /= sum;
  CHECK(std::abs(mtl_loss(p, y, scaled).item() - base) < 1e-12);
}

TEST_CASE("smooth_l1_value spec points") {
  CHECK(smooth_l1_value(1.0, 1.0, 1.0, 1.0) == 0.0);
  CHECK(smooth_l1_value(0.5, 0.0, 1.0, 1.0) == doctest::Approx(0.125));
  CHECK(smooth_l1_value(2.0, 0.0, 1.0, 1.0) == doctest::Approx(1.5));
}

TEST_CASE("metrics reproduce the hand case, the guard and the loop oracle") {
  // y = [0, 0], yhat = [3, 4]: MSE 12.5, RMSE sqrt(12.5), MAE 3.5; both
  // targets are zero so the MAPE guard leaves MAPE at 0
  const std::vector<double> y0 = {0.0, 0.0}, p0 = {3.0, 4.0};
  const TaskMetrics hand = compute_metrics(y0, p0, "hand");
  CHECK(hand.mse == doctest::Approx(12.5).epsilon(1e-15));
  CHECK(hand.rmse == doctest::Approx(std::sqrt(12.5)).epsilon(1e-15));
  CHECK(hand.mae == doctest::Approx(3.5).epsilon(1e-15));
  CHECK(hand.mape == 0.0);

  // y = yhat: every metric is exactly zero
  const std::vector<double> same = {1.5, -2.0, 7.25};
  const TaskMetrics zero = compute_metrics(same, same, "same");
  CHECK(zero.mse == 0.0);
  CHECK(zero.rmse == 0.0);
  CHECK(zero.mae == 0.0);
  CHECK(zero.mape == 0.0);

  // random vectors against a single-pass loop oracle
  {
    Rng rng(699);
    std::vector<double> yt(37), yp(37);
    for (auto& v : yt) v = rng.uniform(-10, 10);
    for (auto& v : yp) v = rng.uniform(-10, 10);
    const TaskMetrics got = compute_metrics(yt, yp, "rand");
    double se = 0, ae = 0, ape = 0;
    long long apen = 0;
    for (std::size_t i = 0; i < yt.size(); ++i) {
      se += (yt[i] - yp[i]) * (yt[i] - yp[i]);
      ae += std::abs(yt[i] - yp[i]);
      if (std::abs(yt[i]) > 1e-8) {
        ape += std::abs(yt[i] - yp[i]) / std::abs(yt[i]);
        ++apen;
      }
    }
    CHECK(std::abs(got.mse - se / 37.0) < 1e-12);
    CHECK(std::abs(got.rmse - std::sqrt(se / 37.0)) < 1e-12);
    CHECK(std::abs(got.mae - ae / 37.0) < 1e-12);
    CHECK(std::abs(got.mape - ape / double(apen)) < 1e-12);
  }

  // end-to-end: a trained-ish model evaluated via the public surface, against
  // a loop oracle over denormalized predictions
  Fixture f = make_fixture(Variant::full, 31);
  f.model.scalers = f.splits.scalers;
  f.model.task_names = f.splits.task_names;
  const MetricsReport report = evaluate(f.model, f.splits.test);
  REQUIRE(report.per_task.size() == 2);

  NoGradGuard ng;
  const auto batch = first_samples(f.splits.test, f.splits.test.samples, 2);
  Tensor pred = forward(f.model, batch);
  for (int k = 0; k < 2; ++k) {
    double se_sum = 0, ae_sum = 0, ape_sum = 0;
    long long ape_n = 0;
    for (int s = 0; s < f.splits.test.samples; ++s)
      for (int node = 0; node < 4; ++node) {
        const Scaler& sc = f.model.scalers[std::size_t(k)];
        const double yt =
            denormalize_value(f.splits.test.targets.at({s, node, k}), sc);
        const double yp = denormalize_value(pred.at({s, node, k}), sc);
        se_sum += (yt - yp) * (yt - yp);
        ae_sum += std::abs(yt - yp);
        if (std::abs(yt) > 1e-8) {
          ape_sum += std::abs(yt - yp) / std::abs(yt);
          ape_n++;
        }
      }
    const double count = double(f.splits.test.samples) * 4;
    CHECK(std::abs(report.per_task[std::size_t(k)].mse - se_sum / count) < 1e-12);
    CHECK(std::abs(report.per_task[std::size_t(k)].rmse -
                   std::sqrt(se_sum / count)) < 1e-12);
    CHECK(std::abs(report.per_task[std::size_t(k)].mae - ae_sum / count) < 1e-12);
    CHECK(std::abs(report.per_task[std::size_t(k)].mape - ape_sum / ape_n) < 1e-12);
  }
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  Fixture f = make_fixture(Variant::full, 41);
  f.model.cfg.learning_rate = 0.0;
  f.model.cfg.max_epochs = 2;
  f.model.cfg.patience = 5;
  std::vector<std::vector<double>> before;
  for (const auto& p : f.model.params.all())
    before.emplace_back(p.values().begin(), p.values().end());
  train_model(f.model, f.splits);
  const auto params = f.model.params.all();
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(std::vector<double>(params[i].values().begin(),
                              params[i].values().end()) == before[i]);
}

TEST_CASE("training reduces the loss on a tiny synthetic set") {
  Fixture f = make_fixture(Variant::full, 51);
  f.model.cfg.max_epochs = 5;
  f.model.cfg.learning_rate = 0.003;
  const TrainResult r = train_model(f.model, f.splits);
  REQUIRE(r.trace.size() >= 2);
  CHECK(r.trace.back().train_loss < r.trace.front().train_loss);
}

TEST_CASE("early stopping halts after patience stale epochs") {
  Fixture f = make_fixture(Variant::full, 61);
  f.model.cfg.learning_rate = 0.0;  // validation loss can never improve
  f.model.cfg.max_epochs = 50;
  f.model.cfg.patience = 4;
  const TrainResult r = train_model(f.model, f.splits);
  // epoch 1 sets the best; epochs 2..5 are stale; stop at epoch 1 + patience
  CHECK(int(r.trace.size()) == 1 + 4);
  CHECK(r.best_epoch == 1);
}

TEST_CASE("two runs with the same seed produce identical traces") {
  Fixture f1 = make_fixture(Variant::full, 71);
  Fixture f2 = make_fixture(Variant::full, 71);
  f1.model.cfg.max_epochs = 3;
  f2.model.cfg.max_epochs = 3;
  const TrainResult r1 = train_model(f1.model, f1.splits);
  const TrainResult r2 = train_model(f2.model, f2.splits);
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].train_loss == r2.trace[i].train_loss);
    CHECK(r1.trace[i].val_loss == r2.trace[i].val_loss);
  }
}

TEST_CASE("non-finite losses abort with epoch/batch diagnostics") {
  Fixture f = make_fixture(Variant::full, 81);
  f.model.cfg.learning_rate = 0.003;
  f.model.cfg.max_epochs = 2;
  // poison one parameter
  f.model.params.head2.b.values_mut()[0] = std::nan("");
  try {
    train_model(f.model, f.splits);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("forward attaches the sample index to propagated sub-op errors") {
  Fixture f = make_fixture(Variant::full, 82);
  // overflow the correlation so the softmax precondition fires
  for (double& v : f.model.params.ctke->emb.e_tk.values_mut()) v = 1e200;
  try {
    forward(f.model, first_samples(f.splits.train, 2, 2));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("sample 0") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly and reproduce metrics") {
  namespace fs = std::filesystem;
  Fixture f = make_fixture(Variant::full, 91);
  f.model.cfg.max_epochs = 2;
  train_model(f.model, f.splits);
  const MetricsReport before = evaluate(f.model, f.splits.test);

  const std::string path =
      (fs::temp_directory_path() / "dgstmtl_ckpt_test.bin").string();
  save_checkpoint(f.model, path);
  Model loaded = load_checkpoint(path);

  const auto a = f.model.params.named();
  const auto b = loaded.params.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::vector<double>(a[i].second.values().begin(),
                              a[i].second.values().end()) ==
          std::vector<double>(b[i].second.values().begin(),
                              b[i].second.values().end()));
  }
  CHECK(std::vector<double>(f.model.prior.a_p.values().begin(),
                            f.model.prior.a_p.values().end()) ==
        std::vector<double>(loaded.prior.a_p.values().begin(),
                            loaded.prior.a_p.values().end()));

  const MetricsReport after = evaluate(loaded, f.splits.test);
  for (std::size_t k = 0; k < before.per_task.size(); ++k) {
    CHECK(before.per_task[k].mse == after.per_task[k].mse);
    CHECK(before.per_task[k].rmse == after.per_task[k].rmse);
    CHECK(before.per_task[k].mae == after.per_task[k].mae);
    CHECK(before.per_task[k].mape == after.per_task[k].mape);
  }
}

TEST_CASE("every ablation variant changes the parameter set as documented") {
  auto names_for = [](Variant v) {
    Fixture f = make_fixture(v, 101);
    return name_set(f.model.params);
  };
  auto count_for = [](Variant v) {
    Fixture f = make_fixture(v, 101);
    return f.model.params.parameter_count();
  };

  const auto full = names_for(Variant::full);
  CHECK(any_name_starts_with(full, "ctke."));
  CHECK(any_name_starts_with(full, "gate."));
  CHECK(any_name_starts_with(full, "gstgc.1.stage1"));
  CHECK(full.count("head1.w") == 1);
  CHECK(full.count("res_proj.w") == 1);
  CHECK(full.count("input.1.w") == 1);

  // Variant 1: no dynamic unit, no gates
  const auto v1 = names_for(Variant::static_only);
  CHECK(!any_name_starts_with(v1, "ctke."));
  CHECK(!any_name_starts_with(v1, "gate."));
  // Variant 2: dynamic matrix only, no gates
  const auto v2 = names_for(Variant::dynamic_only);
  CHECK(any_name_starts_with(v2, "ctke."));
  CHECK(!any_name_starts_with(v2, "gate."));
  // Variant 3: both components, no gates
  const auto v3 = names_for(Variant::no_gate);
  CHECK(any_name_starts_with(v3, "ctke."));
  CHECK(!any_name_starts_with(v3, "gate."));
  CHECK(count_for(Variant::no_gate) < count_for(Variant::full));
  // Variant 4: per-task heads replace the shared integration unit
  const auto v4 = names_for(Variant::no_shared_head);
  CHECK(!v4.count("head1.w"));
  CHECK(!v4.count("res_proj.w"));
  CHECK(any_name_starts_with(v4, "task_head.1"));
  // Variant 5: one shared input layer
  const auto v5 = names_for(Variant::shared_input);
  CHECK(v5.count("input.0.w") == 1);
  CHECK(!v5.count("input.1.w"));
  // Variant 9: no residual-fusion weights anywhere
  const auto v9 = names_for(Variant::no_residual);
  bool any_residual = false;
  for (const auto& n : v9) any_residual |= n.find(".residual") != std::string::npos;
  CHECK(!any_residual);
  // Variant 10: stage-1 blocks replaced by an MLP, stage 2 kept
  const auto v10 = names_for(Variant::mlp_temporal);
  CHECK(any_name_starts_with(v10, "mlp_temporal."));
  CHECK(!any_name_starts_with(v10, "gstgc.0.stage1"));
  CHECK(any_name_starts_with(v10, "gstgc.0.stage2"));
  // Variant 11: the whole graph module replaced by an MLP
  const auto v11 = names_for(Variant::mlp_all);
  CHECK(any_name_starts_with(v11, "mlp_all."));
  CHECK(!any_name_starts_with(v11, "gstgc."));
  CHECK(!any_name_starts_with(v11, "ctke."));
  CHECK(!any_name_starts_with(v11, "gate."));

  // every variant is trainable end to end
  for (Variant v : {Variant::static_only, Variant::no_shared_head,
                    Variant::mlp_temporal, Variant::mlp_all}) {
    Fixture f = make_fixture(v, 103);
    f.model.cfg.max_epochs = 1;
    const TrainResult r = train_model(f.model, f.splits);
    CHECK(r.trace.size() == 1);
    CHECK(std::isfinite(r.trace[0].train_loss));
  }
}

TEST_CASE("ablation variants alter the computation graph behaviourally") {
  Fixture base = make_fixture(Variant::full, 104);
  const auto batch = first_samples(base.splits.train, 2, 2);
  Tensor y_full = forward(base.model, batch);

  for (Variant v : {Variant::static_only, Variant::dynamic_only, Variant::mlp_all}) {
    Fixture f = make_fixture(v, 104);
    Tensor y = forward(f.model, batch);
    CHECK(test_support::max_abs_diff(y.values(), y_full.values()) > 1e-9);
  }

  // gates start at all ones, so no_gate coincides with full at initialization
  // and diverges once the gates move
  Fixture ng = make_fixture(Variant::no_gate, 104);
  Tensor y_ng = forward(ng.model, batch);
  CHECK(test_support::max_abs_diff(y_ng.values(), y_full.values()) == 0.0);
  for (auto& g : base.model.params.gates.m_k)
    for (double& v : g.values_mut()) v = 0.9;
  Tensor y_gated = forward(base.model, batch);
  CHECK(test_support::max_abs_diff(y_gated.values(), y_ng.values()) > 1e-9);
}

TEST_CASE("full-model gradient check on the builtin toy passes at 1e-4") {
  GradCheckToy toy = make_gradcheck_toy(7);
  auto f = [&]() {
    return mtl_loss(forward(toy.model, toy.batch), toy.targets,
                    toy.model.loss_cfg);
  };
  const auto report = grad_check(f, toy.model.params.all(), 1e-5, 0.02, 7);
  CHECK(report.coords_checked > 10);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("gate L1 penalty contributes to the loss and its gradient") {
  Fixture f = make_fixture(Variant::full, 105);
  f.model.cfg.gate_l1 = 0.01;
  f.model.cfg.max_epochs = 1;
  // gates start at all ones: the penalty raises the epoch-1 loss by
  // gate_l1 * K * (3N)^2 relative to the unpenalized run
  Fixture g = make_fixture(Variant::full, 105);
  g.model.cfg.max_epochs = 1;
  const double with = train_model(f.model, f.splits).trace[0].train_loss;
  const double without = train_model(g.model, g.splits).trace[0].train_loss;
  CHECK(with > without);
}
