#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// One task's node-time series: rows = nodes, columns = time steps at a fixed
// interval.
struct TaskDataset {
  std::string name;
  Tensor series;  // N x L
  int interval_minutes = 5;
};

struct Scaler {
  double mean = 0.0;
  double std_dev = 1.0;
  bool fallback = false;  // zero-variance task, scale forced to 1
};

double normalize_value(double v, const Scaler& s);
double denormalize_value(double v, const Scaler& s);

// Windowed samples of one split, already normalized. inputs[k] has shape
// {samples, N, T, C}; targets is {samples, N, K}.
struct WindowedSplit {
  std::vector<Tensor> inputs;
  Tensor targets;
  int samples = 0;
};

struct DatasetSplits {
  WindowedSplit train, val, test;
  std::vector<Scaler> scalers;  // per task, fitted on the train region only
  std::vector<std::string> task_names;
  int n = 0;
  int k = 0;
  int history = 12;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::vector<std::string> warnings;
};

// Sample counts per split: val and test get the rounded share, train takes
// the remainder.
std::array<int, 3> split_counts(int samples, const std::array<double, 3>& ratios);

// Number of leading series columns visible during training (train-sample
// inputs and targets); scalers and the correlation prior are fitted on these.
int train_column_count(int length, int history,
                       const std::array<double, 3>& ratios);

// Slice of the series restricted to the training columns.
Tensor train_columns(const TaskDataset& task, int history,
                     const std::array<double, 3>& ratios);

// Windows every task into (past `history` steps, next step) samples, splits
// contiguously in time and z-scores per task. Scalers are fitted on the
// train region unless preset ones are given (e.g. from a checkpoint).
DatasetSplits window_and_split(const std::vector<TaskDataset>& tasks,
                               int history, const std::array<double, 3>& ratios,
                               const std::vector<Scaler>* preset_scalers = nullptr);

// Per-sample views used by training and evaluation.
Tensor sample_input(const WindowedSplit& split, int task, int sample);   // N x T x C
Tensor sample_targets(const WindowedSplit& split, int sample);           // 1 x N x K

// Series CSV with header "timestamp,node_0,...,node_{N-1}".
TaskDataset load_series_csv(const std::string& path, const std::string& name);
void write_series_csv(const std::string& path, const TaskDataset& task);

struct SynthResult {
  TaskDataset task_a;  // flow-like: daily sinusoid + graph-diffused AR noise
  TaskDataset task_b;  // affine decreasing in task A, noise scaled by 1-coupling
  std::vector<std::pair<int, int>> edges;  // ring graph
};

// Deterministic per seed. coupling = 1 makes task B an exact affine function
// of task A; coupling = 0 makes it independent noise around its base level.
SynthResult synth_coupled(int n_nodes, int length, double coupling,
                          std::uint64_t seed);

struct Manifest {
  std::vector<std::pair<std::string, std::string>> tasks;  // name -> csv path
  std::string edges_path;
  int interval_minutes = 5;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
};

Manifest load_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);

// Loads every task series plus the edge list referenced by a manifest.
struct LoadedData {
  std::vector<TaskDataset> tasks;
  std::vector<std::pair<int, int>> edges;
  int n = 0;
};
LoadedData load_from_manifest(const Manifest& m);

}  // namespace dgstmtl
