#include "dgstmtl/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgstmtl/graph_prior.hpp"
#include "dgstmtl/rng.hpp"

namespace dgstmtl {
namespace {

namespace fs = std::filesystem;

void validate_ratios(const std::array<double, 3>& r) {
  for (double v : r)
    if (v < 0.0 || v > 1.0) throw InputError("split ratios must lie in [0, 1]");
  const double s = r[0] + r[1] + r[2];
  if (std::abs(s - 1.0) > 1e-9)
    throw InputError("split ratios must sum to 1, got " + std::to_string(s));
}

double parse_cell(const std::string& token, const std::string& path, int row) {
  double v = 0.0;
  const char* b = token.data();
  const char* e = b + token.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw DataError("'" + path + "' row " + std::to_string(row) +
                    ": cell '" + token + "' is not a number");
  if (!std::isfinite(v))
    throw DataError("'" + path + "' row " + std::to_string(row) +
                    ": non-finite value");
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double normalize_value(double v, const Scaler& s) {
  return (v - s.mean) / s.std_dev;
}

double denormalize_value(double v, const Scaler& s) {
  return v * s.std_dev + s.mean;
}

std::array<int, 3> split_counts(int samples, const std::array<double, 3>& ratios) {
  validate_ratios(ratios);
  if (samples < 1) throw InputError("split_counts: no samples to split");
  int n_val = int(std::llround(ratios[1] * samples));
  int n_test = int(std::llround(ratios[2] * samples));
  if (n_val + n_test > samples) {  // rounding spill-over on tiny sets
    n_test = std::min(n_test, samples - n_val);
    n_val = std::min(n_val, samples - n_test);
  }
  const int n_train = samples - n_val - n_test;
  return {n_train, n_val, n_test};
}

int train_column_count(int length, int history,
                       const std::array<double, 3>& ratios) {
  const int samples = length - history;
  if (samples < 1)
    throw InputError("series of length " + std::to_string(length) +
                     " is too short for history " + std::to_string(history));
  const auto counts = split_counts(samples, ratios);
  return counts[0] + history;  // inputs and targets of all train samples
}

Tensor train_columns(const TaskDataset& task, int history,
                     const std::array<double, 3>& ratios) {
  const int cols = train_column_count(task.series.extent(1), history, ratios);
  const int n = task.series.extent(0);
  std::vector<double> out(std::size_t(n) * cols);
  const auto src = task.series.values();
  const int full = task.series.extent(1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cols; ++j)
      out[std::size_t(i) * cols + j] = src[std::size_t(i) * full + j];
  return Tensor::from_data({n, cols}, std::move(out));
}

namespace {

WindowedSplit make_split(const std::vector<TaskDataset>& tasks,
                         const std::vector<Scaler>& scalers, int history,
                         int first_sample, int count) {
  WindowedSplit split;
  split.samples = count;
  const int k = int(tasks.size());
  const int n = tasks[0].series.extent(0);
  const int len = tasks[0].series.extent(1);
  split.targets = Tensor::zeros({std::max(count, 1), n, k});
  auto tv = split.targets.values_mut();
  for (int ti = 0; ti < k; ++ti) {
    Tensor input = Tensor::zeros({std::max(count, 1), n, history, 1});
    auto iv = input.values_mut();
    const auto series = tasks[std::size_t(ti)].series.values();
    const Scaler& sc = scalers[std::size_t(ti)];
    for (int s = 0; s < count; ++s) {
      const int col0 = first_sample + s;
      for (int node = 0; node < n; ++node) {
        const double* row = series.data() + std::size_t(node) * len;
        double* dst = iv.data() +
                      ((std::size_t(s) * n + node) * std::size_t(history));
        for (int tt = 0; tt < history; ++tt)
          dst[tt] = normalize_value(row[col0 + tt], sc);
        tv[(std::size_t(s) * n + node) * std::size_t(k) + ti] =
            normalize_value(row[col0 + history], sc);
      }
    }
    split.inputs.push_back(std::move(input));
  }
  return split;
}

}  // namespace

DatasetSplits window_and_split(const std::vector<TaskDataset>& tasks,
                               int history, const std::array<double, 3>& ratios,
                               const std::vector<Scaler>* preset_scalers) {
  if (tasks.empty()) throw InputError("window_and_split: no tasks");
  if (history < 1) throw InputError("window_and_split: history must be positive");
  const int n = tasks[0].series.extent(0);
  const int len = tasks[0].series.extent(1);
  for (const auto& t : tasks) {
    if (t.series.extent(0) != n || t.series.extent(1) != len)
      throw DimensionError("window_and_split: task '" + t.name +
                           "' shape " + shape_str(t.series.shape()) +
                           " differs from " + shape_str(tasks[0].series.shape()));
  }
  const int samples = len - history;
  if (samples < 1)
    throw InputError("window_and_split: series length " + std::to_string(len) +
                     " too short for history " + std::to_string(history));
  const auto counts = split_counts(samples, ratios);

  DatasetSplits out;
  out.n = n;
  out.k = int(tasks.size());
  out.history = history;
  out.ratios = ratios;
  if (preset_scalers && int(preset_scalers->size()) != int(tasks.size()))
    throw InputError("window_and_split: preset scaler count does not match tasks");
  const int fit_cols = counts[0] + history;
  for (const auto& t : tasks) out.task_names.push_back(t.name);
  if (preset_scalers) {
    out.scalers = *preset_scalers;
  } else
  for (const auto& t : tasks) {
    const auto v = t.series.values();
    // two-pass mean/stddev over the training columns
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < fit_cols; ++j) sum += v[std::size_t(i) * len + j];
    const double count = double(n) * fit_cols;
    const double mean = sum / count;
    double ss = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < fit_cols; ++j) {
        const double d = v[std::size_t(i) * len + j] - mean;
        ss += d * d;
      }
    Scaler sc;
    sc.mean = mean;
    sc.std_dev = std::sqrt(ss / count);
    if (sc.std_dev == 0.0) {
      sc.std_dev = 1.0;
      sc.fallback = true;
      out.warnings.push_back("task '" + t.name +
                             "' has zero variance on the train split; scale set to 1");
    }
    out.scalers.push_back(sc);
  }

  out.train = make_split(tasks, out.scalers, history, 0, counts[0]);
  out.val = make_split(tasks, out.scalers, history, counts[0], counts[1]);
  out.test =
      make_split(tasks, out.scalers, history, counts[0] + counts[1], counts[2]);
  return out;
}

Tensor sample_input(const WindowedSplit& split, int task, int sample) {
  if (task < 0 || task >= int(split.inputs.size()))
    throw InputError("sample_input: task index out of range");
  if (sample < 0 || sample >= split.samples)
    throw InputError("sample_input: sample index out of range");
  const Tensor& all = split.inputs[std::size_t(task)];
  const int n = all.extent(1), t = all.extent(2), c = all.extent(3);
  const std::size_t block = std::size_t(n) * t * c;
  const auto src = all.values();
  std::vector<double> out(src.begin() + std::size_t(sample) * block,
                          src.begin() + (std::size_t(sample) + 1) * block);
  return Tensor::from_data({n, t, c}, std::move(out));
}

Tensor sample_targets(const WindowedSplit& split, int sample) {
  if (sample < 0 || sample >= split.samples)
    throw InputError("sample_targets: sample index out of range");
  const int n = split.targets.extent(1), k = split.targets.extent(2);
  const std::size_t block = std::size_t(n) * k;
  const auto src = split.targets.values();
  std::vector<double> out(src.begin() + std::size_t(sample) * block,
                          src.begin() + (std::size_t(sample) + 1) * block);
  return Tensor::from_data({1, n, k}, std::move(out));
}

TaskDataset load_series_csv(const std::string& path, const std::string& name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open series csv '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);
  if (header.size() < 2 || header[0] != "timestamp")
    throw DataError("'" + path +
                    "': expected header 'timestamp,node_0,...', got '" + line + "'");
  const int n = int(header.size()) - 1;
  for (int i = 0; i < n; ++i) {
    if (header[std::size_t(i) + 1] != "node_" + std::to_string(i))
      throw DataError("'" + path + "': column " + std::to_string(i + 1) +
                      " should be 'node_" + std::to_string(i) + "', got '" +
                      header[std::size_t(i) + 1] + "'");
  }

  std::vector<double> cells;
  std::vector<long long> stamps;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tokens = split_line(line);
    if (int(tokens.size()) != n + 1)
      throw DataError("'" + path + "' row " + std::to_string(row) + ": expected " +
                      std::to_string(n + 1) + " cells, got " +
                      std::to_string(tokens.size()));
    for (const auto& t : tokens)
      if (t.empty())
        throw DataError("'" + path + "' row " + std::to_string(row) +
                        ": missing value");
    long long ts = 0;
    const auto res =
        std::from_chars(tokens[0].data(), tokens[0].data() + tokens[0].size(), ts);
    if (res.ec != std::errc{} || res.ptr != tokens[0].data() + tokens[0].size())
      throw DataError("'" + path + "' row " + std::to_string(row) +
                      ": timestamp '" + tokens[0] + "' is not an integer");
    stamps.push_back(ts);
    for (int i = 0; i < n; ++i)
      cells.push_back(parse_cell(tokens[std::size_t(i) + 1], path, row));
  }
  const int len = int(stamps.size());
  if (len == 0) throw DataError("'" + path + "' has a header but no rows");
  if (len < 2)
    throw DataError("'" + path + "' needs at least 2 rows to establish the interval");
  const long long gap = stamps[1] - stamps[0];
  if (gap <= 0)
    throw DataError("'" + path + "' row 3: timestamps are not increasing");
  for (int i = 1; i < len; ++i) {
    const long long g = stamps[std::size_t(i)] - stamps[std::size_t(i) - 1];
    if (g != gap)
      throw DataError("'" + path + "' row " + std::to_string(i + 2) +
                      ": interval " + std::to_string(g) +
                      "s differs from expected " + std::to_string(gap) + "s");
  }
  if (gap % 60 != 0)
    throw DataError("'" + path + "': interval " + std::to_string(gap) +
                    "s is not a whole number of minutes");

  // cells are row-major time x node; transpose to node x time
  std::vector<double> series(std::size_t(n) * len);
  for (int t = 0; t < len; ++t)
    for (int i = 0; i < n; ++i)
      series[std::size_t(i) * len + t] = cells[std::size_t(t) * n + i];

  TaskDataset out;
  out.name = name;
  out.series = Tensor::from_data({n, len}, std::move(series));
  out.interval_minutes = int(gap / 60);
  return out;
}

void write_series_csv(const std::string& path, const TaskDataset& task) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write series csv '" + path + "'");
  const int n = task.series.extent(0), len = task.series.extent(1);
  out << "timestamp";
  for (int i = 0; i < n; ++i) out << ",node_" << i;
  out << '\n';
  const auto v = task.series.values();
  const long long gap = 60LL * task.interval_minutes;
  for (int t = 0; t < len; ++t) {
    out << gap * t;
    for (int i = 0; i < n; ++i)
      out << ',' << format_double(v[std::size_t(i) * len + t]);
    out << '\n';
  }
}

SynthResult synth_coupled(int n_nodes, int length, double coupling,
                          std::uint64_t seed) {
  if (n_nodes < 2) throw InputError("synth_coupled: need at least 2 nodes");
  if (length < 2) throw InputError("synth_coupled: need at least 2 steps");
  if (coupling < 0.0 || coupling > 1.0)
    throw InputError("synth_coupled: coupling must lie in [0, 1]");

  Rng rng(derive_seed(seed, SeedStream::synth));

  constexpr int kPeriod = 288;  // steps per simulated day at 5-minute intervals
  constexpr double kBase = 200.0, kAmp = 80.0;
  constexpr double kArRho = 0.9, kArSigma = 4.0;
  constexpr double kBBase = 60.0, kBSlope = 0.25, kBSigma = 5.0;
  constexpr double kDiffuse = 0.4;
  constexpr int kBurnIn = 64;
  const double two_pi = 2.0 * 3.14159265358979323846;

  std::vector<double> ar(std::size_t(n_nodes), 0.0);
  std::vector<double> diffused(static_cast<std::size_t>(n_nodes), 0.0);
  std::vector<double> tmp(static_cast<std::size_t>(n_nodes), 0.0);
  std::vector<double> a(std::size_t(n_nodes) * length);
  std::vector<double> b(std::size_t(n_nodes) * length);

  for (int t = -kBurnIn; t < length; ++t) {
    for (int i = 0; i < n_nodes; ++i)
      ar[std::size_t(i)] = kArRho * ar[std::size_t(i)] + kArSigma * rng.gaussian();
    // two rounds of ring diffusion smooth the noise across neighbours
    diffused = ar;
    for (int round = 0; round < 2; ++round) {
      for (int i = 0; i < n_nodes; ++i) {
        const int left = (i + n_nodes - 1) % n_nodes;
        const int right = (i + 1) % n_nodes;
        tmp[std::size_t(i)] =
            (1.0 - kDiffuse) * diffused[std::size_t(i)] +
            0.5 * kDiffuse * (diffused[std::size_t(left)] + diffused[std::size_t(right)]);
      }
      diffused.swap(tmp);
    }
    // task B noise is drawn every step so the stream is identical across
    // coupling values
    for (int i = 0; i < n_nodes; ++i) tmp[std::size_t(i)] = rng.gaussian();
    if (t < 0) continue;
    for (int i = 0; i < n_nodes; ++i) {
      const double phase = double(i) / n_nodes;
      const double flow = kBase +
                          kAmp * std::sin(two_pi * (double(t) / kPeriod + phase)) +
                          diffused[std::size_t(i)];
      a[std::size_t(i) * length + t] = flow;
      b[std::size_t(i) * length + t] = kBBase - coupling * kBSlope * (flow - kBase) +
                                       (1.0 - coupling) * kBSigma * tmp[std::size_t(i)];
    }
  }

  SynthResult out;
  out.task_a = {"flow", Tensor::from_data({n_nodes, length}, std::move(a)), 5};
  out.task_b = {"speed", Tensor::from_data({n_nodes, length}, std::move(b)), 5};
  for (int i = 0; i < n_nodes; ++i) out.edges.emplace_back(i, (i + 1) % n_nodes);
  return out;
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path + "'");
  Manifest m;
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::string line;
  int row = 0;
  bool saw_edges = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("manifest '" + path + "' row " + std::to_string(row) +
                      ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "task") {
      const auto colon = value.find(':');
      if (colon == std::string::npos)
        throw DataError("manifest '" + path + "' row " + std::to_string(row) +
                        ": task entries are name:csv");
      m.tasks.emplace_back(value.substr(0, colon), resolve(value.substr(colon + 1)));
    } else if (key == "edges") {
      m.edges_path = resolve(value);
      saw_edges = true;
    } else if (key == "interval_minutes") {
      m.interval_minutes = std::stoi(value);
    } else if (key == "ratios") {
      const auto parts = split_line(value);
      if (parts.size() != 3)
        throw DataError("manifest '" + path + "': ratios need 3 values");
      for (int i = 0; i < 3; ++i) m.ratios[std::size_t(i)] = std::stod(parts[std::size_t(i)]);
    } else {
      throw DataError("manifest '" + path + "' row " + std::to_string(row) +
                      ": unknown key '" + key + "'");
    }
  }
  if (m.tasks.empty())
    throw DataError("manifest '" + path + "' names no tasks");
  if (!saw_edges)
    throw DataError("manifest '" + path + "' names no edge list");
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  for (const auto& [name, csv] : m.tasks) out << "task=" << name << ':' << csv << '\n';
  out << "edges=" << m.edges_path << '\n';
  out << "interval_minutes=" << m.interval_minutes << '\n';
  out << "ratios=" << format_double(m.ratios[0]) << ',' << format_double(m.ratios[1])
      << ',' << format_double(m.ratios[2]) << '\n';
}

LoadedData load_from_manifest(const Manifest& m) {
  LoadedData out;
  for (const auto& [name, csv] : m.tasks) {
    TaskDataset t = load_series_csv(csv, name);
    if (t.interval_minutes != m.interval_minutes)
      throw DataError("task '" + name + "' interval " +
                      std::to_string(t.interval_minutes) +
                      "min differs from manifest " +
                      std::to_string(m.interval_minutes) + "min");
    out.tasks.push_back(std::move(t));
  }
  out.n = out.tasks[0].series.extent(0);
  for (const auto& t : out.tasks)
    if (t.series.shape() != out.tasks[0].series.shape())
      throw DataError("task series shapes differ across the manifest");
  out.edges = load_edge_list_csv(m.edges_path);
  for (const auto& [s, d] : out.edges)
    if (s < 0 || s >= out.n || d < 0 || d >= out.n)
      throw DataError("edge (" + std::to_string(s) + ", " + std::to_string(d) +
                      ") out of range for " + std::to_string(out.n) + " nodes");
  return out;
}

}  // namespace dgstmtl
