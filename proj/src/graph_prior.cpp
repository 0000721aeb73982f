#include "dgstmtl/graph_prior.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dgstmtl/kernels.hpp"

namespace dgstmtl {

const char* layout_name(PriorLayout p) {
  switch (p) {
    case PriorLayout::P1:
      return "P1";
    case PriorLayout::P2:
      return "P2";
    case PriorLayout::P3:
      return "P3";
    case PriorLayout::P4:
      return "P4";
  }
  return "?";
}

PriorLayout layout_from_name(const std::string& s) {
  if (s == "P1" || s == "p1") return PriorLayout::P1;
  if (s == "P2" || s == "p2") return PriorLayout::P2;
  if (s == "P3" || s == "p3") return PriorLayout::P3;
  if (s == "P4" || s == "p4") return PriorLayout::P4;
  throw ConfigError("unknown prior layout '" + s + "' (expected P1..P4)");
}

const char* correlation_mode_name(CorrelationMode m) {
  return m == CorrelationMode::abs ? "abs" : "signed";
}

CorrelationMode correlation_mode_from_name(const std::string& s) {
  if (s == "abs") return CorrelationMode::abs;
  if (s == "signed") return CorrelationMode::signed_;
  throw ConfigError("unknown correlation mode '" + s + "' (expected abs|signed)");
}

Tensor identity_matrix(int n) {
  Tensor t = Tensor::zeros({n, n});
  auto v = t.values_mut();
  for (int i = 0; i < n; ++i) v[std::size_t(i) * n + i] = 1.0;
  return t;
}

Tensor build_physical(const std::vector<std::pair<int, int>>& edges, int n) {
  if (n <= 0) throw InputError("build_physical: node count must be positive");
  Tensor t = Tensor::zeros({n, n});
  auto v = t.values_mut();
  for (const auto& [src, dst] : edges) {
    if (src < 0 || src >= n || dst < 0 || dst >= n)
      throw InputError("build_physical: edge (" + std::to_string(src) + ", " +
                       std::to_string(dst) + ") out of range for " +
                       std::to_string(n) + " nodes");
    if (src == dst) continue;  // diagonal stays zero
    v[std::size_t(src) * n + dst] = 1.0;
    v[std::size_t(dst) * n + src] = 1.0;
  }
  return t;
}

StCorrelationResult build_st_correlation(const Tensor& series, double threshold,
                                         CorrelationMode mode) {
  if (series.rank() != 2)
    throw DimensionError("build_st_correlation: expected N x L series, got " +
                         shape_str(series.shape()));
  const int n = series.extent(0);
  const int len = series.extent(1);
  if (len < 3)
    throw InputError("build_st_correlation: need at least 3 columns, got " +
                     std::to_string(len));

  const auto src = series.values();
  std::vector<double> centered(std::size_t(n) * len);
  std::vector<double> sigma(static_cast<std::size_t>(n), 0.0);
  StCorrelationResult result;
  for (int i = 0; i < n; ++i) {
    const double* row = src.data() + std::size_t(i) * len;
    double* crow = centered.data() + std::size_t(i) * len;
    const double mean = kernels::sum(row, std::size_t(len)) / len;
    for (int j = 0; j < len; ++j) crow[j] = row[j] - mean;
    const double ss = kernels::dot(crow, crow, std::size_t(len));
    sigma[std::size_t(i)] = std::sqrt(ss);
    if (ss == 0.0) result.constant_rows.push_back(i);
  }

  result.matrix = Tensor::zeros({n, n});
  auto out = result.matrix.values_mut();
  for (int i = 0; i < n; ++i) {
    if (sigma[std::size_t(i)] == 0.0) continue;
    for (int j = i + 1; j < n; ++j) {
      if (sigma[std::size_t(j)] == 0.0) continue;
      const double cov =
          kernels::dot(centered.data() + std::size_t(i) * len,
                       centered.data() + std::size_t(j) * len, std::size_t(len));
      const double r = cov / (sigma[std::size_t(i)] * sigma[std::size_t(j)]);
      const double stat = mode == CorrelationMode::abs ? std::abs(r) : r;
      if (stat >= threshold) {
        out[std::size_t(i) * n + j] = 1.0;
        out[std::size_t(j) * n + i] = 1.0;
      }
    }
  }
  return result;
}

Tensor or_combine(const std::vector<Tensor>& mats) {
  if (mats.empty()) throw InputError("or_combine: no matrices given");
  Tensor out = Tensor::zeros(mats[0].shape());
  auto v = out.values_mut();
  for (const auto& m : mats) {
    if (m.shape() != mats[0].shape())
      throw DimensionError("or_combine: shape mismatch between " +
                           shape_str(m.shape()) + " and " +
                           shape_str(mats[0].shape()));
    const auto mv = m.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (mv[i] != 0.0) v[i] = 1.0;
  }
  return out;
}

GraphPrior assemble_prior(const BasicMatrices& b, PriorLayout layout) {
  const Shape& s = b.a_s.shape();
  if (s.size() != 2 || s[0] != s[1])
    throw DimensionError("assemble_prior: A_S must be square, got " +
                         shape_str(s));
  if (b.a_t.shape() != s || b.a_st.shape() != s)
    throw DimensionError("assemble_prior: mismatched block shapes " +
                         shape_str(s) + ", " + shape_str(b.a_t.shape()) + ", " +
                         shape_str(b.a_st.shape()));
  const int n = s[0];
  constexpr int m = 3;

  const Tensor* blocks[m][m] = {};
  for (int i = 0; i < m; ++i) blocks[i][i] = &b.a_s;
  const Tensor* first = nullptr;   // (1,2)/(2,1) blocks
  const Tensor* second = nullptr;  // (2,3)/(3,2) blocks
  switch (layout) {
    case PriorLayout::P1:
      first = &b.a_t;
      second = &b.a_st;
      break;
    case PriorLayout::P2:
      first = &b.a_st;
      second = &b.a_t;
      break;
    case PriorLayout::P3:
      first = second = &b.a_t;
      break;
    case PriorLayout::P4:
      first = second = &b.a_st;
      break;
  }
  blocks[0][1] = blocks[1][0] = first;
  blocks[1][2] = blocks[2][1] = second;

  GraphPrior prior;
  prior.layout = layout;
  prior.n = n;
  prior.m = m;
  prior.a_p = Tensor::zeros({m * n, m * n});
  auto out = prior.a_p.values_mut();
  const std::size_t row_len = std::size_t(m) * n;
  for (int bi = 0; bi < m; ++bi) {
    for (int bj = 0; bj < m; ++bj) {
      if (!blocks[bi][bj]) continue;
      const auto bv = blocks[bi][bj]->values();
      for (int r = 0; r < n; ++r) {
        double* dst = out.data() + (std::size_t(bi) * n + r) * row_len +
                      std::size_t(bj) * n;
        const double* srcrow = bv.data() + std::size_t(r) * n;
        for (int c = 0; c < n; ++c) dst[c] = srcrow[c];
      }
    }
  }
  return prior;
}

std::vector<std::pair<int, int>> load_edge_list_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("edge list '" + path + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst")
    throw DataError("edge list '" + path + "': expected header 'src,dst', got '" +
                    line + "'");
  std::vector<std::pair<int, int>> edges;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw DataError("edge list '" + path + "': row " + std::to_string(row) +
                      " has no comma");
    try {
      edges.emplace_back(std::stoi(line.substr(0, comma)),
                         std::stoi(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw DataError("edge list '" + path + "': row " + std::to_string(row) +
                      " is not a pair of integers");
    }
  }
  return edges;
}

void write_edge_list_csv(const std::string& path,
                         const std::vector<std::pair<int, int>>& edges) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write edge list '" + path + "'");
  out << "src,dst\n";
  for (const auto& [s, d] : edges) out << s << ',' << d << '\n';
}

void write_matrix_csv(const std::string& path, const Tensor& matrix) {
  if (matrix.rank() != 2)
    throw DimensionError("write_matrix_csv: expected a matrix, got " +
                         shape_str(matrix.shape()));
  std::ofstream out(path);
  if (!out) throw DataError("cannot write matrix csv '" + path + "'");
  char buf[32];
  const int rows = matrix.extent(0), cols = matrix.extent(1);
  const auto v = matrix.values();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", v[std::size_t(i) * cols + j]);
      out << buf << (j + 1 == cols ? '\n' : ',');
    }
  }
}

}  // namespace dgstmtl
