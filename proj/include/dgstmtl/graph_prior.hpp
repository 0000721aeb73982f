#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

enum class PriorLayout { P1, P2, P3, P4 };
enum class CorrelationMode { abs, signed_ };

const char* layout_name(PriorLayout p);
PriorLayout layout_from_name(const std::string& s);
const char* correlation_mode_name(CorrelationMode m);
CorrelationMode correlation_mode_from_name(const std::string& s);

// The three binary building blocks of the prior: physical connectivity,
// temporal self-connection (identity) and thresholded Pearson similarity.
struct BasicMatrices {
  Tensor a_s;
  Tensor a_t;
  Tensor a_st;
  double threshold = 0.0;
};

// 3N x 3N block prior over m = 3 consecutive time steps.
struct GraphPrior {
  PriorLayout layout = PriorLayout::P1;
  Tensor a_p;
  int n = 0;
  int m = 3;
};

Tensor identity_matrix(int n);

// Symmetric 0/1 matrix with zero diagonal; an entry is set iff the pair is
// listed in either direction. Indices outside [0, n) are rejected.
Tensor build_physical(const std::vector<std::pair<int, int>>& edges, int n);

struct StCorrelationResult {
  Tensor matrix;
  std::vector<int> constant_rows;  // rows treated as correlation-free
};

// Entry (i, j) = 1 iff i != j and the Pearson coefficient between rows i and j
// of `series` (N x L) clears the threshold (|r| in abs mode, r in signed mode).
// Constant rows produce no edges and are reported instead of failing.
StCorrelationResult build_st_correlation(const Tensor& series, double threshold,
                                         CorrelationMode mode = CorrelationMode::abs);

// Elementwise OR of 0/1 matrices (per-task A_ST combined across tasks).
Tensor or_combine(const std::vector<Tensor>& mats);

// Block assembly. Every layout has A_S on the diagonal blocks and zeros at
// the non-adjacent (1,3)/(3,1) blocks; the adjacent off-diagonal blocks hold
//   P1: A_T  at (1,2),(2,1) and A_ST at (2,3),(3,2)
//   P2: A_ST at (1,2),(2,1) and A_T  at (2,3),(3,2)
//   P3: A_T  at all four
//   P4: A_ST at all four
GraphPrior assemble_prior(const BasicMatrices& b, PriorLayout layout);

// Edge-list CSV with header "src,dst".
std::vector<std::pair<int, int>> load_edge_list_csv(const std::string& path);
void write_edge_list_csv(const std::string& path,
                         const std::vector<std::pair<int, int>>& edges);
void write_matrix_csv(const std::string& path, const Tensor& matrix);

}  // namespace dgstmtl
