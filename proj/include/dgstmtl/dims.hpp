#pragma once

#include <string>

#include "dgstmtl/errors.hpp"

namespace dgstmtl {

// Problem dimensions shared across the network.
//   n        node count
//   t        history length (12 by default)
//   k        task count
//   c        input channels per task
//   c_prime  hidden channel count
//   m        time steps covered by one synchronous adjacency block
//   d        projection width of the dynamic-matrix unit (divisible by m)
struct Dims {
  int n = 0;
  int t = 12;
  int k = 0;
  int c = 1;
  int c_prime = 64;
  int m = 3;
  int d = 48;

  int d_prime() const { return d / m; }
  int block_rows() const { return m * n; }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ConfigError(std::string("Dims: ") + name + " must be positive");
    };
    positive(n, "n");
    positive(t, "t");
    positive(k, "k");
    positive(c, "c");
    positive(c_prime, "c_prime");
    positive(m, "m");
    positive(d, "d");
    if (d % m != 0)
      throw ConfigError("Dims: d = " + std::to_string(d) +
                        " must be divisible by m = " + std::to_string(m));
    if (t % m != 0)
      throw ConfigError("Dims: t = " + std::to_string(t) +
                        " must be divisible by m = " + std::to_string(m));
  }
};

}  // namespace dgstmtl
