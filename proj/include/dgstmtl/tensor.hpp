#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgstmtl/errors.hpp"

// Dense row-major double tensors with reverse-mode differentiation. Each op
// records its parents and a backward closure on the result node; backward()
// runs the closures in reverse topological order and accumulates into the
// leaves' grad buffers. Ops never mutate their inputs; parameters are leaves
// mutated only between steps (by the optimizer or by test fixtures).
namespace dgstmtl {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<std::size_t> row_major_strides(const Shape& s);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

bool grad_enabled();

// Disables graph recording in scope (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  std::size_t size() const;
  int extent(int axis) const;

  bool requires_grad() const;
  void set_requires_grad(bool rg);  // leaves only

  std::span<const double> values() const;
  std::span<double> values_mut();  // for leaves/staging; does not touch the tape

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();  // allocates zeros if absent
  void zero_grad();

  // Reverse pass from a scalar (size-1) tensor.
  void backward() const;

  double item() const;
  double at(std::initializer_list<int> idx) const;

  // Value copy detached from the graph.
  Tensor detach() const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace dgstmtl
