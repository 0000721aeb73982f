#include "dgstmtl/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace dgstmtl {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= std::size_t(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = int(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * std::size_t(s[i + 1]);
  return st;
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& s) {
  for (int d : s) {
    if (d <= 0)
      throw DimensionError("non-positive extent in shape " + shape_str(s));
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<detail::TensorNode>();
  n->value.assign(shape_size(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  check_shape(shape);
  auto n = std::make_shared<detail::TensorNode>();
  n->value.assign(shape_size(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  auto n = std::make_shared<detail::TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return int(node_->shape.size()); }
std::size_t Tensor::size() const { return node_->value.size(); }

int Tensor::extent(int axis) const {
  if (axis < 0 || axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape()));
  return node_->shape[std::size_t(axis)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) {
  if (!node_->parents.empty())
    throw InputError("set_requires_grad is only valid on leaf tensors");
  node_->requires_grad = rg;
}

std::span<const double> Tensor::values() const {
  return {node_->value.data(), node_->value.size()};
}

std::span<double> Tensor::values_mut() {
  return {node_->value.data(), node_->value.size()};
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return {node_->grad.data(), node_->grad.size()};
}

std::span<double> Tensor::grad_mut() {
  node_->ensure_grad();
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::backward() const {
  if (!node_ || node_->size() != 1)
    throw InputError("backward() requires a scalar tensor, got shape " +
                     (node_ ? shape_str(node_->shape) : std::string("<null>")));
  using detail::TensorNode;

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second)
        stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size())
      n->backward_fn(*n);
  }
}

double Tensor::item() const {
  if (size() != 1)
    throw InputError("item() requires a scalar tensor, got shape " +
                     shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (int(idx.size()) != rank())
    throw DimensionError("index rank " + std::to_string(idx.size()) +
                         " does not match tensor shape " + shape_str(shape()));
  const auto strides = row_major_strides(shape());
  std::size_t off = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= node_->shape[std::size_t(axis)])
      throw InputError("index out of range at axis " + std::to_string(axis));
    off += std::size_t(i) * strides[std::size_t(axis)];
    ++axis;
  }
  return node_->value[off];
}

Tensor Tensor::detach() const {
  return from_data(node_->shape, node_->value, false);
}

}  // namespace dgstmtl
