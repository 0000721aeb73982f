#include "dgstmtl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "dgstmtl/kernels.hpp"

namespace dgstmtl {
namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

bool any_requires_grad(const std::vector<Tensor>& parents) {
  for (const auto& p : parents)
    if (p.requires_grad()) return true;
  return false;
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled() && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
}

// Decompose shape around an axis into [outer, extent, inner] for block copies.
struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r{1, std::size_t(s[std::size_t(axis)]), 1};
  for (int i = 0; i < axis; ++i) r.outer *= std::size_t(s[std::size_t(i)]);
  for (std::size_t i = std::size_t(axis) + 1; i < s.size(); ++i)
    r.inner *= std::size_t(s[i]);
  return r;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: expected 2-D operands, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree for shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  std::vector<double> out(std::size_t(m) * n);
  kernels::gemm(out.data(), a.values().data(), b.values().data(), m, k, n,
                false);
  auto an = a.node();
  auto bn = b.node();
  return make_op(
      {m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          kernels::gemm_abt(an->grad.data(), self.grad.data(),
                            bn->value.data(), m, n, k, true);
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          kernels::gemm_atb(bn->grad.data(), an->value.data(),
                            self.grad.data(), m, k, n, true);
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2)
    throw DimensionError("transpose: expected 2-D operand, got " +
                         shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_size(new_shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) +
                         " as " + shape_str(new_shape));
  auto an = a.node();
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op(std::move(new_shape), std::move(out), {a},
                 [an](TensorNode& self) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   kernels::axpy(1.0, self.grad.data(), an->grad.data(),
                                 self.grad.size());
                 });
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (int(perm.size()) != r)
    throw DimensionError("permute: order size " + std::to_string(perm.size()) +
                         " does not match rank of " + shape_str(a.shape()));
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r), 0);
  for (int i = 0; i < r; ++i) {
    const int p = perm[std::size_t(i)];
    if (p < 0 || p >= r || seen[std::size_t(p)])
      throw DimensionError("permute: invalid axis order");
    seen[std::size_t(p)] = true;
    out_shape[std::size_t(i)] = a.shape()[std::size_t(p)];
  }
  const auto in_strides = row_major_strides(a.shape());
  // Stride to step through the input as the output index advances per axis.
  std::vector<std::size_t> gather(static_cast<std::size_t>(r), 0);
  for (int i = 0; i < r; ++i)
    gather[std::size_t(i)] = in_strides[std::size_t(perm[std::size_t(i)])];

  const std::size_t total = a.size();
  std::vector<double> out(total);
  std::vector<int> idx(std::size_t(r), 0);
  const auto src = a.values();
  std::size_t src_off = 0;
  for (std::size_t pos = 0; pos < total; ++pos) {
    out[pos] = src[src_off];
    for (int ax = r - 1; ax >= 0; --ax) {
      idx[std::size_t(ax)]++;
      src_off += gather[std::size_t(ax)];
      if (idx[std::size_t(ax)] < out_shape[std::size_t(ax)]) break;
      src_off -= gather[std::size_t(ax)] * std::size_t(out_shape[std::size_t(ax)]);
      idx[std::size_t(ax)] = 0;
    }
  }
  auto an = a.node();
  return make_op(std::move(out_shape), std::move(out), {a},
                 [an, gather, r](TensorNode& self) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   std::vector<int> it(std::size_t(r), 0);
                   std::size_t src_off = 0;
                   const std::size_t total = self.grad.size();
                   for (std::size_t pos = 0; pos < total; ++pos) {
                     an->grad[src_off] += self.grad[pos];
                     for (int ax = r - 1; ax >= 0; --ax) {
                       it[std::size_t(ax)]++;
                       src_off += gather[std::size_t(ax)];
                       if (it[std::size_t(ax)] < self.shape[std::size_t(ax)]) break;
                       src_off -= gather[std::size_t(ax)] *
                                  std::size_t(self.shape[std::size_t(ax)]);
                       it[std::size_t(ax)] = 0;
                     }
                   }
                 });
}

Tensor slice(const Tensor& a, int axis, int start, int stop) {
  if (axis < 0 || axis >= a.rank())
    throw DimensionError("slice: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
  const int extent = a.extent(axis);
  if (start < 0 || stop > extent || start >= stop)
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(stop) + ") invalid for axis of extent " +
                         std::to_string(extent));
  Shape out_shape = a.shape();
  out_shape[std::size_t(axis)] = stop - start;
  const AxisSplit sp = split_at(a.shape(), axis);
  const std::size_t span = std::size_t(stop - start);
  std::vector<double> out(sp.outer * span * sp.inner);
  const auto src = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    const double* s = src.data() + (o * sp.extent + std::size_t(start)) * sp.inner;
    std::memcpy(out.data() + o * span * sp.inner, s,
                sizeof(double) * span * sp.inner);
  }
  auto an = a.node();
  return make_op(std::move(out_shape), std::move(out), {a},
                 [an, sp, span, start](TensorNode& self) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   for (std::size_t o = 0; o < sp.outer; ++o) {
                     double* d = an->grad.data() +
                                 (o * sp.extent + std::size_t(start)) * sp.inner;
                     kernels::axpy(1.0, self.grad.data() + o * span * sp.inner,
                                   d, span * sp.inner);
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw InputError("concat: no tensors given");
  const Shape& first = parts[0].shape();
  if (axis < 0 || axis >= int(first.size()))
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(first));
  int total_axis = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (s.size() != first.size())
      throw DimensionError("concat: rank mismatch at part " + std::to_string(i));
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (int(d) != axis && s[d] != first[d])
        throw DimensionError("concat: part " + std::to_string(i) + " shape " +
                             shape_str(s) + " incompatible with " +
                             shape_str(first));
    }
    total_axis += s[std::size_t(axis)];
  }
  Shape out_shape = first;
  out_shape[std::size_t(axis)] = total_axis;
  const AxisSplit sp = split_at(out_shape, axis);
  std::vector<double> out(shape_size(out_shape));
  std::size_t axis_off = 0;
  std::vector<std::size_t> offsets(parts.size());
  std::vector<std::size_t> spans(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t span = std::size_t(parts[i].extent(axis));
    offsets[i] = axis_off;
    spans[i] = span;
    const auto src = parts[i].values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::memcpy(out.data() + (o * sp.extent + axis_off) * sp.inner,
                  src.data() + o * span * sp.inner,
                  sizeof(double) * span * sp.inner);
    }
    axis_off += span;
  }
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_op(std::move(out_shape), std::move(out), parts,
                 [nodes, sp, offsets, spans](TensorNode& self) {
                   for (std::size_t i = 0; i < nodes.size(); ++i) {
                     if (!nodes[i]->requires_grad) continue;
                     nodes[i]->ensure_grad();
                     for (std::size_t o = 0; o < sp.outer; ++o) {
                       kernels::axpy(
                           1.0,
                           self.grad.data() + (o * sp.extent + offsets[i]) * sp.inner,
                           nodes[i]->grad.data() + o * spans[i] * sp.inner,
                           spans[i] * sp.inner);
                     }
                   }
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  kernels::add(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      kernels::axpy(1.0, self.grad.data(), an->grad.data(), self.grad.size());
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      kernels::axpy(1.0, self.grad.data(), bn->grad.data(), self.grad.size());
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  kernels::sub(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      kernels::axpy(1.0, self.grad.data(), an->grad.data(), self.grad.size());
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      kernels::axpy(-1.0, self.grad.data(), bn->grad.data(), self.grad.size());
    }
  });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise_mul");
  std::vector<double> out(a.size());
  kernels::mul(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode& self) {
    const std::size_t n = self.grad.size();
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

namespace {

// Per-axis input strides for broadcasting (stride 0 where extent is 1).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto st = row_major_strides(in);
  std::vector<std::size_t> r(out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    r[i] = in[i] == 1 && out[i] != 1 ? 0 : st[i];
  return r;
}

template <typename Body>
void for_each_broadcast(const Shape& out_shape,
                        const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Body&& body) {
  const int r = int(out_shape.size());
  std::vector<int> idx(std::size_t(r), 0);
  std::size_t oa = 0, ob = 0;
  const std::size_t total = shape_size(out_shape);
  for (std::size_t pos = 0; pos < total; ++pos) {
    body(pos, oa, ob);
    for (int ax = r - 1; ax >= 0; --ax) {
      idx[std::size_t(ax)]++;
      oa += sa[std::size_t(ax)];
      ob += sb[std::size_t(ax)];
      if (idx[std::size_t(ax)] < out_shape[std::size_t(ax)]) break;
      oa -= sa[std::size_t(ax)] * std::size_t(out_shape[std::size_t(ax)]);
      ob -= sb[std::size_t(ax)] * std::size_t(out_shape[std::size_t(ax)]);
      idx[std::size_t(ax)] = 0;
    }
  }
}

}  // namespace

Tensor broadcast_add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return add(a, b);
  if (a.rank() != b.rank())
    throw DimensionError("broadcast_add: rank mismatch between " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Shape out_shape(a.shape().size());
  for (std::size_t i = 0; i < out_shape.size(); ++i) {
    const int da = a.shape()[i], db = b.shape()[i];
    if (da != db && da != 1 && db != 1)
      throw DimensionError("broadcast_add: shapes " + shape_str(a.shape()) +
                           " and " + shape_str(b.shape()) +
                           " are not broadcast-compatible");
    out_shape[i] = std::max(da, db);
  }
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<double> out(shape_size(out_shape));
  {
    const auto va = a.values();
    const auto vb = b.values();
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t pos, std::size_t oa, std::size_t ob) {
                         out[pos] = va[oa] + vb[ob];
                       });
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(out_shape, std::move(out), {a, b},
                 [an, bn, out_shape, sa, sb](TensorNode& self) {
                   if (an->requires_grad) an->ensure_grad();
                   if (bn->requires_grad) bn->ensure_grad();
                   for_each_broadcast(
                       out_shape, sa, sb,
                       [&](std::size_t pos, std::size_t oa, std::size_t ob) {
                         if (an->requires_grad) an->grad[oa] += self.grad[pos];
                         if (bn->requires_grad) bn->grad[ob] += self.grad[pos];
                       });
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  kernels::scale(a.values().data(), c, out.data(), a.size());
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    kernels::axpy(c, self.grad.data(), an->grad.data(), self.grad.size());
  });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1)
    throw DimensionError("scale_by: scale tensor must have a single element, got " +
                         shape_str(s.shape()));
  const double c = s.values()[0];
  std::vector<double> out(a.size());
  kernels::scale(a.values().data(), c, out.data(), a.size());
  auto an = a.node();
  auto sn = s.node();
  return make_op(a.shape(), std::move(out), {a, s}, [an, sn, c](TensorNode& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      kernels::axpy(c, self.grad.data(), an->grad.data(), self.grad.size());
    }
    if (sn->requires_grad) {
      sn->ensure_grad();
      sn->grad[0] += kernels::dot(an->value.data(), self.grad.data(),
                                  self.grad.size());
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  kernels::relu(a.values().data(), out.data(), a.size());
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    kernels::relu_backward_acc(an->value.data(), self.grad.data(),
                               an->grad.data(), self.grad.size());
  });
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2)
    throw DimensionError("softmax_rows: expected 2-D input, got " +
                         shape_str(a.shape()));
  const auto va = a.values();
  for (double v : va) {
    if (!std::isfinite(v))
      throw NumericError("softmax_rows: non-finite input value");
  }
  const int p = a.extent(0), q = a.extent(1);
  std::vector<double> out(std::size_t(p) * q);
  for (int i = 0; i < p; ++i) {
    const double* row = va.data() + std::size_t(i) * q;
    double* orow = out.data() + std::size_t(i) * q;
    double mx = row[0];
    for (int j = 1; j < q; ++j) mx = std::max(mx, row[j]);
    for (int j = 0; j < q; ++j) orow[j] = std::exp(row[j] - mx);
    const double denom = kernels::sum(orow, std::size_t(q));
    for (int j = 0; j < q; ++j) orow[j] /= denom;
  }
  auto an = a.node();
  return make_op({p, q}, std::move(out), {a}, [an, p, q](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < p; ++i) {
      const double* y = self.value.data() + std::size_t(i) * q;
      const double* dy = self.grad.data() + std::size_t(i) * q;
      double* dx = an->grad.data() + std::size_t(i) * q;
      const double d = kernels::dot(dy, y, std::size_t(q));
      for (int j = 0; j < q; ++j) dx[j] += (dy[j] - d) * y[j];
    }
  });
}

Tensor max_over_axis(const Tensor& a, int axis) {
  if (axis < 0 || axis >= a.rank())
    throw DimensionError("max_over_axis: axis " + std::to_string(axis) +
                         " out of range for " + shape_str(a.shape()));
  if (a.rank() == 1)
    throw DimensionError("max_over_axis: reducing a 1-D tensor to rank 0 is not supported");
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[std::size_t(i)]);
  const AxisSplit sp = split_at(a.shape(), axis);
  std::vector<double> out(sp.outer * sp.inner);
  std::vector<std::size_t> argmax(sp.outer * sp.inner);
  const auto src = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      std::size_t best = base;
      double bv = src[base];
      for (std::size_t e = 1; e < sp.extent; ++e) {
        const std::size_t off = base + e * sp.inner;
        if (src[off] > bv) {
          bv = src[off];
          best = off;
        }
      }
      out[o * sp.inner + in] = bv;
      argmax[o * sp.inner + in] = best;
    }
  }
  auto an = a.node();
  return make_op(std::move(out_shape), std::move(out), {a},
                 [an, argmax](TensorNode& self) {
                   if (!an->requires_grad) return;
                   an->ensure_grad();
                   for (std::size_t i = 0; i < argmax.size(); ++i)
                     an->grad[argmax[i]] += self.grad[i];
                 });
}

Tensor sum_all(const Tensor& a) {
  const double s = kernels::sum(a.values().data(), a.size());
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (double& d : an->grad) d += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / double(a.size());
  const double s = kernels::sum(a.values().data(), a.size()) * inv;
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an, inv](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& d : an->grad) d += g;
  });
}

Tensor l1_norm(const Tensor& a) {
  const auto va = a.values();
  double s = 0.0;
  for (double v : va) s += std::abs(v);
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < an->value.size(); ++i) {
      const double v = an->value[i];
      if (v > 0.0)
        an->grad[i] += g;
      else if (v < 0.0)
        an->grad[i] -= g;
    }
  });
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target, double alpha,
                 double delta) {
  require_same_shape(pred, target, "smooth_l1");
  if (alpha <= 0.0 || delta <= 0.0)
    throw ConfigError("smooth_l1: alpha and delta must be positive");
  const auto vp = pred.values();
  const auto vt = target.values();
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double e = vp[i] - vt[i];
    const double ae = std::abs(e);
    out[i] = ae < delta ? 0.5 * alpha * e * e : alpha * (ae - 0.5);
  }
  auto pn = pred.node();
  auto tn = target.node();
  return make_op(pred.shape(), std::move(out), {pred, target},
                 [pn, tn, alpha, delta](TensorNode& self) {
                   if (pn->requires_grad) pn->ensure_grad();
                   if (tn->requires_grad) tn->ensure_grad();
                   const std::size_t n = self.grad.size();
                   for (std::size_t i = 0; i < n; ++i) {
                     const double e = pn->value[i] - tn->value[i];
                     const double de =
                         std::abs(e) < delta
                             ? alpha * e
                             : (e > 0.0 ? alpha : (e < 0.0 ? -alpha : 0.0));
                     const double g = self.grad[i] * de;
                     if (pn->requires_grad) pn->grad[i] += g;
                     if (tn->requires_grad) tn->grad[i] -= g;
                   }
                 });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (b.rank() != 1)
    throw DimensionError("affine: bias must be 1-D, got " + shape_str(b.shape()));
  Tensor y = matmul(x, w);
  return broadcast_add(y, reshape(b, {1, b.extent(0)}));
}

}  // namespace dgstmtl
