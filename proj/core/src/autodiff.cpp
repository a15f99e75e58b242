#include "dminter/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "dminter/error.hpp"

namespace dminter {

namespace {

thread_local bool g_grad_enabled = true;

struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape.at(axis), 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[n,m] += A[n,k] * B[k,m]
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c.data() + i * m;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n,m] += A[n,k] * B[m,k]^T
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,m] += A[n,k]^T * B[n,m]
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t n, std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data() + i * k;
    const double* brow = b.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

enum class Broadcast { kSame, kRow, kScalar };

Broadcast classify_broadcast(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  const bool row_shape = (b.rank() == 1 && b.dim(0) == a.cols()) ||
                         (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.cols());
  if (row_shape && a.size() % a.cols() == 0) return Broadcast::kRow;
  throw ConfigError(std::string(op) + ": cannot broadcast " + shape_to_string(b.shape()) +
                    " onto " + shape_to_string(a.shape()));
}

Tensor& grad_slot(std::span<Tensor*> grads, std::size_t i) { return *grads[i]; }

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.mutable_values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void require_finite(const Tensor& t, const char* message) {
  if (!t.all_finite()) throw NumericError(message);
}

}  // namespace

Var::Var() : node_(std::make_shared<Node>()) {}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

const Tensor& Var::value() const { return node_->value; }
bool Var::requires_grad() const { return node_->requires_grad; }
bool Var::is_leaf() const { return node_->leaf; }

Tensor& Var::mutable_leaf_value() {
  if (!node_->leaf) throw ConfigError("mutable_leaf_value on interior graph node");
  return node_->value;
}

Var make_var(Tensor value, std::vector<Var> inputs, Node::BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->leaf = false;
  if (g_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Gradients::of(const Var& param) const {
  auto it = grads_.find(param.node());
  if (it == grads_.end()) return Tensor(param.shape(), 0.0);
  return it->second;
}

bool Gradients::reached(const Var& param) const { return grads_.count(param.node()) != 0; }

Gradients backward_sweep(const Var& root) {
  if (root.value().size() != 1) {
    throw ConfigError("backward_sweep: root must be a scalar, got shape " +
                      shape_to_string(root.shape()));
  }
  Gradients result;
  if (!root.requires_grad()) return result;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<const Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Node* child = node->inputs[next++].node();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, Tensor> grads;
  grads.reserve(order.size());
  grads.emplace(root.node(), Tensor(root.shape(), 1.0));
  std::vector<Tensor*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (node->leaf) continue;
    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Node* in = node->inputs[i].node();
      if (!in->requires_grad) continue;
      auto [slot, inserted] = grads.try_emplace(in, in->value.shape(), 0.0);
      slots[i] = &slot->second;
    }
    // `found` may be invalidated by the inserts above; look it up again.
    const Tensor& upstream = grads.at(node);
    node->backward(*node, upstream, slots);
    if (node != root.node()) grads.erase(node);
  }
  for (auto& [node, g] : grads) {
    if (node->leaf) result.grads_.emplace(node, std::move(g));
  }
  return result;
}

namespace ops {

Var matmul(const Var& a, const Var& b, bool transpose_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) throw ConfigError("matmul: operands must be rank 2");
  const std::size_t n = av.dim(0), k = av.dim(1);
  const std::size_t bk = transpose_b ? bv.dim(1) : bv.dim(0);
  const std::size_t m = transpose_b ? bv.dim(0) : bv.dim(1);
  if (bk != k) {
    throw ConfigError("matmul: inner dimensions differ " + shape_to_string(av.shape()) + " x " +
                      shape_to_string(bv.shape()) + (transpose_b ? "^T" : ""));
  }
  Tensor out({n, m}, 0.0);
  if (transpose_b) {
    gemm_nt(av.values(), bv.values(), out.mutable_values(), n, k, m);
  } else {
    gemm_nn(av.values(), bv.values(), out.mutable_values(), n, k, m);
  }
  return make_var(std::move(out), {a, b},
                  [n, k, m, transpose_b](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
                    const Tensor& av = self.inputs[0].value();
                    const Tensor& bv = self.inputs[1].value();
                    if (grads[0]) {
                      // dA = g B^T (or g B when B was transposed)
                      if (transpose_b) {
                        gemm_nn(g.values(), bv.values(), grad_slot(grads, 0).mutable_values(), n, m, k);
                      } else {
                        gemm_nt(g.values(), bv.values(), grad_slot(grads, 0).mutable_values(), n, m, k);
                      }
                    }
                    if (grads[1]) {
                      if (transpose_b) {
                        // dB[m,k] = g^T A
                        gemm_tn(g.values(), av.values(), grad_slot(grads, 1).mutable_values(), n, m, k);
                      } else {
                        // dB[k,m] = A^T g
                        gemm_tn(av.values(), g.values(), grad_slot(grads, 1).mutable_values(), n, k, m);
                      }
                    }
                  });
}

Var add(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = classify_broadcast(av, bv, "add");
  Tensor out = av;
  auto o = out.mutable_values();
  auto bs = bv.values();
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] += mode == Broadcast::kSame ? bs[i] : mode == Broadcast::kRow ? bs[i % cols] : bs[0];
  }
  return make_var(std::move(out), {a, b},
                  [mode, cols](const Node&, const Tensor& g, std::span<Tensor*> grads) {
                    if (grads[0]) accumulate(*grads[0], g);
                    if (grads[1]) {
                      auto db = grads[1]->mutable_values();
                      auto gs = g.values();
                      for (std::size_t i = 0; i < gs.size(); ++i) {
                        db[mode == Broadcast::kSame ? i : mode == Broadcast::kRow ? i % cols : 0] += gs[i];
                      }
                    }
                  });
}

Var mul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = classify_broadcast(av, bv, "mul");
  const std::size_t cols = av.cols();
  auto index = [mode, cols](std::size_t i) {
    return mode == Broadcast::kSame ? i : mode == Broadcast::kRow ? i % cols : std::size_t{0};
  };
  Tensor out = av;
  auto o = out.mutable_values();
  auto bs = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bs[index(i)];
  return make_var(std::move(out), {a, b},
                  [index](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
                    auto as = self.inputs[0].value().values();
                    auto bs = self.inputs[1].value().values();
                    auto gs = g.values();
                    if (grads[0]) {
                      auto da = grads[0]->mutable_values();
                      for (std::size_t i = 0; i < gs.size(); ++i) da[i] += gs[i] * bs[index(i)];
                    }
                    if (grads[1]) {
                      auto db = grads[1]->mutable_values();
                      for (std::size_t i = 0; i < gs.size(); ++i) db[index(i)] += gs[i] * as[i];
                    }
                  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.mutable_values()) v = v > 0.0 ? v : 0.0;
  return make_var(std::move(out), {x}, [](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
    auto xs = self.inputs[0].value().values();
    auto gs = g.values();
    auto dx = grads[0]->mutable_values();
    for (std::size_t i = 0; i < gs.size(); ++i) {
      if (xs[i] > 0.0) dx[i] += gs[i];
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  const std::size_t rows = xv.size() / d;
  if (gain.value().size() != d || bias.value().size() != d) {
    throw ConfigError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  Tensor out(xv.shape(), 0.0);
  // Saved per-row statistics for the backward pass.
  auto normalized = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto xs = xv.values();
  auto gs = gain.value().values();
  auto bs = bias.value().values();
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (row[j] - mu) * is;
      (*normalized)[r * d + j] = xhat;
      o[r * d + j] = xhat * gs[j] + bs[j];
    }
  }
  return make_var(std::move(out), {x, gain, bias},
                  [normalized, inv_std, d, rows](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
                    auto gamma = self.inputs[1].value().values();
                    auto up = g.values();
                    const auto& xhat = *normalized;
                    if (grads[1]) {
                      auto dg = grads[1]->mutable_values();
                      for (std::size_t i = 0; i < up.size(); ++i) dg[i % d] += up[i] * xhat[i];
                    }
                    if (grads[2]) {
                      auto db = grads[2]->mutable_values();
                      for (std::size_t i = 0; i < up.size(); ++i) db[i % d] += up[i];
                    }
                    if (grads[0]) {
                      auto dx = grads[0]->mutable_values();
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double sum_dy = 0.0, sum_dy_xhat = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dy = up[r * d + j] * gamma[j];
                          sum_dy += dy;
                          sum_dy_xhat += dy * xhat[r * d + j];
                        }
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dy = up[r * d + j] * gamma[j];
                          dx[r * d + j] += (*inv_std)[r] *
                                           (dy - inv_d * sum_dy - xhat[r * d + j] * inv_d * sum_dy_xhat);
                        }
                      }
                    }
                  });
}

Var embedding(const Var& table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ConfigError("embedding: table must be rank 2");
  if (ids.empty()) throw ConfigError("embedding: empty id list");
  const std::size_t d = tv.dim(1);
  Tensor out({ids.size(), d}, 0.0);
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.dim(0)) {
      throw ConfigError("embedding: id " + std::to_string(ids[r]) + " out of range " +
                        std::to_string(tv.dim(0)));
    }
    auto src = tv.row_span(ids[r]);
    std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return make_var(std::move(out), {table},
                  [saved = std::move(saved), d](const Node&, const Tensor& g, std::span<Tensor*> grads) {
                    auto dt = grads[0]->mutable_values();
                    auto gs = g.values();
                    for (std::size_t r = 0; r < saved.size(); ++r) {
                      for (std::size_t j = 0; j < d; ++j) dt[saved[r] * d + j] += gs[r * d + j];
                    }
                  });
}

Var mean(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw ConfigError("mean: axis out of range");
  const AxisSplit s = split_axis(xv.shape(), axis);
  Shape out_shape = xv.shape();
  out_shape[axis] = 1;
  Tensor out(out_shape, 0.0);
  auto xs = xv.values();
  auto o = out.mutable_values();
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t a = 0; a < s.outer; ++a) {
    for (std::size_t i = 0; i < s.extent; ++i) {
      for (std::size_t b = 0; b < s.inner; ++b) o[a * s.inner + b] += xs[(a * s.extent + i) * s.inner + b];
    }
  }
  for (auto& v : o) v *= inv;
  return make_var(std::move(out), {x}, [s, inv](const Node&, const Tensor& g, std::span<Tensor*> grads) {
    auto dx = grads[0]->mutable_values();
    auto gs = g.values();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t i = 0; i < s.extent; ++i) {
        for (std::size_t b = 0; b < s.inner; ++b) dx[(a * s.extent + i) * s.inner + b] += gs[a * s.inner + b] * inv;
      }
    }
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ConfigError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ConfigError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ConfigError("concat: extent mismatch " + shape_to_string(s) + " vs " + shape_to_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_axis(out_shape, axis);
  Tensor out(out_shape, 0.0);
  auto o = out.mutable_values();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t extent = p.shape()[axis];
    auto ps = p.value().values();
    for (std::size_t a = 0; a < total.outer; ++a) {
      const double* src = ps.data() + a * extent * total.inner;
      double* dst = o.data() + (a * total.extent + offset) * total.inner;
      std::copy(src, src + extent * total.inner, dst);
    }
    offset += extent;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_var(std::move(out), std::move(inputs),
                  [total, offsets, axis](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
                    auto gs = g.values();
                    for (std::size_t p = 0; p < grads.size(); ++p) {
                      if (!grads[p]) continue;
                      const std::size_t extent = self.inputs[p].shape()[axis];
                      auto dp = grads[p]->mutable_values();
                      for (std::size_t a = 0; a < total.outer; ++a) {
                        const double* src = gs.data() + (a * total.extent + offsets[p]) * total.inner;
                        double* dst = dp.data() + a * extent * total.inner;
                        for (std::size_t i = 0; i < extent * total.inner; ++i) dst[i] += src[i];
                      }
                    }
                  });
}

Var softmax(const Var& logits, std::size_t axis) {
  Tensor out = dminter::softmax(logits.value(), axis);
  const AxisSplit s = split_axis(out.shape(), axis);
  return make_var(std::move(out), {logits}, [s](const Node& self, const Tensor& g, std::span<Tensor*> grads) {
    auto p = self.value.values();
    auto gs = g.values();
    auto dx = grads[0]->mutable_values();
    for (std::size_t a = 0; a < s.outer; ++a) {
      for (std::size_t b = 0; b < s.inner; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < s.extent; ++i) {
          const std::size_t idx = (a * s.extent + i) * s.inner + b;
          dot += gs[idx] * p[idx];
        }
        for (std::size_t i = 0; i < s.extent; ++i) {
          const std::size_t idx = (a * s.extent + i) * s.inner + b;
          dx[idx] += p[idx] * (gs[idx] - dot);
        }
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  const Tensor& lv = logits.value();
  require_finite(lv, "non-finite logits");
  const std::size_t cols = lv.cols();
  const std::size_t rows = lv.size() / cols;
  if (targets.size() != rows) {
    throw ConfigError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                      std::to_string(rows) + " rows");
  }
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  Tensor out({rows}, 0.0);
  auto ls = lv.values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) {
      throw ConfigError("cross_entropy: target " + std::to_string(targets[r]) + " out of range " +
                        std::to_string(cols));
    }
    const double* row = ls.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < cols; ++j) (*probs)[r * cols + j] = std::exp(row[j] - mx - log_z);
    out[r] = -(row[targets[r]] - mx - log_z);
  }
  std::vector<std::size_t> saved(targets.begin(), targets.end());
  return make_var(std::move(out), {logits},
                  [probs, saved = std::move(saved), cols](const Node&, const Tensor& g, std::span<Tensor*> grads) {
                    auto dx = grads[0]->mutable_values();
                    auto gs = g.values();
                    for (std::size_t r = 0; r < saved.size(); ++r) {
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double indicator = j == saved[r] ? 1.0 : 0.0;
                        dx[r * cols + j] += gs[r] * ((*probs)[r * cols + j] - indicator);
                      }
                    }
                  });
}

Var scale(const Var& x, double factor) { return mul(x, Var::constant(Tensor::scalar(factor))); }

Var sum(const Var& x, std::size_t axis) {
  return scale(mean(x, axis), static_cast<double>(x.shape().at(axis)));
}

Var mean_all(const Var& x) {
  Var flat = x;
  for (std::size_t axis = 0; axis < x.shape().size(); ++axis) flat = mean(flat, axis);
  return flat;
}

}  // namespace ops

Tensor softmax(const Tensor& logits, std::size_t axis) {
  if (axis >= logits.rank()) throw ConfigError("softmax: axis out of range");
  require_finite(logits, "non-finite logits");
  const AxisSplit s = split_axis(logits.shape(), axis);
  Tensor out(logits.shape(), 0.0);
  auto xs = logits.values();
  auto o = out.mutable_values();
  for (std::size_t a = 0; a < s.outer; ++a) {
    for (std::size_t b = 0; b < s.inner; ++b) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < s.extent; ++i) mx = std::max(mx, xs[(a * s.extent + i) * s.inner + b]);
      double z = 0.0;
      for (std::size_t i = 0; i < s.extent; ++i) {
        const std::size_t idx = (a * s.extent + i) * s.inner + b;
        o[idx] = std::exp(xs[idx] - mx);
        z += o[idx];
      }
      for (std::size_t i = 0; i < s.extent; ++i) o[(a * s.extent + i) * s.inner + b] /= z;
    }
  }
  return out;
}

double cross_entropy_from_logits(const Tensor& logits, std::size_t target_index) {
  if (target_index >= logits.cols()) {
    throw ConfigError("cross_entropy_from_logits: target " + std::to_string(target_index) +
                      " out of range " + std::to_string(logits.cols()));
  }
  require_finite(logits, "non-finite logits");
  auto row = logits.row_span(0);
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double v : row) z += std::exp(v - mx);
  return -(row[target_index] - mx - std::log(z));
}

}  // namespace dminter
