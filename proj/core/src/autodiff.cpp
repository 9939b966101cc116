#include "gnnr/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "gnnr/errors.hpp"

namespace gnnr {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return push(Node{std::move(value), {}, false, {}}); }

Var Tape::parameter(Tensor value) { return push(Node{std::move(value), {}, true, {}}); }

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const auto& p : parents) {
    if (p.tape_ != this) throw ContractError("tape: operand recorded on a different tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  return push(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss is not on this tape");
  const Shape s = nodes_[loss.id_].value.shape();
  if (s.rows != 1 || s.cols != 1) {
    throw ShapeError("backward: loss must be scalar, got " + to_string(s));
  }
  if (!nodes_[loss.id_].requires_grad) return;
  accumulate(loss, Tensor::scalar(1.0));
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

void Tape::zero_grad() {
  for (auto& node : nodes_) node.grad = Tensor();
}

Tensor Tape::grad(const Var& v) const {
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return Tensor(node.value.rows(), node.value.cols());
  return node.grad;
}

Tensor* Tape::grad_buffer(const Var& v) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty() && node.value.size() > 0) {
    node.grad = Tensor(node.value.rows(), node.value.cols());
  }
  return &node.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (Tensor* buf = grad_buffer(v)) *buf += g;
}

namespace {

void require_rows(const char* op, const Var& a, const Var& b) {
  if (a.shape().rows != b.shape().rows) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + to_string(a.shape()) + ") vs (" +
                     to_string(b.shape()) + ")");
  }
}

template <typename F>
Var unary(const Var& a, F&& f, Tape::BackwardFn backward) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, std::move(backward));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: shape mismatch (" + to_string(x.shape()) + ") vs (" +
                     to_string(y.shape()) + ")");
  }
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out(i, j) += xv * y(p, j);
    }
  }
  const std::array parents{a, b};
  return a.tape().record(std::move(out), parents, [a, b, n, k, m](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (Tensor* ga = t.grad_buffer(a)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g(i, j) * y(p, j);
          (*ga)(i, p) += acc;
        }
    }
    if (Tensor* gb = t.grad_buffer(b)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x(i, p);
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) (*gb)(p, j) += xv * g(i, j);
        }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a.shape(), b.shape());
  Tensor out = a.value();
  out += b.value();
  const std::array parents{a, b};
  return a.tape().record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a.shape(), b.shape());
  const Tensor& y = b.value();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  const std::array parents{a, b};
  return a.tape().record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a.shape(), b.shape());
  const Tensor& y = b.value();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::array parents{a, b};
  return a.tape().record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
    if (Tensor* gb = t.grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * x[i];
  });
}

Var scale(const Var& a, double factor) {
  return unary(a, [factor](double v) { return v * factor; },
               [a, factor](Tape& t, const Tensor& g) {
                 if (Tensor* ga = t.grad_buffer(a))
                   for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += factor * g[i];
               });
}

Var add_row(const Var& a, const Var& bias) {
  const Tensor& x = a.value();
  const Tensor& b = bias.value();
  if (b.rows() != 1 || b.cols() != x.cols()) {
    throw ShapeError("add_row: shape mismatch (" + to_string(x.shape()) + ") vs (" +
                     to_string(b.shape()) + ")");
  }
  Tensor out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b[c];
  const std::array parents{a, bias};
  return a.tape().record(std::move(out), parents, [a, bias](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (Tensor* gb = t.grad_buffer(bias))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
  });
}

Var relu(const Var& a) {
  return unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    // Subgradient at exactly 0 is 0.
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0) (*ga)[i] += g[i];
  });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(a, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [a, slope](Tape& t, const Tensor& g) {
                 const Tensor& x = a.value();
                 if (Tensor* ga = t.grad_buffer(a))
                   for (std::size_t i = 0; i < g.size(); ++i)
                     (*ga)[i] += x[i] > 0.0 ? g[i] : slope * g[i];
               });
}

Var abs(const Var& a) {
  return unary(a, [](double v) { return std::abs(v); }, [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i)
        (*ga)[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
  });
}

Var square(const Var& a) {
  return unary(a, [](double v) { return v * v; }, [a](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * x[i] * g[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (const double v : a.value().data()) total += v;
  const std::array parents{a};
  return a.tape().record(Tensor::scalar(total), parents, [a](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (auto& v : ga->data()) v += g[0];
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var mean_rows(const Var& a) {
  const Tensor& x = a.value();
  if (x.rows() == 0) throw ShapeError("mean_rows: tensor has no rows");
  const double inv = 1.0 / static_cast<double>(x.rows());
  Tensor out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  for (auto& v : out.data()) v *= inv;
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, [a, inv](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < ga->rows(); ++r)
        for (std::size_t c = 0; c < ga->cols(); ++c) (*ga)(r, c) += g[c] * inv;
  });
}

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    auto o = out.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (o[c] = std::exp(in[c] - m));
    for (auto& v : o) v /= z;
  }
  const std::array parents{a};
  Tensor y = out;
  return a.tape().record(std::move(out), parents, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (ga == nullptr) return;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*ga)(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var log_softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (const double v : in) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) out(r, c) = in[c] - lse;
  }
  const std::array parents{a};
  Tensor y = out;
  return a.tape().record(std::move(out), parents, [a, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    if (ga == nullptr) return;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) total += g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        (*ga)(r, c) += g(r, c) - std::exp(y(r, c)) * total;
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require_rows("concat_cols", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t p = x.cols(), q = y.cols();
  Tensor out(x.rows(), p + q);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.row(r).begin(), p, out.row(r).begin());
    std::copy_n(y.row(r).begin(), q, out.row(r).begin() + static_cast<std::ptrdiff_t>(p));
  }
  const std::array parents{a, b};
  return a.tape().record(std::move(out), parents, [a, b, p, q](Tape& t, const Tensor& g) {
    Tensor* ga = t.grad_buffer(a);
    Tensor* gb = t.grad_buffer(b);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      if (ga)
        for (std::size_t c = 0; c < p; ++c) (*ga)(r, c) += g(r, c);
      if (gb)
        for (std::size_t c = 0; c < q; ++c) (*gb)(r, c) += g(r, p + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts.front().shape().cols;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.shape().cols != cols) {
      throw ShapeError("concat_rows: shape mismatch (" + to_string(parts.front().shape()) +
                       ") vs (" + to_string(p.shape()) + ")");
    }
    rows += p.shape().rows;
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto& src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
    offset += p.shape().rows;
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return parts.front().tape().record(
      std::move(out), parts, [keep, offsets, cols](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < keep.size(); ++k) {
          Tensor* gk = t.grad_buffer(keep[k]);
          if (gk == nullptr) continue;
          const std::size_t begin = offsets[k] * cols;
          for (std::size_t i = 0; i < gk->size(); ++i) (*gk)[i] += g[begin + i];
        }
      });
}

Var concat_rows(const Var& a, const Var& b) {
  const std::array parts{a, b};
  return concat_rows(std::span<const Var>(parts));
}

Var permute_cols(const Var& a, std::span<const std::size_t> destination) {
  const Tensor& x = a.value();
  if (destination.size() != x.cols()) {
    throw ShapeError("permute_cols: permutation of length " + std::to_string(destination.size()) +
                     " for tensor " + to_string(x.shape()));
  }
  std::vector<bool> seen(x.cols(), false);
  for (const auto d : destination) {
    if (d >= x.cols() || seen[d]) throw ShapeError("permute_cols: destination is not a permutation");
    seen[d] = true;
  }
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, destination[c]) = x(r, c);
  std::vector<std::size_t> dest(destination.begin(), destination.end());
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, [a, dest](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < dest.size(); ++c) (*ga)(r, c) += g(r, dest[c]);
  });
}

Var broadcast_rows(const Var& row, std::size_t n) {
  const Tensor& x = row.value();
  if (x.rows() != 1) throw ShapeError("broadcast_rows: expected a row, got " + to_string(x.shape()));
  Tensor out(n, x.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data().begin(), x.data().end(), out.row(r).begin());
  const std::array parents{row};
  return row.tape().record(std::move(out), parents, [row](Tape& t, const Tensor& g) {
    if (Tensor* gr = t.grad_buffer(row))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) (*gr)[c] += g(r, c);
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  Tensor out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range for " +
                       to_string(x.shape()));
    }
    std::copy_n(x.row(rows[k]).begin(), x.cols(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, [a, idx](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(idx[k], c) += g(k, c);
  });
}

Var slice_cols(const Var& a, std::size_t start, std::size_t length) {
  const Tensor& x = a.value();
  if (start + length > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds " + to_string(x.shape()));
  }
  Tensor out(x.rows(), length);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < length; ++c) out(r, c) = x(r, start + c);
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, [a, start, length](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < length; ++c) (*ga)(r, start + c) += g(r, c);
  });
}

Var select_entries(const Var& a, std::span<const std::size_t> rows,
                   std::span<const std::size_t> cols) {
  if (rows.size() != cols.size()) throw ShapeError("select_entries: rows/cols length differ");
  const Tensor& x = a.value();
  Tensor out(rows.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.rows() || cols[k] >= x.cols()) {
      throw ShapeError("select_entries: index out of range for " + to_string(x.shape()));
    }
    out[k] = x(rows[k], cols[k]);
  }
  std::vector<std::size_t> r(rows.begin(), rows.end());
  std::vector<std::size_t> c(cols.begin(), cols.end());
  const std::array parents{a};
  return a.tape().record(std::move(out), parents, [a, r, c](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_buffer(a))
      for (std::size_t k = 0; k < r.size(); ++k) (*ga)(r[k], c[k]) += g[k];
  });
}

namespace {

void check_messages(const char* op, const Tensor& x, const MessageList& ml, const Tensor& w) {
  if (x.rows() != ml.num_nodes) {
    throw ShapeError(std::string(op) + ": features " + to_string(x.shape()) + " for " +
                     std::to_string(ml.num_nodes) + " nodes");
  }
  if (w.rows() != 1 || w.cols() != ml.num_slots) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + to_string(w.shape()) + ") vs (1x" +
                     std::to_string(ml.num_slots) + ")");
  }
  for (const auto& m : ml.messages) {
    if (m.source >= ml.num_nodes || m.target >= ml.num_nodes ||
        m.slot >= static_cast<std::int64_t>(ml.num_slots)) {
      throw ShapeError(std::string(op) + ": message index out of range");
    }
  }
}

double message_weight(const Message& m, const Tensor& w) {
  return m.slot == Message::kUnitWeight ? 1.0 : w[static_cast<std::size_t>(m.slot)];
}

}  // namespace

Var weighted_neighbor_aggregate(const Var& features, const MessageList& messages,
                                const Var& edge_weights, Aggregator mode) {
  if (mode == Aggregator::attention) {
    throw ValidationError("weighted_neighbor_aggregate: attention needs attention_aggregate");
  }
  const Tensor& x = features.value();
  const Tensor& w = edge_weights.value();
  check_messages("weighted_neighbor_aggregate", x, messages, w);
  const std::size_t n = messages.num_nodes, d = x.cols();
  Tensor out(n, d);
  const std::array parents{features, edge_weights};
  const auto& msgs = messages.messages;

  if (mode == Aggregator::sum || mode == Aggregator::mean) {
    std::vector<double> denom(n, 0.0);
    for (const auto& m : msgs) {
      const double wm = message_weight(m, w);
      denom[m.target] += wm;
      const auto src = x.row(m.source);
      auto dst = out.row(m.target);
      for (std::size_t c = 0; c < d; ++c) dst[c] += wm * src[c];
    }
    if (mode == Aggregator::mean) {
      for (std::size_t v = 0; v < n; ++v) {
        auto row = out.row(v);
        if (denom[v] == 0.0) {
          std::fill(row.begin(), row.end(), 0.0);
        } else {
          for (auto& val : row) val /= denom[v];
        }
      }
    }
    const bool is_mean = mode == Aggregator::mean;
    Tensor y = out;
    return features.tape().record(
        std::move(out), parents,
        [features, edge_weights, msgs, denom, is_mean, y = std::move(y)](
            Tape& t, const Tensor& g) {
          const Tensor& x = features.value();
          const Tensor& w = edge_weights.value();
          Tensor* gx = t.grad_buffer(features);
          Tensor* gw = t.grad_buffer(edge_weights);
          const std::size_t d = x.cols();
          for (const auto& m : msgs) {
            const double scale_v = is_mean ? (denom[m.target] == 0.0 ? 0.0 : 1.0 / denom[m.target]) : 1.0;
            if (scale_v == 0.0) continue;
            const double wm = message_weight(m, w);
            const auto gv = g.row(m.target);
            if (gx) {
              auto gs = gx->row(m.source);
              for (std::size_t c = 0; c < d; ++c) gs[c] += wm * scale_v * gv[c];
            }
            if (gw && m.slot != Message::kUnitWeight) {
              const auto src = x.row(m.source);
              double acc = 0.0;
              if (is_mean) {
                const auto yv = y.row(m.target);
                for (std::size_t c = 0; c < d; ++c) acc += gv[c] * (src[c] - yv[c]);
              } else {
                for (std::size_t c = 0; c < d; ++c) acc += gv[c] * src[c];
              }
              (*gw)[static_cast<std::size_t>(m.slot)] += acc * scale_v;
            }
          }
        });
  }

  // max: per (node, column) argmax message index; -1 when no candidate.
  std::vector<std::ptrdiff_t> arg(n * d, -1);
  for (std::size_t k = 0; k < msgs.size(); ++k) {
    const auto& m = msgs[k];
    const double wm = message_weight(m, w);
    if (wm == 0.0) continue;
    const auto src = x.row(m.source);
    for (std::size_t c = 0; c < d; ++c) {
      const double val = wm * src[c];
      auto& best = arg[m.target * d + c];
      if (best < 0) {
        best = static_cast<std::ptrdiff_t>(k);
        continue;
      }
      const auto& bm = msgs[static_cast<std::size_t>(best)];
      const double bval = message_weight(bm, w) * x(bm.source, c);
      if (val > bval || (val == bval && m.source < bm.source)) best = static_cast<std::ptrdiff_t>(k);
    }
  }
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t c = 0; c < d; ++c) {
      const auto best = arg[v * d + c];
      if (best < 0) continue;
      const auto& bm = msgs[static_cast<std::size_t>(best)];
      out(v, c) = message_weight(bm, w) * x(bm.source, c);
    }
  return features.tape().record(
      std::move(out), parents, [features, edge_weights, msgs, arg, n, d](Tape& t, const Tensor& g) {
        const Tensor& x = features.value();
        const Tensor& w = edge_weights.value();
        Tensor* gx = t.grad_buffer(features);
        Tensor* gw = t.grad_buffer(edge_weights);
        for (std::size_t v = 0; v < n; ++v)
          for (std::size_t c = 0; c < d; ++c) {
            const auto best = arg[v * d + c];
            if (best < 0) continue;
            const auto& m = msgs[static_cast<std::size_t>(best)];
            const double gv = g(v, c);
            if (gx) (*gx)(m.source, c) += message_weight(m, w) * gv;
            if (gw && m.slot != Message::kUnitWeight)
              (*gw)[static_cast<std::size_t>(m.slot)] += x(m.source, c) * gv;
          }
      });
}

Var attention_aggregate(const Var& features, const MessageList& messages,
                        const Var& edge_weights, const Var& attention) {
  constexpr double kSlope = 0.2;
  const Tensor& x = features.value();
  const Tensor& w = edge_weights.value();
  const Tensor& a = attention.value();
  check_messages("attention_aggregate", x, messages, w);
  const std::size_t n = messages.num_nodes, d = x.cols();
  if (a.rows() != 1 || a.cols() != 2 * d) {
    throw ShapeError("attention_aggregate: shape mismatch (" + to_string(a.shape()) + ") vs (1x" +
                     std::to_string(2 * d) + ")");
  }
  const auto& msgs = messages.messages;
  const std::size_t k = msgs.size();

  std::vector<double> pre(k), score(k), expw(k);
  std::vector<double> smax(n, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < k; ++e) {
    const auto& m = msgs[e];
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += a[c] * x(m.source, c) + a[d + c] * x(m.target, c);
    pre[e] = s;
    score[e] = s > 0.0 ? s : kSlope * s;
    smax[m.target] = std::max(smax[m.target], score[e]);
  }
  std::vector<double> norm(n, 0.0);
  for (std::size_t e = 0; e < k; ++e) {
    const auto& m = msgs[e];
    expw[e] = std::exp(score[e] - smax[m.target]);
    norm[m.target] += message_weight(m, w) * expw[e];
  }
  std::vector<double> coef(k, 0.0);
  Tensor out(n, d);
  for (std::size_t e = 0; e < k; ++e) {
    const auto& m = msgs[e];
    if (norm[m.target] == 0.0) continue;
    coef[e] = message_weight(m, w) * expw[e] / norm[m.target];
    const auto src = x.row(m.source);
    auto dst = out.row(m.target);
    for (std::size_t c = 0; c < d; ++c) dst[c] += coef[e] * src[c];
  }

  const std::array parents{features, edge_weights, attention};
  return features.tape().record(
      std::move(out), parents,
      [features, edge_weights, attention, msgs, pre, expw, norm, coef, n, d](Tape& t,
                                                                            const Tensor& g) {
        const Tensor& x = features.value();
        const Tensor& a = attention.value();
        Tensor* gx = t.grad_buffer(features);
        Tensor* gw = t.grad_buffer(edge_weights);
        Tensor* ga = t.grad_buffer(attention);
        const std::size_t k = msgs.size();
        // m_e = g_v . x_u ; mbar_v = sum_e coef_e m_e
        std::vector<double> dot(k, 0.0), mbar(n, 0.0);
        for (std::size_t e = 0; e < k; ++e) {
          const auto& m = msgs[e];
          const auto gv = g.row(m.target);
          const auto src = x.row(m.source);
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += gv[c] * src[c];
          dot[e] = acc;
          mbar[m.target] += coef[e] * acc;
        }
        for (std::size_t e = 0; e < k; ++e) {
          const auto& m = msgs[e];
          if (norm[m.target] == 0.0) continue;
          const auto gv = g.row(m.target);
          if (gx) {
            auto gs = gx->row(m.source);
            for (std::size_t c = 0; c < d; ++c) gs[c] += coef[e] * gv[c];
          }
          if (gw && m.slot != Message::kUnitWeight) {
            (*gw)[static_cast<std::size_t>(m.slot)] +=
                expw[e] * (dot[e] - mbar[m.target]) / norm[m.target];
          }
          const double dscore = coef[e] * (dot[e] - mbar[m.target]);
          const double dpre = pre[e] > 0.0 ? dscore : kSlope * dscore;
          if (dpre == 0.0) continue;
          if (gx) {
            auto gs = gx->row(m.source);
            auto gt = gx->row(m.target);
            for (std::size_t c = 0; c < d; ++c) {
              gs[c] += dpre * a[c];
              gt[c] += dpre * a[d + c];
            }
          }
          if (ga) {
            for (std::size_t c = 0; c < d; ++c) {
              (*ga)[c] += dpre * x(m.source, c);
              (*ga)[d + c] += dpre * x(m.target, c);
            }
          }
        }
      });
}

Var mix(std::span<const Var> parts, const Var& weights) {
  if (parts.empty()) throw ShapeError("mix: no operands");
  const Tensor& w = weights.value();
  if (w.rows() != 1 || w.cols() != parts.size()) {
    throw ShapeError("mix: shape mismatch (" + to_string(w.shape()) + ") vs (1x" +
                     std::to_string(parts.size()) + ")");
  }
  const Shape s = parts.front().shape();
  Tensor out(s.rows, s.cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    require_same_shape("mix", s, parts[k].shape());
    const Tensor& x = parts[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[k] * x[i];
  }
  std::vector<Var> all(parts.begin(), parts.end());
  all.push_back(weights);
  std::vector<Var> keep(parts.begin(), parts.end());
  return weights.tape().record(std::move(out), all, [keep, weights](Tape& t, const Tensor& g) {
    const Tensor& w = weights.value();
    Tensor* gw = t.grad_buffer(weights);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const Tensor& x = keep[k].value();
      if (Tensor* gk = t.grad_buffer(keep[k]))
        for (std::size_t i = 0; i < g.size(); ++i) (*gk)[i] += w[k] * g[i];
      if (gw) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += x[i] * g[i];
        (*gw)[k] += acc;
      }
    }
  });
}

Var straight_through(const Var& soft, const Tensor& hard) {
  require_same_shape("straight_through", soft.shape(), hard.shape());
  const std::array parents{soft};
  return soft.tape().record(hard, parents, [soft](Tape& t, const Tensor& g) { t.accumulate(soft, g); });
}

}  // namespace gnnr
