#include "kamg/autodiff.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "kamg/errors.hpp"

namespace kamg {

namespace {

// c += a * b, row-major; ikj order keeps the inner loop contiguous.
void matmul_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    const double* ar = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double s = ar[p];
      const double* br = b + p * n;
      for (int64_t j = 0; j < n; ++j) cr[j] += s * br[j];
    }
  }
}

// c = a * b; the first k-plane writes so c need not be pre-zeroed.
void matmul_set(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  if (k == 0) {
    for (int64_t i = 0; i < m * n; ++i) c[i] = 0.0;
    return;
  }
  for (int64_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    const double* ar = a + i * k;
    {
      const double s = ar[0];
      const double* br = b;
      for (int64_t j = 0; j < n; ++j) cr[j] = s * br[j];
    }
    for (int64_t p = 1; p < k; ++p) {
      const double s = ar[p];
      const double* br = b + p * n;
      for (int64_t j = 0; j < n; ++j) cr[j] += s * br[j];
    }
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ContractError(std::string(op) + " expects rank-2 operand, got " + shape_str(t));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractError(std::string(op) + " shape mismatch: " + shape_str(a) + " vs " +
                        shape_str(b));
  }
}

}  // namespace

Tape::NodeId Tape::make_node(const char* name, std::vector<NodeId> inputs) {
  bool rg = false;
  for (NodeId in : inputs) {
    check_exists(in);
    rg = rg || nodes_[static_cast<size_t>(in)].requires_grad;
  }
  if (nodes_.capacity() == nodes_.size()) nodes_.reserve(nodes_.size() + 256);
  Node n;
  n.name = name;
  n.inputs = std::move(inputs);
  n.requires_grad = rg;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_exists(NodeId id) const {
  if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
    throw ContractError("node id " + std::to_string(id) + " out of range");
  }
}

Tensor& Tape::ensure_grad(NodeId id) {
  Node& n = node(id);
  if (!n.grad_ready) {
    n.grad = Tensor(value(id).shape());
    n.grad_ready = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(NodeId id) const {
  check_exists(id);
  const Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_ready) {
    throw ContractError(std::string("gradient not computed for node '") + n.name + "'");
  }
  return n.grad;
}

Tensor Tape::grad_or_zeros(NodeId id) const {
  check_exists(id);
  const Node& n = nodes_[static_cast<size_t>(id)];
  return n.grad_ready ? n.grad : Tensor(value(id).shape());
}

Tape::NodeId Tape::input(Tensor value, bool requires_grad) {
  if (nodes_.capacity() == nodes_.size()) nodes_.reserve(nodes_.size() + 256);
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = "input";
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::borrow(const Tensor* value, bool requires_grad) {
  if (value == nullptr) throw ContractError("borrow of null tensor");
  if (nodes_.capacity() == nodes_.size()) nodes_.reserve(nodes_.size() + 256);
  Node n;
  n.external = value;
  n.requires_grad = requires_grad;
  n.name = "borrow";
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Tensor Tape::release_grad(NodeId id) {
  check_exists(id);
  Node& n = node(id);
  if (!n.grad_ready) return Tensor(value(id).shape());
  n.grad_ready = false;
  return std::move(n.grad);
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.dim(1) != bv.dim(0)) {
    throw ContractError("matmul shape mismatch: " + shape_str(av) + " vs " + shape_str(bv));
  }
  NodeId id = make_node("matmul", {a, b});
  node(id).recompute = [id, a, b](Tape& t) {
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor out = Tensor::uninitialized({x.dim(0), y.dim(1)});
    matmul_set(x.data(), y.data(), out.data(), x.dim(0), x.dim(1), y.dim(1));
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    if (t.node(a).requires_grad) {
      Tensor yt = transpose2d(y);
      matmul_acc(g.data(), yt.data(), t.ensure_grad(a).data(), x.dim(0), y.dim(1), x.dim(1));
    }
    if (t.node(b).requires_grad) {
      Tensor xt = transpose2d(x);
      matmul_acc(xt.data(), g.data(), t.ensure_grad(b).data(), x.dim(1), x.dim(0), y.dim(1));
    }
  };
  return id;
}

Tape::NodeId Tape::spmm(const SparseOperator* op, NodeId x) {
  const Tensor& xv = value(x);
  require_rank2(xv, "spmm");
  if (xv.dim(0) != op->mat.cols) {
    throw ContractError("spmm shape mismatch: operator " + std::to_string(op->mat.rows) + "x" +
                        std::to_string(op->mat.cols) + " vs " + shape_str(xv));
  }
  NodeId id = make_node("spmm", {x});
  node(id).recompute = [id, op, x](Tape& t) { t.node(id).value = op->mat.matmul(t.value(x)); };
  node(id).recompute(*this);
  node(id).backprop = [id, op, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    Tensor gx = op->mat_t.matmul(t.node(id).grad);
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += gx[i];
  };
  return id;
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "add");
  NodeId id = make_node("add", {a, b});
  node(id).recompute = [id, a, b](Tape& t) {
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor out = Tensor::uninitialized(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] + y[i];
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    for (NodeId in : {a, b}) {
      if (!t.node(in).requires_grad) continue;
      Tensor& acc = t.ensure_grad(in);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
    }
  };
  return id;
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "sub");
  NodeId id = make_node("sub", {a, b});
  node(id).recompute = [id, a, b](Tape& t) {
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor out = Tensor::uninitialized(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] - y[i];
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    if (t.node(a).requires_grad) {
      Tensor& acc = t.ensure_grad(a);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
    }
    if (t.node(b).requires_grad) {
      Tensor& acc = t.ensure_grad(b);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] -= g[i];
    }
  };
  return id;
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "mul");
  NodeId id = make_node("mul", {a, b});
  node(id).recompute = [id, a, b](Tape& t) {
    const Tensor& x = t.value(a);
    const Tensor& y = t.value(b);
    Tensor out = Tensor::uninitialized(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] * y[i];
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, a, b](Tape& t) {
    const Tensor& g = t.node(id).grad;
    if (t.node(a).requires_grad) {
      Tensor& acc = t.ensure_grad(a);
      const Tensor& y = t.value(b);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * y[i];
    }
    if (t.node(b).requires_grad) {
      Tensor& acc = t.ensure_grad(b);
      const Tensor& x = t.value(a);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * x[i];
    }
  };
  return id;
}

Tape::NodeId Tape::add_rowvec(NodeId x, NodeId v) {
  const Tensor& xv = value(x);
  const Tensor& vv = value(v);
  require_rank2(xv, "add_rowvec");
  if (vv.numel() != xv.dim(1)) {
    throw ContractError("add_rowvec shape mismatch: " + shape_str(xv) + " vs " + shape_str(vv));
  }
  NodeId id = make_node("add_rowvec", {x, v});
  node(id).recompute = [id, x, v](Tape& t) {
    const Tensor& a = t.value(x);
    const Tensor& b = t.value(v);
    Tensor out = Tensor::uninitialized(a.shape());
    const int64_t r = a.dim(0), c = a.dim(1);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] + b[j];
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, v](Tape& t) {
    const Tensor& g = t.node(id).grad;
    const int64_t r = g.dim(0), c = g.dim(1);
    if (t.node(x).requires_grad) {
      Tensor& acc = t.ensure_grad(x);
      for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i];
    }
    if (t.node(v).requires_grad) {
      Tensor& acc = t.ensure_grad(v);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) acc[j] += g[i * c + j];
    }
  };
  return id;
}

Tape::NodeId Tape::scale(NodeId x, double s) {
  NodeId id = make_node("scale", {x});
  node(id).recompute = [id, x, s](Tape& t) {
    const Tensor& a = t.value(x);
    Tensor out = Tensor::uninitialized(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, s](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < g.numel(); ++i) acc[i] += g[i] * s;
  };
  return id;
}

Tape::NodeId Tape::scale_rows(NodeId x, Tensor factors) {
  const Tensor& xv = value(x);
  require_rank2(xv, "scale_rows");
  if (factors.numel() != xv.dim(0)) {
    throw ContractError("scale_rows shape mismatch: " + shape_str(xv) + " vs " +
                        shape_str(factors));
  }
  auto f = std::make_shared<Tensor>(std::move(factors));
  NodeId id = make_node("scale_rows", {x});
  node(id).recompute = [id, x, f](Tape& t) {
    const Tensor& a = t.value(x);
    Tensor out = Tensor::uninitialized(a.shape());
    const int64_t r = a.dim(0), c = a.dim(1);
    for (int64_t i = 0; i < r; ++i) {
      const double s = (*f)[i];
      for (int64_t j = 0; j < c; ++j) out[i * c + j] = a[i * c + j] * s;
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, f](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    Tensor& acc = t.ensure_grad(x);
    const int64_t r = g.dim(0), c = g.dim(1);
    for (int64_t i = 0; i < r; ++i) {
      const double s = (*f)[i];
      for (int64_t j = 0; j < c; ++j) acc[i * c + j] += g[i * c + j] * s;
    }
  };
  return id;
}

Tape::NodeId Tape::relu(NodeId x) {
  NodeId id = make_node("relu", {x});
  node(id).recompute = [id, x](Tape& t) {
    const Tensor& a = t.value(x);
    Tensor out = Tensor::uninitialized(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& a = t.value(x);
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < g.numel(); ++i) acc[i] += a[i] > 0.0 ? g[i] : 0.0;
  };
  return id;
}

Tape::NodeId Tape::gelu(NodeId x) {
  NodeId id = make_node("gelu", {x});
  node(id).recompute = [id, x](Tape& t) {
    const Tensor& a = t.value(x);
    Tensor out = Tensor::uninitialized(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
      out[i] = 0.5 * a[i] * (1.0 + std::erf(a[i] * M_SQRT1_2));
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& a = t.value(x);
    Tensor& acc = t.ensure_grad(x);
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(a[i] * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * a[i] * a[i]);
      acc[i] += g[i] * (cdf + a[i] * pdf);
    }
  };
  return id;
}

Tape::NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  const Tensor& xv = value(x);
  require_rank2(xv, "layer_norm");
  if (value(gamma).numel() != xv.dim(1) || value(beta).numel() != xv.dim(1)) {
    throw ContractError("layer_norm parameter shape mismatch: " + shape_str(xv) + " vs gamma " +
                        shape_str(value(gamma)) + ", beta " + shape_str(value(beta)));
  }
  struct State {
    Tensor xhat;
    std::vector<double> inv_std;
  };
  auto st = std::make_shared<State>();
  NodeId id = make_node("layer_norm", {x, gamma, beta});
  node(id).recompute = [id, x, gamma, beta, eps, st](Tape& t) {
    const Tensor& a = t.value(x);
    const Tensor& g = t.value(gamma);
    const Tensor& b = t.value(beta);
    const int64_t r = a.dim(0), c = a.dim(1);
    st->xhat = Tensor::uninitialized({r, c});
    st->inv_std.assign(static_cast<size_t>(r), 0.0);
    Tensor out = Tensor::uninitialized({r, c});
    for (int64_t i = 0; i < r; ++i) {
      const double* row = a.data() + i * c;
      double mean = 0.0;
      for (int64_t j = 0; j < c; ++j) mean += row[j];
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (int64_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<double>(c);
      const double inv = 1.0 / std::sqrt(var + eps);
      st->inv_std[static_cast<size_t>(i)] = inv;
      for (int64_t j = 0; j < c; ++j) {
        const double xh = (row[j] - mean) * inv;
        st->xhat[i * c + j] = xh;
        out[i * c + j] = g[j] * xh + b[j];
      }
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, gamma, beta, st](Tape& t) {
    const Tensor& gout = t.node(id).grad;
    const Tensor& g = t.value(gamma);
    const int64_t r = gout.dim(0), c = gout.dim(1);
    if (t.node(gamma).requires_grad) {
      Tensor& acc = t.ensure_grad(gamma);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) acc[j] += gout[i * c + j] * st->xhat[i * c + j];
    }
    if (t.node(beta).requires_grad) {
      Tensor& acc = t.ensure_grad(beta);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) acc[j] += gout[i * c + j];
    }
    if (t.node(x).requires_grad) {
      Tensor& acc = t.ensure_grad(x);
      for (int64_t i = 0; i < r; ++i) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (int64_t j = 0; j < c; ++j) {
          const double dxh = gout[i * c + j] * g[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * st->xhat[i * c + j];
        }
        mean_dxh /= static_cast<double>(c);
        mean_dxh_xh /= static_cast<double>(c);
        const double inv = st->inv_std[static_cast<size_t>(i)];
        for (int64_t j = 0; j < c; ++j) {
          const double dxh = gout[i * c + j] * g[j];
          acc[i * c + j] += inv * (dxh - mean_dxh - st->xhat[i * c + j] * mean_dxh_xh);
        }
      }
    }
  };
  return id;
}

Tape::NodeId Tape::softmax(NodeId x) {
  require_rank2(value(x), "softmax");
  NodeId id = make_node("softmax", {x});
  node(id).recompute = [id, x](Tape& t) {
    const Tensor& a = t.value(x);
    const int64_t r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::uninitialized({r, c});
    for (int64_t i = 0; i < r; ++i) {
      const double* row = a.data() + i * c;
      double m = row[0];
      for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
      double z = 0.0;
      for (int64_t j = 0; j < c; ++j) {
        out[i * c + j] = std::exp(row[j] - m);
        z += out[i * c + j];
      }
      for (int64_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    const Tensor& y = t.value(id);
    Tensor& acc = t.ensure_grad(x);
    const int64_t r = g.dim(0), c = g.dim(1);
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (int64_t j = 0; j < c; ++j) acc[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  };
  return id;
}

Tape::NodeId Tape::embedding(NodeId table, std::vector<int64_t> ids) {
  const Tensor& tv = value(table);
  require_rank2(tv, "embedding");
  for (int64_t i : ids) {
    if (i < 0 || i >= tv.dim(0)) {
      throw ContractError("embedding index " + std::to_string(i) + " outside table " +
                          shape_str(tv));
    }
  }
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(ids));
  NodeId id = make_node("embedding", {table});
  node(id).recompute = [id, table, idx](Tape& t) {
    const Tensor& tab = t.value(table);
    const int64_t n = static_cast<int64_t>(idx->size()), d = tab.dim(1);
    Tensor out = Tensor::uninitialized({n, d});
    for (int64_t i = 0; i < n; ++i) {
      const double* src = tab.data() + (*idx)[static_cast<size_t>(i)] * d;
      double* dst = out.data() + i * d;
      for (int64_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, table, idx](Tape& t) {
    if (!t.node(table).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    Tensor& acc = t.ensure_grad(table);
    const int64_t n = static_cast<int64_t>(idx->size()), d = g.dim(1);
    for (int64_t i = 0; i < n; ++i) {
      double* dst = acc.data() + (*idx)[static_cast<size_t>(i)] * d;
      const double* src = g.data() + i * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  };
  return id;
}

Tape::NodeId Tape::cross_entropy(NodeId logits, std::vector<int64_t> targets,
                                 std::vector<double> weights) {
  const Tensor& lv = value(logits);
  require_rank2(lv, "cross_entropy");
  const int64_t r = lv.dim(0), c = lv.dim(1);
  if (static_cast<int64_t>(targets.size()) != r || static_cast<int64_t>(weights.size()) != r) {
    throw ContractError("cross_entropy expects " + std::to_string(r) + " targets/weights, got " +
                        std::to_string(targets.size()) + "/" + std::to_string(weights.size()));
  }
  for (int64_t tgt : targets) {
    if (tgt < 0 || tgt >= c) {
      throw ContractError("cross_entropy target " + std::to_string(tgt) + " outside logits " +
                          shape_str(lv));
    }
  }
  struct State {
    std::vector<int64_t> targets;
    std::vector<double> weights;
    Tensor probs;
  };
  auto st = std::make_shared<State>();
  st->targets = std::move(targets);
  st->weights = std::move(weights);
  NodeId id = make_node("cross_entropy", {logits});
  node(id).recompute = [id, logits, st](Tape& t) {
    const Tensor& z = t.value(logits);
    const int64_t rows = z.dim(0), cols = z.dim(1);
    st->probs = Tensor::uninitialized({rows, cols});
    double loss = 0.0;
    for (int64_t i = 0; i < rows; ++i) {
      const double* row = z.data() + i * cols;
      double m = row[0];
      for (int64_t j = 1; j < cols; ++j) m = std::max(m, row[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < cols; ++j) {
        st->probs[i * cols + j] = std::exp(row[j] - m);
        sum += st->probs[i * cols + j];
      }
      for (int64_t j = 0; j < cols; ++j) st->probs[i * cols + j] /= sum;
      const double lse = m + std::log(sum);
      loss += st->weights[static_cast<size_t>(i)] * (lse - row[st->targets[static_cast<size_t>(i)]]);
    }
    t.node(id).value = Tensor::scalar(loss);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, logits, st](Tape& t) {
    if (!t.node(logits).requires_grad) return;
    const double g = t.node(id).grad[0];
    Tensor& acc = t.ensure_grad(logits);
    const int64_t rows = acc.dim(0), cols = acc.dim(1);
    for (int64_t i = 0; i < rows; ++i) {
      const double w = st->weights[static_cast<size_t>(i)] * g;
      if (w == 0.0) continue;
      const int64_t tgt = st->targets[static_cast<size_t>(i)];
      for (int64_t j = 0; j < cols; ++j) {
        acc[i * cols + j] += w * (st->probs[i * cols + j] - (j == tgt ? 1.0 : 0.0));
      }
    }
  };
  return id;
}

Tape::NodeId Tape::sum(NodeId x) {
  NodeId id = make_node("sum", {x});
  node(id).recompute = [id, x](Tape& t) {
    const Tensor& a = t.value(x);
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    t.node(id).value = Tensor::scalar(s);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const double g = t.node(id).grad[0];
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += g;
  };
  return id;
}

Tape::NodeId Tape::mean(NodeId x) {
  const int64_t n = value(x).numel();
  if (n == 0) throw ContractError("mean of empty tensor");
  NodeId id = make_node("mean", {x});
  node(id).recompute = [id, x, n](Tape& t) {
    const Tensor& a = t.value(x);
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    t.node(id).value = Tensor::scalar(s / static_cast<double>(n));
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, n](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const double g = t.node(id).grad[0] / static_cast<double>(n);
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += g;
  };
  return id;
}

Tape::NodeId Tape::transpose(NodeId x) {
  require_rank2(value(x), "transpose");
  NodeId id = make_node("transpose", {x});
  node(id).recompute = [id, x](Tape& t) { t.node(id).value = transpose2d(t.value(x)); };
  node(id).recompute(*this);
  node(id).backprop = [id, x](Tape& t) {
    if (!t.node(x).requires_grad) return;
    Tensor gt = transpose2d(t.node(id).grad);
    Tensor& acc = t.ensure_grad(x);
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += gt[i];
  };
  return id;
}

Tape::NodeId Tape::slice_cols(NodeId x, int64_t begin, int64_t count) {
  const Tensor& xv = value(x);
  require_rank2(xv, "slice_cols");
  if (begin < 0 || count < 0 || begin + count > xv.dim(1)) {
    throw ContractError("slice_cols [" + std::to_string(begin) + "," +
                        std::to_string(begin + count) + ") outside " + shape_str(xv));
  }
  NodeId id = make_node("slice_cols", {x});
  node(id).recompute = [id, x, begin, count](Tape& t) {
    const Tensor& a = t.value(x);
    const int64_t r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::uninitialized({r, count});
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < count; ++j) out[i * count + j] = a[i * c + begin + j];
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, x, begin, count](Tape& t) {
    if (!t.node(x).requires_grad) return;
    const Tensor& g = t.node(id).grad;
    Tensor& acc = t.ensure_grad(x);
    const int64_t r = g.dim(0), c = acc.dim(1);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < count; ++j) acc[i * c + begin + j] += g[i * count + j];
  };
  return id;
}

Tape::NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of zero parts");
  const int64_t r = value(parts[0]).dim(0);
  int64_t total = 0;
  for (NodeId p : parts) {
    require_rank2(value(p), "concat_cols");
    if (value(p).dim(0) != r) {
      throw ContractError("concat_cols row mismatch: " + shape_str(value(parts[0])) + " vs " +
                          shape_str(value(p)));
    }
    total += value(p).dim(1);
  }
  auto ps = std::make_shared<std::vector<NodeId>>(parts);
  NodeId id = make_node("concat_cols", parts);
  node(id).recompute = [id, ps, r, total](Tape& t) {
    Tensor out = Tensor::uninitialized({r, total});
    int64_t off = 0;
    for (NodeId p : *ps) {
      const Tensor& a = t.value(p);
      const int64_t c = a.dim(1);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[i * total + off + j] = a[i * c + j];
      off += c;
    }
    t.node(id).value = std::move(out);
  };
  node(id).recompute(*this);
  node(id).backprop = [id, ps, r, total](Tape& t) {
    const Tensor& g = t.node(id).grad;
    int64_t off = 0;
    for (NodeId p : *ps) {
      const int64_t c = t.value(p).dim(1);
      if (t.node(p).requires_grad) {
        Tensor& acc = t.ensure_grad(p);
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < c; ++j) acc[i * c + j] += g[i * total + off + j];
      }
      off += c;
    }
  };
  return id;
}

void Tape::backward(NodeId loss) {
  check_exists(loss);
  const Tensor& lv = value(loss);
  if (lv.numel() != 1) {
    throw ContractError("backward expects scalar loss, got " + shape_str(lv));
  }
  if (!nodes_[static_cast<size_t>(loss)].requires_grad) return;
  ensure_grad(loss)[0] = 1.0;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad_ready && n.requires_grad && n.backprop) n.backprop(*this);
  }
}

void Tape::replay() {
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].recompute) nodes_[i].recompute(*this);
  }
}

}  // namespace kamg
