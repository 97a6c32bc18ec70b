#include "tsa/graph.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "tsa/kernels.hpp"
#include "tsa/rng.hpp"

namespace tsa {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

}  // namespace

Parameter& ParamStore::add(std::string name, Tensor init) {
  init.require_finite(("Parameter " + name).c_str());
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor(init.shape());
  p->value = std::move(init);
  p->id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

SoftmaxAudit& softmax_audit() {
  thread_local SoftmaxAudit audit;
  return audit;
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
    throw std::invalid_argument("Graph: invalid Var");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Graph::push(const char* op, Tensor value, std::vector<int> inputs,
                std::function<void(Graph&, Node&)> backward) {
  if (backward_done_) throw std::logic_error("Graph: cannot extend a graph after backward()");
  value.require_finite(op);
  Node nd;
  nd.op = op;
  nd.value = std::move(value);
  nd.inputs = std::move(inputs);
  nd.backward = std::move(backward);
  nodes_.push_back(std::move(nd));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  Node& nd = nodes_[static_cast<std::size_t>(id)];
  if (nd.grad.empty()) nd.grad = Tensor(nd.out().shape());
  return nd.grad;
}

Var Graph::input(Tensor value) { return push("input", std::move(value), {}, nullptr); }

Var Graph::param(Parameter& p) {
  for (const auto& [param, id] : param_nodes_) {
    if (param == &p) return Var{id};
  }
  if (backward_done_) throw std::logic_error("Graph: cannot extend a graph after backward()");
  Node nd;
  nd.op = "param";
  nd.external = &p.value;  // no copy; Parameters are immutable during a pass
  nd.parameter = &p;
  nodes_.push_back(std::move(nd));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace_back(&p, id);
  return Var{id};
}

Var Graph::linear(Var xv, Var wv, Var bv) {
  const Tensor& x = node(xv).out();
  const Tensor& w = node(wv).out();
  const Tensor& b = node(bv).out();
  if (w.rank() != 2) shape_error("linear", "W must be rank 2, got " + w.shape_str());
  const std::size_t m = w.extent(0), n = w.extent(1);
  if (x.cols() != m) {
    shape_error("linear", "inner dims disagree: x " + x.shape_str() + " vs W " + w.shape_str());
  }
  if (b.rank() != 1 || b.size() != n) {
    shape_error("linear", "bias must be rank-1 of size " + std::to_string(n));
  }
  const std::size_t rows = x.rows();
  std::vector<std::size_t> out_shape = x.shape();
  out_shape.back() = n;
  Tensor y(out_shape);
  kernels::matmul_nn(x.data(), w.data(), y.data(), rows, m, n, false);
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::axpy(1.0, b.data(), y.data() + r * n, n);
  }
  const int xi = xv.id, wi = wv.id, bi = bv.id;
  return push("linear", std::move(y), {xi, wi, bi}, [xi, wi, bi, rows, m, n](Graph& g, Node& self) {
    const Tensor& dy = self.grad;
    kernels::matmul_nt(dy.data(), g.val(wi).data(), g.grad_buf(xi).data(), rows, n, m, true);
    kernels::matmul_tn(g.val(xi).data(), dy.data(), g.grad_buf(wi).data(), m, rows, n, true);
    Tensor& db = g.grad_buf(bi);
    for (std::size_t r = 0; r < rows; ++r) {
      kernels::axpy(1.0, dy.data() + r * n, db.data(), n);
    }
  });
}

Var Graph::matmul(Var av, Var bv) {
  const Tensor& a = node(av).out();
  const Tensor& b = node(bv).out();
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    shape_error("matmul", a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor y({m, n});
  kernels::matmul_nn(a.data(), b.data(), y.data(), m, k, n, false);
  const int ai = av.id, bi = bv.id;
  return push("matmul", std::move(y), {ai, bi}, [ai, bi, m, k, n](Graph& g, Node& self) {
    const Tensor& dy = self.grad;
    kernels::matmul_nt(dy.data(), g.val(bi).data(), g.grad_buf(ai).data(), m, n, k, true);
    kernels::matmul_tn(g.val(ai).data(), dy.data(), g.grad_buf(bi).data(), k, m, n, true);
  });
}

Var Graph::matmul_nt(Var av, Var bv) {
  const Tensor& a = node(av).out();
  const Tensor& b = node(bv).out();
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1)) {
    shape_error("matmul_nt", a.shape_str() + " x " + b.shape_str() + "^T");
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  Tensor y({m, n});
  kernels::matmul_nt(a.data(), b.data(), y.data(), m, k, n, false);
  const int ai = av.id, bi = bv.id;
  return push("matmul_nt", std::move(y), {ai, bi}, [ai, bi, m, k, n](Graph& g, Node& self) {
    const Tensor& dy = self.grad;
    kernels::matmul_nn(dy.data(), g.val(bi).data(), g.grad_buf(ai).data(), m, n, k, true);
    kernels::matmul_tn(dy.data(), g.val(ai).data(), g.grad_buf(bi).data(), n, m, k, true);
  });
}

Var Graph::add(Var av, Var bv) {
  const Tensor& a = node(av).out();
  const Tensor& b = node(bv).out();
  if (!a.same_shape(b)) shape_error("add", a.shape_str() + " vs " + b.shape_str());
  Tensor y(a.shape());
  kernels::add(a.data(), b.data(), y.data(), a.size());
  const int ai = av.id, bi = bv.id;
  return push("add", std::move(y), {ai, bi}, [ai, bi](Graph& g, Node& self) {
    kernels::axpy(1.0, self.grad.data(), g.grad_buf(ai).data(), self.grad.size());
    kernels::axpy(1.0, self.grad.data(), g.grad_buf(bi).data(), self.grad.size());
  });
}

Var Graph::add_row(Var xv, Var bv) {
  const Tensor& x = node(xv).out();
  const Tensor& b = node(bv).out();
  const std::size_t n = x.cols(), rows = x.rows();
  if (b.rank() != 1 || b.size() != n) {
    shape_error("add_row", "broadcast vector must be rank-1 of size " + std::to_string(n));
  }
  Tensor y = x;
  for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, b.data(), y.data() + r * n, n);
  const int xi = xv.id, bi = bv.id;
  return push("add_row", std::move(y), {xi, bi}, [xi, bi, rows, n](Graph& g, Node& self) {
    kernels::axpy(1.0, self.grad.data(), g.grad_buf(xi).data(), self.grad.size());
    Tensor& db = g.grad_buf(bi);
    for (std::size_t r = 0; r < rows; ++r) {
      kernels::axpy(1.0, self.grad.data() + r * n, db.data(), n);
    }
  });
}

Var Graph::scale(Var xv, double c) {
  const Tensor& x = node(xv).out();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i];
  const int xi = xv.id;
  return push("scale", std::move(y), {xi}, [xi, c](Graph& g, Node& self) {
    kernels::axpy(c, self.grad.data(), g.grad_buf(xi).data(), self.grad.size());
  });
}

Var Graph::softmax_lastdim(Var xv) {
  const Tensor& x = node(xv).out();
  if (x.cols() < 1) shape_error("softmax_lastdim", "empty last dim");
  Tensor y(x.shape());
  const std::size_t rows = x.rows(), cols = x.cols();
  kernels::softmax_rows(x.data(), y.data(), rows, cols);
  SoftmaxAudit& audit = softmax_audit();
  if (audit.enabled) {
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const double v = y[r * cols + j];
        sum += v;
        audit.min_value = std::min(audit.min_value, v);
        audit.max_value = std::max(audit.max_value, v);
      }
      audit.max_abs_deviation = std::max(audit.max_abs_deviation, std::abs(sum - 1.0));
      ++audit.rows_seen;
    }
  }
  const int xi = xv.id;
  return push("softmax_lastdim", std::move(y), {xi}, [xi, rows, cols](Graph& g, Node& self) {
    kernels::softmax_rows_backward(self.value.data(), self.grad.data(), g.grad_buf(xi).data(),
                                   rows, cols);
  });
}

Var Graph::layer_norm(Var xv, Var gv, Var bv, double eps) {
  const Tensor& x = node(xv).out();
  const Tensor& gamma = node(gv).out();
  const Tensor& beta = node(bv).out();
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gamma.rank() != 1 || gamma.size() != cols || beta.rank() != 1 || beta.size() != cols) {
    shape_error("layer_norm", "gamma/beta must be rank-1 of size " + std::to_string(cols));
  }
  Tensor y(x.shape());
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows, 0.0);
  kernels::layer_norm_rows(x.data(), gamma.data(), beta.data(), y.data(), xhat->data(),
                           inv_std->data(), rows, cols, eps);
  const int xi = xv.id, gi = gv.id, bi = bv.id;
  return push("layer_norm", std::move(y), {xi, gi, bi},
              [xi, gi, bi, rows, cols, xhat, inv_std](Graph& g, Node& self) {
                kernels::layer_norm_rows_backward(
                    xhat->data(), inv_std->data(), g.val(gi).data(), self.grad.data(),
                    g.grad_buf(xi).data(), g.grad_buf(gi).data(), g.grad_buf(bi).data(), rows,
                    cols);
              });
}

Var Graph::gelu(Var xv) {
  const Tensor& x = node(xv).out();
  Tensor y(x.shape());
  kernels::gelu(x.data(), y.data(), x.size());
  const int xi = xv.id;
  return push("gelu", std::move(y), {xi}, [xi](Graph& g, Node& self) {
    kernels::gelu_backward(g.val(xi).data(), self.grad.data(), g.grad_buf(xi).data(),
                           self.grad.size());
  });
}

Var Graph::concat_lastdim(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("concat_lastdim", "no inputs");
  const Tensor& first = node(xs[0]).out();
  std::vector<std::size_t> lead(first.shape().begin(), first.shape().end() - 1);
  std::size_t total_cols = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (Var v : xs) {
    const Tensor& t = node(v).out();
    std::vector<std::size_t> l(t.shape().begin(), t.shape().end() - 1);
    if (l != lead) {
      shape_error("concat_lastdim", "leading shapes differ: " + first.shape_str() + " vs " +
                                        t.shape_str());
    }
    total_cols += t.cols();
    ids.push_back(v.id);
    widths.push_back(t.cols());
  }
  std::vector<std::size_t> out_shape = lead;
  out_shape.push_back(total_cols);
  Tensor y(out_shape);
  const std::size_t rows = y.rows();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Tensor& t = val(ids[i]);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < widths[i]; ++j) {
        y[r * total_cols + offset + j] = t[r * widths[i] + j];
      }
    }
    offset += widths[i];
  }
  return push("concat_lastdim", std::move(y), ids,
              [ids, widths, rows, total_cols](Graph& g, Node& self) {
                std::size_t off = 0;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                  Tensor& dx = g.grad_buf(ids[i]);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < widths[i]; ++j) {
                      dx[r * widths[i] + j] += self.grad[r * total_cols + off + j];
                    }
                  }
                  off += widths[i];
                }
              });
}

Var Graph::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("concat_rows", "no inputs");
  const std::size_t cols = node(xs[0]).out().cols();
  std::size_t total_rows = 0;
  std::vector<int> ids;
  std::vector<std::size_t> heights;
  for (Var v : xs) {
    const Tensor& t = node(v).out();
    if (t.rank() != 2 || t.cols() != cols) {
      shape_error("concat_rows", "inputs must be rank-2 with equal cols, got " + t.shape_str());
    }
    total_rows += t.extent(0);
    ids.push_back(v.id);
    heights.push_back(t.extent(0));
  }
  Tensor y({total_rows, cols});
  std::size_t row = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Tensor& t = val(ids[i]);
    for (std::size_t j = 0; j < t.size(); ++j) y[row * cols + j] = t[j];
    row += heights[i];
  }
  return push("concat_rows", std::move(y), ids, [ids, heights, cols](Graph& g, Node& self) {
    std::size_t row = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Tensor& dx = g.grad_buf(ids[i]);
      for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += self.grad[row * cols + j];
      row += heights[i];
    }
  });
}

Var Graph::slice_rows(Var xv, std::size_t begin, std::size_t end) {
  const Tensor& x = node(xv).out();
  if (x.rank() != 2 || begin >= end || end > x.extent(0)) {
    shape_error("slice_rows", "invalid range on " + x.shape_str());
  }
  const std::size_t cols = x.cols();
  Tensor y({end - begin, cols});
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = x[begin * cols + j];
  const int xi = xv.id;
  return push("slice_rows", std::move(y), {xi}, [xi, begin, cols](Graph& g, Node& self) {
    Tensor& dx = g.grad_buf(xi);
    for (std::size_t j = 0; j < self.grad.size(); ++j) {
      dx[begin * cols + j] += self.grad[j];
    }
  });
}

Var Graph::take_row(Var xv, std::size_t row) {
  const Tensor& x = node(xv).out();
  if (x.rank() != 2 || row >= x.extent(0)) {
    shape_error("take_row", "row " + std::to_string(row) + " out of range for " + x.shape_str());
  }
  return slice_rows(xv, row, row + 1);
}

Var Graph::weighted_sum(Var xv, Tensor weights) {
  const Tensor& x = node(xv).out();
  if (weights.size() != x.size()) shape_error("weighted_sum", "weight size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * weights[i];
  const int xi = xv.id;
  auto w = std::make_shared<Tensor>(std::move(weights));
  return push("weighted_sum", Tensor::scalar(acc), {xi}, [xi, w](Graph& g, Node& self) {
    kernels::axpy(self.grad[0], w->data(), g.grad_buf(xi).data(), w->size());
  });
}

Var Graph::cross_entropy(Var logits_v, const std::vector<int>& targets, Reduction reduction) {
  const Tensor& z = node(logits_v).out();
  if (z.rank() != 2) shape_error("cross_entropy", "logits must be rank 2, got " + z.shape_str());
  const std::size_t batch = z.extent(0), classes = z.extent(1);
  if (targets.size() != batch) {
    shape_error("cross_entropy", "targets length " + std::to_string(targets.size()) +
                                     " vs batch " + std::to_string(batch));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
  }
  auto probs = std::make_shared<Tensor>(z.shape());
  kernels::softmax_rows(z.data(), probs->data(), batch, classes);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const double* zi = z.data() + i * classes;
    double mx = zi[0];
    for (std::size_t j = 1; j < classes; ++j) mx = zi[j] > mx ? zi[j] : mx;
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(zi[j] - mx);
    total += mx + std::log(sum) - zi[static_cast<std::size_t>(targets[i])];
  }
  const double scale = reduction == Reduction::mean ? 1.0 / static_cast<double>(batch) : 1.0;
  const int zi_id = logits_v.id;
  auto tcopy = std::make_shared<std::vector<int>>(targets);
  return push("cross_entropy", Tensor::scalar(total * scale), {zi_id},
              [zi_id, probs, tcopy, batch, classes, scale](Graph& g, Node& self) {
                Tensor& dz = g.grad_buf(zi_id);
                const double d = self.grad[0] * scale;
                for (std::size_t i = 0; i < batch; ++i) {
                  for (std::size_t j = 0; j < classes; ++j) {
                    const double onehot =
                        j == static_cast<std::size_t>((*tcopy)[i]) ? 1.0 : 0.0;
                    dz[i * classes + j] += d * ((*probs)[i * classes + j] - onehot);
                  }
                }
              });
}

const Tensor& Graph::value(Var v) const { return node(v).out(); }

void Graph::backward(Var root, double seed) {
  if (backward_done_) throw std::logic_error("Graph::backward: graph already consumed");
  const Node& r = node(root);
  if (r.out().size() != 1) {
    throw std::invalid_argument("Graph::backward: root must be scalar, got shape " +
                                r.out().shape_str());
  }
  grad_buf(root.id)[0] = seed;
  for (int i = root.id; i >= 0; --i) {
    Node& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.grad.empty() || !nd.backward) continue;
    nd.backward(*this, nd);
  }
  backward_done_ = true;
}

const Tensor* Graph::grad(Var v) const {
  const Node& nd = node(v);
  return nd.grad.empty() ? nullptr : &nd.grad;
}

const Tensor* Graph::grad_for(const Parameter& p) const {
  for (const auto& [param, id] : param_nodes_) {
    if (param == &p) {
      const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
      return g.empty() ? nullptr : &g;
    }
  }
  return nullptr;
}

void Graph::apply_gradients() const {
  for (const auto& [param, id] : param_nodes_) {
    const Tensor& g = nodes_[static_cast<std::size_t>(id)].grad;
    if (g.empty()) continue;
    kernels::axpy(1.0, g.data(), param->grad.data(), g.size());
  }
}

GradCheckReport grad_check(ParamStore& params, const std::function<Var(Graph&)>& build, double h,
                           double tol) {
  auto eval = [&]() -> double {
    Graph g;
    Var root = build(g);
    const Tensor& v = g.value(root);
    if (v.size() != 1) throw std::invalid_argument("grad_check: f must be scalar");
    return v[0];
  };

  Graph g0;
  Var root = build(g0);
  if (g0.value(root).size() != 1) throw std::invalid_argument("grad_check: f must be scalar");
  g0.backward(root);

  GradCheckReport report;
  for (auto& p : params) {
    const Tensor* analytic = g0.grad_for(*p);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double f_plus = eval();
      p->value[i] = saved - h;
      const double f_minus = eval();
      p->value[i] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw std::runtime_error("grad_check: non-finite f near parameter " + p->name);
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic ? (*analytic)[i] : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name;
        report.worst_coord = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < tol;
  return report;
}

Tensor glorot_matrix(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

Tensor small_normal(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

}  // namespace tsa
