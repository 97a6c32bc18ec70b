#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsa/tensor.hpp"

namespace tsa {

// A learnable tensor. `grad` always has the value's shape and accumulates
// additively; zero_grad() resets it between optimizer steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  int id = -1;

  void zero_grad() { grad.fill(0.0); }
};

// Owns parameters in registration order with stable addresses.
class ParamStore {
 public:
  Parameter& add(std::string name, Tensor init);
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }
  const Parameter* find(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_values() const;
  void zero_grads();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Reduction { mean, sum };

// Row-sum audit hook for softmax outputs (normalization checks run it over
// whole forwards). Thread-local; off by default.
struct SoftmaxAudit {
  bool enabled = false;
  long rows_seen = 0;
  double max_abs_deviation = 0.0;  // max |row sum - 1|
  double min_value = 0.0;
  double max_value = 1.0;
  void reset() { *this = SoftmaxAudit{.enabled = enabled}; }
};
SoftmaxAudit& softmax_audit();

// Reverse-mode tape. Node order is insertion order and doubles as the
// topological order; backward() walks it exactly once in reverse.
//
// Lifecycle policy: build a forward, call backward() at most once, read
// gradients, then discard the graph. Gradients land in graph-local buffers so
// independent graphs may run on different threads; apply_gradients() adds
// them into Parameter.grad (the += accumulation contract).
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var input(Tensor value);
  Var param(Parameter& p);  // repeated calls for the same Parameter share a node

  // Primitives. All validate shapes and output finiteness.
  Var linear(Var x, Var w, Var b);           // y = x W + b, rows collapsed
  Var matmul(Var a, Var b);                  // [m,k] x [k,n]
  Var matmul_nt(Var a, Var b);               // [m,k] x [n,k]^T
  Var add(Var a, Var b);                     // same shape
  Var add_row(Var x, Var b);                 // broadcast rank-1 b over rows
  Var scale(Var x, double c);
  Var softmax_lastdim(Var x);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var gelu(Var x);
  Var concat_lastdim(const std::vector<Var>& xs);
  Var concat_rows(const std::vector<Var>& xs);
  Var slice_rows(Var x, std::size_t begin, std::size_t end);
  Var take_row(Var x, std::size_t row);      // -> [1, cols]
  Var weighted_sum(Var x, Tensor weights);   // scalar helper for tests/probes
  Var cross_entropy(Var logits, const std::vector<int>& targets, Reduction reduction);

  const Tensor& value(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Reverse pass from a scalar root. `seed` scales the whole gradient (the
  // trainer uses 1/batch for mean reduction across per-sample graphs).
  void backward(Var root, double seed = 1.0);
  bool backward_done() const { return backward_done_; }

  // Gradient of a leaf/op output, nullptr if no path to the root touched it.
  const Tensor* grad(Var v) const;
  const Tensor* grad_for(const Parameter& p) const;
  // Parameter.grad += local gradients.
  void apply_gradients() const;

 private:
  struct Node {
    const char* op;
    Tensor value;                          // owned op output (empty for params)
    const Tensor* external = nullptr;      // parameter values are referenced, not copied
    Tensor grad;                           // empty until the backward pass reaches this node
    std::vector<int> inputs;
    std::function<void(Graph&, Node&)> backward;
    Parameter* parameter = nullptr;

    const Tensor& out() const { return external ? *external : value; }
  };

  Var push(const char* op, Tensor value, std::vector<int> inputs,
           std::function<void(Graph&, Node&)> backward);
  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].out(); }
  Tensor& grad_buf(int id);
  const Node& node(Var v) const;

  // deque keeps node references stable while the tape grows, so value()
  // results stay valid for the graph's lifetime.
  std::deque<Node> nodes_;
  std::vector<std::pair<Parameter*, int>> param_nodes_;
  bool backward_done_ = false;

  friend struct GraphTestPeek;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coords_checked = 0;
};

// Central-difference check of d(build())/d(theta) for every coordinate of
// every parameter in `params`. `build` must be deterministic.
GradCheckReport grad_check(ParamStore& params, const std::function<Var(Graph&)>& build,
                           double h = 1e-5, double tol = 1e-4);

// Parameter initializers (uniform Glorot bound for matrices, N(0, 0.02) for
// embeddings and CLS vectors).
class Rng;
Tensor glorot_matrix(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor small_normal(std::vector<std::size_t> shape, Rng& rng, double stddev = 0.02);

}  // namespace tsa
