#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "latte/rng.hpp"
#include "latte/tensor.hpp"

namespace latte::nn {

struct Parameter;
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records a computation in creation order; backward() replays it in reverse,
/// which is a valid topological order. Parameter leaves accumulate their
/// gradient into Parameter::grad.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 `loss` and propagates.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Gradient of a node after backward(); empty when nothing reached it.
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var push(Matrix value, const std::vector<Var>& parents, BackwardFn backward);
  const Matrix& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    auto& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0)
      node.grad = g;
    else
      node.grad += g;
  }
  template <typename Derived>
  void accumulate(Var v, const Eigen::ArrayBase<Derived>& g) {
    accumulate(v, g.matrix());
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise and linear-algebra ops ------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Adds a 1 x c row to every row of `a`.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
/// Elementwise product.
Var mul(Var a, Var b);
/// Tanh-approximated GELU.
Var gelu(Var a);
/// Row-wise layer normalization with 1 x c gain and bias.
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);
Var log_softmax_rows(Var a);
Var softmax_rows(Var a);
/// out.row(i) = a.row(index[i]); gradient scatter-adds.
Var gather_rows(Var a, std::vector<Index> index);
Var concat_rows(const std::vector<Var>& parts);
/// Inverted dropout with a mask drawn from `rng`; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);

// ---- reductions and losses ---------------------------------------------------

Var sum(Var a);
Var mean(Var a);
/// Per-row KL(softmax(teacher/tau) || softmax(student/tau)) as an R x 1 column.
Var kl_rows(Var teacher_logits, Var student_logits, double tau);
/// Per-row -log max(softmax(logits)[target], floor) as an R x 1 column.
Var nll_rows(Var logits, std::vector<Index> targets, double floor = 1e-12);
/// Per-row sum of squared differences to a constant target, R x 1.
Var squared_error_rows(Var predictions, const Matrix& targets);

// ---- attention ---------------------------------------------------------------

/// Query rows [q_begin, q_begin + q_count) attend to key/value rows
/// [kv_begin, kv_begin + kv_count). Segments are independent.
struct AttentionSegment {
  Index q_begin = 0;
  Index q_count = 0;
  Index kv_begin = 0;
  Index kv_count = 0;
};

struct AttentionResult {
  Var output;
  /// Softmax weights, one q_count x kv_count matrix per (segment, head),
  /// stored segment-major.
  std::shared_ptr<std::vector<Matrix>> weights;
};

/// Multi-head scaled dot-product attention without projections. Columns are
/// split into `heads` equal slices; scores are scaled by 1/sqrt(slice width).
AttentionResult attention(Var queries, Var keys, Var values, const std::vector<AttentionSegment>& segments,
                          int heads);

}  // namespace latte::nn
