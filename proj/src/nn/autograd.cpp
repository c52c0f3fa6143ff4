#include "latte/nn/autograd.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "latte/error.hpp"
#include "latte/nn/parameters.hpp"

namespace latte::nn {

namespace {

std::string shape_of(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shapes " + shape_of(a.value()) + " and " + shape_of(b.value()) + " differ");
}

/// Numerically stable row-wise log-softmax.
Matrix log_softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ContractViolation("mixing vars from different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, const std::vector<Var>& parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ContractViolation("mixing vars from different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward needs a 1x1 loss, got " + shape_of(loss.value()));
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, i);
    if (node.param != nullptr) {
      if (node.param->grad.size() == 0)
        node.param->grad = node.grad;
      else
        node.param->grad += node.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_of(a.value()) + " times " + shape_of(b.value()));
  Matrix out = a.value() * b.value();
  return a.tape().push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().push(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a, t.grad_of(self));
    t.accumulate(b, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().push(a.value() - b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a, t.grad_of(self));
    t.accumulate(b, -t.grad_of(self));
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: cannot broadcast " + shape_of(row.value()) + " over " + shape_of(a.value()));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape().push(std::move(out), {a, row}, [a, row](Tape& t, std::size_t self) {
    t.accumulate(a, t.grad_of(self));
    if (t.requires_grad(row)) t.accumulate(row, t.grad_of(self).colwise().sum());
  });
}

Var scale(Var a, double factor) {
  return a.tape().push(a.value() * factor, {a},
                       [a, factor](Tape& t, std::size_t self) { t.accumulate(a, t.grad_of(self) * factor); });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().push(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::tanh(c * (v + k * v * v * v)));
  }
  return a.tape().push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& x = a.value();
    const auto& g = t.grad_of(self);
    Matrix dx(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double th = std::tanh(c * (v + k * v * v * v));
      const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * c * (1.0 + 3.0 * k * v * v);
      dx.data()[i] = g.data()[i] * d;
    }
    t.accumulate(a, dx);
  });
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  const Matrix& x = a.value();
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n)
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
  auto normalized = std::make_shared<Matrix>(x.rows(), n);
  auto inv_std = std::make_shared<Vector>(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    (*inv_std)[r] = 1.0 / std::sqrt(var + eps);
    normalized->row(r) = (x.row(r).array() - mu) * (*inv_std)[r];
  }
  Matrix out = (normalized->array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return a.tape().push(std::move(out), {a, gain, bias}, [a, gain, bias, normalized, inv_std](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const Matrix& xhat = *normalized;
    if (t.requires_grad(gain)) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
    if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
    if (t.requires_grad(a)) {
      Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
      Matrix dx(xhat.rows(), xhat.cols());
      for (Index r = 0; r < xhat.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(xhat.cols());
        dx.row(r) = (*inv_std)[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      t.accumulate(a, dx);
    }
  });
}

Var log_softmax_rows(Var a) {
  Matrix out = log_softmax(a.value());
  auto probs = std::make_shared<Matrix>(out.array().exp());
  return a.tape().push(std::move(out), {a}, [a, probs](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    Matrix dx = g - (probs->array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(a, dx);
  });
}

Var softmax_rows(Var a) {
  Matrix out = log_softmax(a.value()).array().exp();
  auto probs = std::make_shared<Matrix>(out);
  return a.tape().push(std::move(out), {a}, [a, probs](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const Matrix& s = *probs;
    Vector dots = g.cwiseProduct(s).rowwise().sum();
    Matrix dx = s.array() * (g.array().colwise() - dots.array());
    t.accumulate(a, dx);
  });
}

Var gather_rows(Var a, std::vector<Index> index) {
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(index[i]);
  }
  auto idx = std::make_shared<std::vector<Index>>(std::move(index));
  return a.tape().push(std::move(out), {a}, [a, idx](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    Matrix dx = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) dx.row((*idx)[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, dx);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != parts.front().cols()) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, parts.front().cols());
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape().push(std::move(out), parts, [parts](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    Index at = 0;
    for (const auto& p : parts) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw DomainError("dropout rate must be below 1");
  Matrix mask(a.rows(), a.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(a, a.tape().constant(std::move(mask)));
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().push(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), t.grad_of(self)(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var kl_rows(Var teacher_logits, Var student_logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be positive");
  require_same_shape(teacher_logits, student_logits, "kl_rows");
  auto log_p = std::make_shared<Matrix>(log_softmax(teacher_logits.value() / tau));
  auto log_q = std::make_shared<Matrix>(log_softmax(student_logits.value() / tau));
  Matrix out(log_p->rows(), 1);
  for (Index r = 0; r < out.rows(); ++r)
    out(r, 0) = (log_p->row(r).array().exp() * (log_p->row(r) - log_q->row(r)).array()).sum();
  return teacher_logits.tape().push(
      std::move(out), {teacher_logits, student_logits},
      [teacher_logits, student_logits, tau, log_p, log_q](Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        const Matrix p = log_p->array().exp();
        if (t.requires_grad(student_logits)) {
          const Matrix q = log_q->array().exp();
          t.accumulate(student_logits, ((q - p).array().colwise() * g.col(0).array()) / tau);
        }
        if (t.requires_grad(teacher_logits)) {
          const Matrix d = *log_p - *log_q;
          Vector centre = p.cwiseProduct(d).rowwise().sum();
          Matrix dt = p.array() * (d.array().colwise() - centre.array());
          t.accumulate(teacher_logits, (dt.array().colwise() * g.col(0).array()) / tau);
        }
      });
}

Var nll_rows(Var logits, std::vector<Index> targets, double floor) {
  if (static_cast<Index>(targets.size()) != logits.rows()) throw ShapeError("nll_rows: one target per row required");
  auto log_p = std::make_shared<Matrix>(log_softmax(logits.value()));
  const double log_floor = std::log(floor);
  Matrix out(logits.rows(), 1);
  auto clamped = std::make_shared<std::vector<bool>>(targets.size());
  for (Index r = 0; r < out.rows(); ++r) {
    const Index y = targets[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("nll_rows: target index out of range");
    const double lp = (*log_p)(r, y);
    (*clamped)[static_cast<std::size_t>(r)] = lp < log_floor;
    out(r, 0) = -std::max(lp, log_floor);
  }
  auto ys = std::make_shared<std::vector<Index>>(std::move(targets));
  return logits.tape().push(std::move(out), {logits}, [logits, log_p, ys, clamped](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    Matrix dx = log_p->array().exp();
    for (Index r = 0; r < dx.rows(); ++r) {
      if ((*clamped)[static_cast<std::size_t>(r)]) {
        dx.row(r).setZero();
        continue;
      }
      dx(r, (*ys)[static_cast<std::size_t>(r)]) -= 1.0;
      dx.row(r) *= g(r, 0);
    }
    t.accumulate(logits, dx);
  });
}

Var squared_error_rows(Var predictions, const Matrix& targets) {
  if (targets.rows() != predictions.rows() || targets.cols() != predictions.cols())
    throw ShapeError("squared_error_rows: target shape mismatch");
  auto diff = std::make_shared<Matrix>(predictions.value() - targets);
  Matrix out = diff->array().square().rowwise().sum();
  return predictions.tape().push(std::move(out), {predictions}, [predictions, diff](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    t.accumulate(predictions, 2.0 * (diff->array().colwise() * g.col(0).array()));
  });
}

AttentionResult attention(Var queries, Var keys, Var values, const std::vector<AttentionSegment>& segments,
                          int heads) {
  const Matrix& Q = queries.value();
  const Matrix& K = keys.value();
  const Matrix& V = values.value();
  if (heads < 1) throw ShapeError("attention needs at least one head");
  if (Q.cols() != K.cols()) throw ShapeError("attention: query width " + std::to_string(Q.cols()) +
                                             " differs from key width " + std::to_string(K.cols()));
  if (K.rows() != V.rows()) throw ShapeError("attention: one value row per key row required");
  if (Q.cols() % heads != 0 || V.cols() % heads != 0)
    throw ShapeError("attention: width not divisible by head count");
  const Index dk = Q.cols() / heads;
  const Index dv = V.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  auto weights = std::make_shared<std::vector<Matrix>>();
  weights->reserve(segments.size() * static_cast<std::size_t>(heads));
  Matrix out = Matrix::Zero(Q.rows(), V.cols());
  for (const auto& s : segments) {
    if (s.kv_count < 1) throw ContractViolation("attention segment has no keys");
    if (s.q_begin < 0 || s.q_begin + s.q_count > Q.rows() || s.kv_begin < 0 || s.kv_begin + s.kv_count > K.rows())
      throw ShapeError("attention segment out of range");
    for (int h = 0; h < heads; ++h) {
      Matrix scores = Q.block(s.q_begin, h * dk, s.q_count, dk) * K.block(s.kv_begin, h * dk, s.kv_count, dk).transpose();
      scores *= inv_sqrt;
      Matrix p = log_softmax(scores).array().exp();
      out.block(s.q_begin, h * dv, s.q_count, dv).noalias() = p * V.block(s.kv_begin, h * dv, s.kv_count, dv);
      weights->push_back(std::move(p));
    }
  }

  auto segs = std::make_shared<std::vector<AttentionSegment>>(segments);
  Var result = queries.tape().push(
      std::move(out), {queries, keys, values},
      [queries, keys, values, segs, weights, heads, dk, dv, inv_sqrt](Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        const Matrix& Q = queries.value();
        const Matrix& K = keys.value();
        const Matrix& V = values.value();
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        std::size_t w = 0;
        for (const auto& s : *segs) {
          for (int h = 0; h < heads; ++h, ++w) {
            const Matrix& p = (*weights)[w];
            const auto dO = g.block(s.q_begin, h * dv, s.q_count, dv);
            dV.block(s.kv_begin, h * dv, s.kv_count, dv).noalias() += p.transpose() * dO;
            Matrix dP = dO * V.block(s.kv_begin, h * dv, s.kv_count, dv).transpose();
            Vector dots = dP.cwiseProduct(p).rowwise().sum();
            Matrix dS = p.array() * (dP.array().colwise() - dots.array());
            dS *= inv_sqrt;
            dQ.block(s.q_begin, h * dk, s.q_count, dk).noalias() += dS * K.block(s.kv_begin, h * dk, s.kv_count, dk);
            dK.block(s.kv_begin, h * dk, s.kv_count, dk).noalias() +=
                dS.transpose() * Q.block(s.q_begin, h * dk, s.q_count, dk);
          }
        }
        if (t.requires_grad(queries)) t.accumulate(queries, dQ);
        if (t.requires_grad(keys)) t.accumulate(keys, dK);
        if (t.requires_grad(values)) t.accumulate(values, dV);
      });
  return {result, weights};
}

}  // namespace latte::nn
