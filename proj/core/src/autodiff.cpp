#include "s2r/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "s2r/error.hpp"

namespace s2r::ad {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatR>;
using MapCM = Eigen::Map<const MatR>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

MapCV vec(const Tensor& t) { return MapCV(t.data(), static_cast<Eigen::Index>(t.size())); }
MapV vec(Tensor& t) { return MapV(t.data(), static_cast<Eigen::Index>(t.size())); }
MapCM mat(const Tensor& t) {
  return MapCM(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapM mat(Tensor& t) { return MapM(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}
[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& why) {
  throw ShapeError(std::string(op) + ": " + why + " (shape " + a.shape_str() + ")");
}

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || a.tape() != b.tape()) throw Error("operands recorded on different tapes");
  return *a.tape();
}

template <typename Fn>
Var unary_map(const Var& a, Fn&& fn, Tape::BackwardFn back) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = fn(v);
  return a.tape()->record(std::move(out), {a.id()}, std::move(back));
}

}  // namespace

// --- Tensor -------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("tensors must have rank 1 or 2");
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  data_.assign(n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) throw ShapeError("tensors must have rank 1 or 2");
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != data_.size()) throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_str());
}

Tensor Tensor::from(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

// --- Parameters ---------------------------------------------------------

Parameter& ParameterSet::add(const std::string& name, std::vector<std::size_t> shape) {
  if (params_.count(name)) throw Error("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  auto& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return *it->second;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  for (auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  for (const auto& [_, p] : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParameterSet::trainable() {
  std::vector<Parameter*> out;
  for (auto& [_, p] : params_)
    if (p->trainable) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, p] : params_) p->grad.fill(0.0);
}

void init_uniform(Parameter& p, Rng& rng, double lo, double hi) {
  for (auto& v : p.value.values()) v = lo + (hi - lo) * uniform01(rng);
}

// --- Var / Tape ---------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar " + v.shape_str());
  return v[0];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = p.trainable;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [&](int p) { return requires_grad(p); });
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw Error("backward: loss is not on this tape");
  if (loss.value().size() != 1) throw ShapeError("backward: loss must be scalar, got " + loss.value().shape_str());
  grad_buffer(loss.id())[0] += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.param) {
      vec(n.param->grad) += vec(n.grad);
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// --- Ops ----------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("add", a.value(), b.value());
  Tensor out = a.value();
  vec(out) += vec(b.value());
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    if (t.requires_grad(ia)) vec(t.grad_buffer(ia)) += vec(t.grad(self));
    if (t.requires_grad(ib)) vec(t.grad_buffer(ib)) += vec(t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("sub", a.value(), b.value());
  Tensor out = a.value();
  vec(out) -= vec(b.value());
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    if (t.requires_grad(ia)) vec(t.grad_buffer(ia)) += vec(t.grad(self));
    if (t.requires_grad(ib)) vec(t.grad_buffer(ib)) -= vec(t.grad(self));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.shape() != b.shape()) shape_error("mul", a.value(), b.value());
  Tensor out = a.value();
  vec(out).array() *= vec(b.value()).array();
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto g = vec(t.grad(self));
    if (t.requires_grad(ia)) vec(t.grad_buffer(ia)).array() += g.array() * vec(t.value(ib)).array();
    if (t.requires_grad(ib)) vec(t.grad_buffer(ib)).array() += g.array() * vec(t.value(ia)).array();
  });
}

Var scale(const Var& a, double c) { return affine(a, c, 0.0); }

Var affine(const Var& a, double alpha, double beta) {
  Tensor out = a.value();
  vec(out).array() = alpha * vec(out).array() + beta;
  const int ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, alpha](Tape& t, int self) {
    vec(t.grad_buffer(ia)) += alpha * vec(t.grad(self));
  });
}

Var scale_by(const Var& a, const Var& s) {
  Tape& t = same_tape(a, s);
  if (s.size() != 1) shape_error("scale_by", s.value(), "scale must be a scalar");
  Tensor out = a.value();
  vec(out) *= s.value()[0];
  const int ia = a.id(), is = s.id();
  return t.record(std::move(out), {ia, is}, [ia, is](Tape& t, int self) {
    const auto g = vec(t.grad(self));
    if (t.requires_grad(ia)) vec(t.grad_buffer(ia)) += t.value(is)[0] * g;
    if (t.requires_grad(is)) t.grad_buffer(is)[0] += g.dot(vec(t.value(ia)));
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || A.cols() != B.rows()) shape_error("matmul", A, B);
  const int ia = a.id(), ib = b.id();
  if (B.rank() == 1) {
    Tensor out({A.rows()});
    vec(out).noalias() = mat(A) * vec(B);
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
      const auto g = vec(t.grad(self));
      if (t.requires_grad(ia)) mat(t.grad_buffer(ia)).noalias() += g * vec(t.value(ib)).transpose();
      if (t.requires_grad(ib)) vec(t.grad_buffer(ib)).noalias() += mat(t.value(ia)).transpose() * g;
    });
  }
  Tensor out({A.rows(), B.cols()});
  mat(out).noalias() = mat(A) * mat(B);
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const auto G = mat(t.grad(self));
    if (t.requires_grad(ia)) mat(t.grad_buffer(ia)).noalias() += G * mat(t.value(ib)).transpose();
    if (t.requires_grad(ib)) mat(t.grad_buffer(ib)).noalias() += mat(t.value(ia)).transpose() * G;
  });
}

Var matvec_t(const Var& a, const Var& x) {
  Tape& t = same_tape(a, x);
  const Tensor& A = a.value();
  const Tensor& X = x.value();
  if (A.rank() != 2 || X.rank() != 1 || A.rows() != X.size()) shape_error("matvec_t", A, X);
  Tensor out({A.cols()});
  vec(out).noalias() = mat(A).transpose() * vec(X);
  const int ia = a.id(), ix = x.id();
  return t.record(std::move(out), {ia, ix}, [ia, ix](Tape& t, int self) {
    const auto g = vec(t.grad(self));
    if (t.requires_grad(ia)) mat(t.grad_buffer(ia)).noalias() += vec(t.value(ix)) * g.transpose();
    if (t.requires_grad(ix)) vec(t.grad_buffer(ix)).noalias() += mat(t.value(ia)) * g;
  });
}

Var dot(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.value().rank() != 1 || a.shape() != b.shape()) shape_error("dot", a.value(), b.value());
  Tensor out = Tensor::scalar(vec(a.value()).dot(vec(b.value())));
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const double g = t.grad(self)[0];
    if (t.requires_grad(ia)) vec(t.grad_buffer(ia)) += g * vec(t.value(ib));
    if (t.requires_grad(ib)) vec(t.grad_buffer(ib)) += g * vec(t.value(ia));
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = *parts.front().tape();
  std::vector<int> ids;
  std::vector<double> data;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error("operands recorded on different tapes");
    if (p.value().rank() != 1) shape_error("concat", p.value(), "inputs must be rank 1");
    ids.push_back(p.id());
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  return t.record(Tensor::from(std::move(data)), ids, [ids](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& gb = t.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) gb[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var stack(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  Tape& t = *rows.front().tape();
  const std::size_t d = rows.front().size();
  std::vector<int> ids;
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.tape() != &t) throw Error("operands recorded on different tapes");
    if (r.value().rank() != 1 || r.size() != d) shape_error("stack", rows.front().value(), r.value());
    ids.push_back(r.id());
    data.insert(data.end(), r.value().values().begin(), r.value().values().end());
  }
  return t.record(Tensor({rows.size(), d}, std::move(data)), ids, [ids, d](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (!t.requires_grad(ids[r])) continue;
      Tensor& gb = t.grad_buffer(ids[r]);
      for (std::size_t i = 0; i < d; ++i) gb[i] += g[r * d + i];
    }
  });
}

Var row(const Var& matrix, std::size_t r) {
  const Tensor& M = matrix.value();
  if (M.rank() != 2 || r >= M.rows()) shape_error("row", M, "row " + std::to_string(r) + " out of range");
  const std::size_t d = M.cols();
  std::vector<double> data(M.data() + r * d, M.data() + (r + 1) * d);
  const int im = matrix.id();
  return matrix.tape()->record(Tensor::from(std::move(data)), {im}, [im, r, d](Tape& t, int self) {
    Tensor& gb = t.grad_buffer(im);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < d; ++i) gb[r * d + i] += g[i];
  });
}

Var embedding(const Var& table, int id) {
  if (id < 0) throw ShapeError("embedding: negative id");
  return row(table, static_cast<std::size_t>(id));
}

Var slice(const Var& a, std::size_t begin, std::size_t length) {
  const Tensor& A = a.value();
  if (A.rank() != 1 || begin + length > A.size())
    shape_error("slice", A, "range [" + std::to_string(begin) + "," + std::to_string(begin + length) + ") out of bounds");
  std::vector<double> data(A.data() + begin, A.data() + begin + length);
  const int ia = a.id();
  return a.tape()->record(Tensor::from(std::move(data)), {ia}, [ia, begin, length](Tape& t, int self) {
    Tensor& gb = t.grad_buffer(ia);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < length; ++i) gb[begin + i] += g[i];
  });
}

Var pick(const Var& a, std::size_t index) {
  if (index >= a.size()) shape_error("pick", a.value(), "index " + std::to_string(index) + " out of range");
  const int ia = a.id();
  return a.tape()->record(Tensor::scalar(a.value()[index]), {ia}, [ia, index](Tape& t, int self) {
    t.grad_buffer(ia)[index] += t.grad(self)[0];
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  return unary_map(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [ia](Tape& t, int self) {
        const auto y = vec(t.value(self)).array();
        vec(t.grad_buffer(ia)).array() += vec(t.grad(self)).array() * y * (1.0 - y);
      });
}

Var tanh(const Var& a) {
  const int ia = a.id();
  return unary_map(
      a, [](double x) { return std::tanh(x); },
      [ia](Tape& t, int self) {
        const auto y = vec(t.value(self)).array();
        vec(t.grad_buffer(ia)).array() += vec(t.grad(self)).array() * (1.0 - y * y);
      });
}

Var relu(const Var& a) {
  const int ia = a.id();
  return unary_map(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [ia](Tape& t, int self) {
        const Tensor& x = t.value(ia);
        const Tensor& g = t.grad(self);
        Tensor& gb = t.grad_buffer(ia);
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > 0) gb[i] += g[i];
      });
}

Var log(const Var& a) {
  const int ia = a.id();
  return unary_map(
      a, [](double x) { return std::log(x); },
      [ia](Tape& t, int self) {
        vec(t.grad_buffer(ia)).array() += vec(t.grad(self)).array() / vec(t.value(ia)).array();
      });
}

Var log_sigmoid(const Var& a) {
  const int ia = a.id();
  return unary_map(
      a, [](double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [ia](Tape& t, int self) {
        const Tensor& x = t.value(ia);
        const Tensor& g = t.grad(self);
        Tensor& gb = t.grad_buffer(ia);
        for (std::size_t i = 0; i < x.size(); ++i) {
          // d/dx log sigmoid(x) = sigmoid(-x)
          const double s = x[i] >= 0 ? std::exp(-x[i]) / (1.0 + std::exp(-x[i])) : 1.0 / (1.0 + std::exp(x[i]));
          gb[i] += g[i] * s;
        }
      });
}

namespace {

void softmax_inplace(double* x, std::size_t n, std::size_t stride) {
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (x[i * stride] = std::exp(x[i * stride] - mx));
  for (std::size_t i = 0; i < n; ++i) x[i * stride] /= z;
}

void softmax_backward(const double* y, const double* g, double* gx, std::size_t n, std::size_t stride) {
  double gy = 0.0;
  for (std::size_t i = 0; i < n; ++i) gy += g[i * stride] * y[i * stride];
  for (std::size_t i = 0; i < n; ++i) gx[i * stride] += y[i * stride] * (g[i * stride] - gy);
}

}  // namespace

Var softmax(const Var& a) {
  if (a.value().rank() != 1) shape_error("softmax", a.value(), "use softmax(a, axis) for matrices");
  Tensor out = a.value();
  softmax_inplace(out.data(), out.size(), 1);
  const int ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Tensor& y = t.value(self);
    softmax_backward(y.data(), t.grad(self).data(), t.grad_buffer(ia).data(), y.size(), 1);
  });
}

Var softmax(const Var& a, int axis) {
  const Tensor& A = a.value();
  if (A.rank() == 1) {
    if (axis != 0) shape_error("softmax", A, "axis out of range");
    return softmax(a);
  }
  if (axis != 0 && axis != 1) shape_error("softmax", A, "axis out of range");
  const std::size_t R = A.rows(), C = A.cols();
  Tensor out = A;
  if (axis == 1)
    for (std::size_t r = 0; r < R; ++r) softmax_inplace(out.data() + r * C, C, 1);
  else
    for (std::size_t c = 0; c < C; ++c) softmax_inplace(out.data() + c, R, C);
  const int ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, axis, R, C](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(ia);
    if (axis == 1)
      for (std::size_t r = 0; r < R; ++r) softmax_backward(y.data() + r * C, g.data() + r * C, gx.data() + r * C, C, 1);
    else
      for (std::size_t c = 0; c < C; ++c) softmax_backward(y.data() + c, g.data() + c, gx.data() + c, R, C);
  });
}

Var log_softmax(const Var& a) {
  if (a.value().rank() != 1) shape_error("log_softmax", a.value(), "input must be rank 1");
  Tensor out = a.value();
  double mx = -INFINITY;
  for (double v : out.values()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : out.values()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  for (auto& v : out.values()) v -= lse;
  const int ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(ia);
    double gs = 0.0;
    for (double v : g.values()) gs += v;
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] - std::exp(y[i]) * gs;
  });
}

Var dropout(const Var& a, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout: rate must be in [0, 1)");
  if (!train || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const int ia = a.id();
  return a.tape()->record(std::move(out), {ia}, [ia, mask = std::move(mask)](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  return a.tape()->record(Tensor::scalar(vec(a.value()).sum()), {ia}, [ia](Tape& t, int self) {
    vec(t.grad_buffer(ia)).array() += t.grad(self)[0];
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) shape_error("mean", a.value(), "empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var add_all(const std::vector<Var>& terms) {
  if (terms.empty()) throw ShapeError("add_all: no inputs");
  if (terms.size() == 1) return terms.front();
  return sum(concat(terms));
}

Var detach(const Var& a) { return a.tape()->constant(a.value()); }

// --- Gradient check -----------------------------------------------------

GradCheckResult grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params, double eps) {
  for (auto* p : params) p->grad.fill(0.0);
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  auto loss_at = [&]() {
    Tape tape;
    return f(tape).item();
  };

  GradCheckResult result;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = loss_at();
      p->value[i] = orig - eps;
      const double down = loss_at();
      p->value[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double ad = p->grad[i];
      const double rel = std::abs(ad - fd) / std::max(1.0, std::abs(ad) + std::abs(fd));
      ++result.coordinates;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_param = p->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

// --- Optimisation -------------------------------------------------------

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const auto* p : params) sq += vec(p->grad).squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto* p : params) vec(p->grad) *= s;
  }
  return norm;
}

void Adam::step(std::span<Parameter* const> params) {
  for (const auto* p : params) {
    for (double g : p->grad.values())
      if (!std::isfinite(g)) throw Error("non-finite gradient in parameter " + p->name);
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (auto* p : params) {
    if (!p->trainable) continue;
    auto& mom = moments_[p];
    if (mom.m.empty()) {
      mom.m = Tensor(p->value.shape());
      mom.v = Tensor(p->value.shape());
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace s2r::ad
