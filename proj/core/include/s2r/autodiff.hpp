#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "s2r/types.hpp"

namespace s2r::ad {

/// Dense row-major array of doubles, rank 1 or 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor from(std::vector<double> v);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double v);
  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Owns named parameters. Addresses are stable for the lifetime of the set,
/// including across moves.
class ParameterSet {
 public:
  Parameter& add(const std::string& name, std::vector<std::size_t> shape);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  /// Sorted by name.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> trainable();

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

 private:
  std::map<std::string, std::unique_ptr<Parameter>> params_;
};

void init_uniform(Parameter& p, Rng& rng, double lo, double hi);

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const;
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records operations in execution order. Recording order is a topological
/// order, so backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; one leaf per parameter per tape.
  Var param(Parameter& p);
  Var record(Tensor value, std::vector<int> parents, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// parameter reached. Throws ShapeError for a non-scalar loss.
  void backward(const Var& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first use.
  Tensor& grad_buffer(int id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Elementwise and structural ops. Shapes must agree exactly unless stated.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
/// alpha * a + beta, elementwise.
Var affine(const Var& a, double alpha, double beta);
/// a multiplied by the single element of scalar s.
Var scale_by(const Var& a, const Var& s);
/// (r,k)x(k) -> (r) or (r,k)x(k,c) -> (r,c).
Var matmul(const Var& a, const Var& b);
/// Transposed matrix-vector product: (r,c)^T x (r) -> (c).
Var matvec_t(const Var& a, const Var& x);
Var dot(const Var& a, const Var& b);
/// Joins rank-1 tensors end to end.
Var concat(const std::vector<Var>& parts);
/// Stacks equal-length rank-1 tensors as the rows of a matrix.
Var stack(const std::vector<Var>& rows);
Var row(const Var& matrix, std::size_t r);
Var slice(const Var& a, std::size_t begin, std::size_t length);
Var pick(const Var& a, std::size_t index);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var log(const Var& a);
/// log(sigmoid(a)) without overflow.
Var log_sigmoid(const Var& a);
Var softmax(const Var& a);
/// Softmax over axis 0 (columns) or axis 1 (rows) of a matrix.
Var softmax(const Var& a, int axis);
Var log_softmax(const Var& a);
Var embedding(const Var& table, int id);
/// Inverted dropout; identity when !train or rate == 0.
Var dropout(const Var& a, double rate, bool train, Rng& rng);
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of scalar vars.
Var add_all(const std::vector<Var>& terms);
/// Constant copy with no gradient path.
Var detach(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients with central finite differences on
/// every coordinate of `params`. Relative error per coordinate is
/// |g_ad - g_fd| / max(1, |g_ad| + |g_fd|). `f` must be deterministic.
GradCheckResult grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                           double eps = 1e-4);

double global_grad_norm(std::span<Parameter* const> params);
/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Throws Error naming the parameter if any gradient is non-finite; no
  /// parameter is modified in that case.
  void step(std::span<Parameter* const> params);
  std::int64_t steps() const { return steps_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Moments {
    Tensor m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::int64_t steps_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

}  // namespace s2r::ad
