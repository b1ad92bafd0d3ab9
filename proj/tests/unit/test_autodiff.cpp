#include <doctest.h>

#include <cmath>
#include <functional>

#include "s2r/autodiff.hpp"
#include "s2r/error.hpp"

using namespace s2r;
using namespace s2r::ad;

namespace {

void randomize(Parameter& p, Rng& rng, double lo = -1.0, double hi = 1.0) { init_uniform(p, rng, lo, hi); }

// Scalar probe: a fixed random weighting of every output coordinate.
Var probe(Tape& tape, const Var& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(out.shape());
  for (auto& x : w.values()) x = uniform01(rng) * 2.0 - 1.0;
  return sum(mul(out, tape.constant(std::move(w))));
}

using Op = std::function<Var(Tape&, Var, Var)>;

}  // namespace

TEST_CASE("tensor construction validates shapes") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(std::vector<std::size_t>{}), ShapeError);
  CHECK_THROWS_AS(Tensor({1, 2, 3}), ShapeError);
}

TEST_CASE("matmul shape algebra and errors name the op") {
  Tape tape;
  const auto a = tape.constant(Tensor({2, 3}, 1.0));
  const auto b = tape.constant(Tensor({3, 4}, 1.0));
  CHECK(matmul(a, b).shape() == std::vector<std::size_t>{2, 4});
  CHECK(matmul(a, tape.constant(Tensor({3}, 1.0))).shape() == std::vector<std::size_t>{2});
  try {
    matmul(b, a);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(3,4)") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("softmax outputs a distribution per slice") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    Tape tape;
    Tensor x({7});
    for (auto& v : x.values()) v = (uniform01(rng) - 0.5) * 200.0;
    const auto s = softmax(tape.constant(x));
    double total = 0.0;
    for (double p : s.value().values()) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    const auto ls = log_softmax(tape.constant(x));
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::exp(ls.value()[i]) == doctest::Approx(s.value()[i]).epsilon(1e-12));
  }
  Tape tape;
  Tensor m({3, 4});
  for (auto& v : m.values()) v = uniform01(rng);
  const auto rows = softmax(tape.constant(m), 1).value();
  const auto cols = softmax(tape.constant(m), 0).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double t = 0;
    for (std::size_t c = 0; c < 4; ++c) t += rows.at(r, c);
    CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (std::size_t c = 0; c < 4; ++c) {
    double t = 0;
    for (std::size_t r = 0; r < 3; ++r) t += cols.at(r, c);
    CHECK(t == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("dropout is the identity in eval mode") {
  Rng rng(1);
  Tape tape;
  const auto x = tape.constant(Tensor::from({1, 2, 3, 4}));
  CHECK(dropout(x, 0.3, false, rng).value().values() == x.value().values());
  CHECK(dropout(x, 0.0, true, rng).value().values() == x.value().values());
  const auto d = dropout(x, 0.5, true, rng).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK((d[i] == 0.0 || d[i] == 2.0 * x.value()[i]));
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), Error);
}

TEST_CASE("backward on simple functions") {
  ParameterSet set;
  auto& x = set.add("x", {3});
  x.value = Tensor::from({1, 2, 3});
  {
    Tape tape;
    tape.backward(sum(tape.param(x)));
    CHECK(x.grad.values() == std::vector<double>{1, 1, 1});
  }
  auto& y = set.add("y", {1});
  y.value = Tensor::scalar(3.0);
  set.zero_grad();
  {
    Tape tape;
    const auto v = tape.param(y);
    tape.backward(mul(v, v));
    CHECK(y.grad[0] == 6.0);
  }
  set.zero_grad();
  {
    Tape tape;
    const auto v = tape.param(y);
    const auto loss = add(v, mul(detach(v), detach(v)));
    tape.backward(loss);
    CHECK(y.grad[0] == 1.0);
    // x was never reached.
    CHECK(x.grad.values() == std::vector<double>{0, 0, 0});
  }
  Tape tape;
  CHECK_THROWS_AS(tape.backward(tape.param(x)), ShapeError);
}

TEST_CASE("concat splits gradients back onto its parts") {
  ParameterSet set;
  auto& a = set.add("a", {2});
  auto& b = set.add("b", {3});
  Tape tape;
  const auto joined = concat({tape.param(a), tape.param(b)});
  CHECK(joined.size() == 5);
  tape.backward(dot(joined, tape.constant(Tensor::from({1, 2, 3, 4, 5}))));
  CHECK(a.grad.values() == std::vector<double>{1, 2});
  CHECK(b.grad.values() == std::vector<double>{3, 4, 5});
}

TEST_CASE("grad_check on a quadratic form is exact to 1e-8") {
  ParameterSet set;
  Rng rng(4);
  auto& x = set.add("x", {4});
  auto& A = set.add("A", {4, 4});
  randomize(x, rng);
  randomize(A, rng);
  auto params = set.all();
  const auto r = grad_check([&](Tape& t) { return dot(t.param(x), matmul(t.param(A), t.param(x))); }, params);
  CHECK(r.coordinates == 20);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("every primitive passes grad_check on random inputs") {
  struct Case {
    const char* name;
    std::vector<std::size_t> sa, sb;
    Op op;
    double lo = -1.0;
  };
  const std::vector<Case> cases = {
      {"add", {3}, {3}, [](Tape&, Var a, Var b) { return add(a, b); }},
      {"sub", {2, 3}, {2, 3}, [](Tape&, Var a, Var b) { return sub(a, b); }},
      {"mul", {4}, {4}, [](Tape&, Var a, Var b) { return mul(a, b); }},
      {"scale", {3}, {1}, [](Tape&, Var a, Var) { return scale(a, -1.7); }},
      {"affine", {3}, {1}, [](Tape&, Var a, Var) { return affine(a, 2.5, -0.3); }},
      {"scale_by", {3}, {1}, [](Tape&, Var a, Var s) { return scale_by(a, s); }},
      {"matmul_mv", {2, 3}, {3}, [](Tape&, Var a, Var b) { return matmul(a, b); }},
      {"matmul_mm", {2, 3}, {3, 2}, [](Tape&, Var a, Var b) { return matmul(a, b); }},
      {"matvec_t", {3, 2}, {3}, [](Tape&, Var a, Var b) { return matvec_t(a, b); }},
      {"dot", {4}, {4}, [](Tape&, Var a, Var b) { return dot(a, b); }},
      {"concat", {2}, {3}, [](Tape&, Var a, Var b) { return concat({a, b, a}); }},
      {"stack", {3}, {3}, [](Tape&, Var a, Var b) { return stack({a, b}); }},
      {"row", {3, 2}, {1}, [](Tape&, Var a, Var) { return row(a, 1); }},
      {"slice", {5}, {1}, [](Tape&, Var a, Var) { return slice(a, 1, 3); }},
      {"pick", {4}, {1}, [](Tape&, Var a, Var) { return pick(a, 2); }},
      {"sigmoid", {4}, {1}, [](Tape&, Var a, Var) { return sigmoid(a); }},
      {"tanh", {4}, {1}, [](Tape&, Var a, Var) { return tanh(a); }},
      {"relu", {4}, {1}, [](Tape&, Var a, Var) { return relu(a); }},
      {"log", {4}, {1}, [](Tape&, Var a, Var) { return log(a); }, 0.5},
      {"log_sigmoid", {4}, {1}, [](Tape&, Var a, Var) { return log_sigmoid(a); }},
      {"softmax", {5}, {1}, [](Tape&, Var a, Var) { return softmax(a); }},
      {"softmax_rows", {2, 3}, {1}, [](Tape&, Var a, Var) { return softmax(a, 1); }},
      {"softmax_cols", {2, 3}, {1}, [](Tape&, Var a, Var) { return softmax(a, 0); }},
      {"log_softmax", {5}, {1}, [](Tape&, Var a, Var) { return log_softmax(a); }},
      {"embedding", {4, 3}, {1}, [](Tape&, Var a, Var) { return add(embedding(a, 2), embedding(a, 2)); }},
      {"sum", {2, 2}, {1}, [](Tape&, Var a, Var) { return sum(a); }},
      {"mean", {5}, {1}, [](Tape&, Var a, Var) { return mean(a); }},
      {"add_all", {1}, {1}, [](Tape&, Var a, Var b) { return add_all({a, b, a}); }},
      {"dropout", {6}, {1},
       [](Tape&, Var a, Var) {
         Rng rng(9);
         return dropout(a, 0.4, true, rng);
       }},
  };
  Rng rng(8);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 3; ++trial) {
      ParameterSet set;
      auto& a = set.add("a", c.sa);
      auto& b = set.add("b", c.sb);
      randomize(a, rng, c.lo, 1.0);
      randomize(b, rng);
      auto params = set.all();
      const auto r = grad_check([&](Tape& t) { return probe(t, c.op(t, t.param(a), t.param(b)), 77); }, params);
      INFO(c.name);
      CHECK(r.max_rel_error < 1e-6);
    }
  }
}

TEST_CASE("fixed seed gives bit-identical forward and backward results") {
  auto run = [] {
    ParameterSet set;
    Rng rng(21);
    auto& W = set.add("W", {4, 3});
    auto& x = set.add("x", {3});
    randomize(W, rng);
    randomize(x, rng);
    Tape tape;
    Rng drop(5);
    const auto h = dropout(tanh(matmul(tape.param(W), tape.param(x))), 0.3, true, drop);
    const auto loss = sum(log_softmax(h));
    tape.backward(loss);
    std::vector<double> out = W.grad.values();
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("Adam updates") {
  ParameterSet set;
  auto& p = set.add("p", {3});
  p.value = Tensor::from({1.0, -2.0, 0.5});
  auto params = set.all();

  Adam zero(0.1);
  p.grad.fill(0.0);
  zero.step(params);
  CHECK(zero.steps() == 1);
  CHECK(p.value.values() == std::vector<double>{1.0, -2.0, 0.5});

  const double lr = 0.01;
  Adam adam(lr);
  p.grad = Tensor::from({0.3, -4.0, 1e-3});
  const auto before = p.value.values();
  adam.step(params);
  for (std::size_t i = 0; i < 3; ++i) {
    const double g = p.grad[i];
    // At t = 1 the bias-corrected ratio is g / (|g| + eps).
    const double expected = before[i] - lr * g / (std::abs(g) + 1e-8);
    CHECK(p.value[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK((p.value[i] - before[i]) * g < 0.0);
  }

  Adam still(0.0);
  const auto held = p.value.values();
  still.step(params);
  CHECK(p.value.values() == held);

  p.grad[1] = std::nan("");
  try {
    adam.step(params);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("parameter p") != std::string::npos);
  }
  CHECK(adam.steps() == 1);
}

TEST_CASE("global norm clipping") {
  ParameterSet set;
  auto& a = set.add("a", {2});
  auto& b = set.add("b", {1});
  a.grad = Tensor::from({3.0, 0.0});
  b.grad = Tensor::from({4.0});
  auto params = set.all();
  CHECK(global_grad_norm(params) == 5.0);
  CHECK(clip_global_norm(params, 10.0) == 5.0);
  CHECK(b.grad[0] == 4.0);
  clip_global_norm(params, 1.0);
  CHECK(global_grad_norm(params) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.grad[0] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("parameter set keeps names unique and sorted") {
  ParameterSet set;
  set.add("b", {1});
  set.add("a", {2, 2});
  CHECK_THROWS_AS(set.add("a", {1}), Error);
  const auto all = set.all();
  REQUIRE(all.size() == 2);
  CHECK(all[0]->name == "a");
  CHECK(set.num_scalars() == 5);
  CHECK_THROWS_AS(set.get("missing"), Error);
}
