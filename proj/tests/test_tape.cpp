#include <cmath>
#include <functional>
#include <random>

#include "cdcor/error.hpp"
#include "cdcor/gradcheck.hpp"
#include "cdcor/tape.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cdcor;

namespace {

using Builder = std::function<Var(Tape&, Var, Var)>;

// Contracts an op's output against fixed random weights so every output
// entry contributes to the scalar loss.
double primitive_fd_error(const Builder& op, Matrix x, Matrix y, std::uint64_t seed) {
  ParameterSet params;
  params.add("x", std::move(x));
  params.add("y", std::move(y));
  std::mt19937_64 rng(seed);
  Matrix weights;
  LossBuilder loss = [&](Tape& t) {
    Var out = op(t, t.parameter("x"), t.parameter("y"));
    if (weights.empty()) weights = testing::random_matrix(rng, out.rows(), out.cols());
    return t.sum(t.hadamard(out, t.constant(weights)));
  };
  return finite_diff_check(loss, params, 1e-6).max_error;
}

}  // namespace

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(2024);
  auto rnd = [&](std::size_t r, std::size_t c) { return testing::random_matrix_away_from_zero(rng, r, c); };
  auto pos = [&](std::size_t r, std::size_t c) { return testing::random_matrix(rng, r, c, 0.2, 2.0); };
  auto prob = [&](std::size_t r, std::size_t c) { return testing::random_matrix(rng, r, c, 0.05, 0.95); };

  struct Case {
    const char* name;
    Builder op;
    Matrix x;
    Matrix y;
  };
  const Matrix labels{{1, 0, 1}, {0, 0, 1}};
  std::vector<Case> cases = {
      {"matmul", [](Tape& t, Var a, Var b) { return t.matmul(a, b); }, rnd(3, 5), rnd(5, 4)},
      {"transpose", [](Tape& t, Var a, Var) { return t.transpose(a); }, rnd(3, 6), rnd(1, 1)},
      {"add", [](Tape& t, Var a, Var b) { return t.add(a, b); }, rnd(4, 2), rnd(4, 2)},
      {"sub", [](Tape& t, Var a, Var b) { return t.sub(a, b); }, rnd(4, 2), rnd(4, 2)},
      {"hadamard", [](Tape& t, Var a, Var b) { return t.hadamard(a, b); }, rnd(5, 3), rnd(5, 3)},
      {"scale", [](Tape& t, Var a, Var) { return t.scale(a, -1.7); }, rnd(2, 2), rnd(1, 1)},
      {"add_scalar", [](Tape& t, Var a, Var) { return t.add_scalar(a, 0.3); }, rnd(2, 3), rnd(1, 1)},
      {"concat_rows", [](Tape& t, Var a, Var b) { return t.concat_rows(a, b); }, rnd(3, 2), rnd(4, 2)},
      {"slice", [](Tape& t, Var a, Var) { return t.slice(a, 1, 4, 2, 5); }, rnd(6, 6), rnd(1, 1)},
      {"gather_columns",
       [](Tape& t, Var a, Var) { return t.gather_columns(a, {3, 0, 3, 1}); }, rnd(4, 5), rnd(1, 1)},
      {"relu", [](Tape& t, Var a, Var) { return t.relu(a); }, rnd(5, 5), rnd(1, 1)},
      {"sigmoid", [](Tape& t, Var a, Var) { return t.sigmoid(a); }, rnd(4, 3), rnd(1, 1)},
      {"softmax2", [](Tape& t, Var a, Var) { return t.softmax2(a); }, rnd(2, 6), rnd(1, 1)},
      {"log", [](Tape& t, Var a, Var) { return t.log(a); }, pos(3, 3), rnd(1, 1)},
      {"sqrt", [](Tape& t, Var a, Var) { return t.sqrt(a); }, pos(3, 3), rnd(1, 1)},
      {"binary_cross_entropy",
       [&](Tape& t, Var a, Var) { return t.binary_cross_entropy(a, labels); }, prob(2, 3), rnd(1, 1)},
      {"sum", [](Tape& t, Var a, Var) { return t.sum(a); }, rnd(3, 4), rnd(1, 1)},
      {"squared_norm", [](Tape& t, Var a, Var) { return t.squared_norm(a); }, rnd(3, 4), rnd(1, 1)},
      {"l1_norm", [](Tape& t, Var a, Var) { return t.l1_norm(a); }, rnd(3, 4), rnd(1, 1)},
      {"l2_norm", [](Tape& t, Var a, Var) { return t.l2_norm(a); }, rnd(3, 4), rnd(1, 1)},
      {"column_l1", [](Tape& t, Var a, Var) { return t.column_l1(a); }, rnd(4, 5), rnd(1, 1)},
      {"acyclicity", [](Tape& t, Var a, Var) { return t.acyclicity(a); }, rnd(6, 6), rnd(1, 1)},
  };
  for (auto& c : cases) {
    CAPTURE(c.name);
    CHECK(primitive_fd_error(c.op, c.x, c.y, 99) < 1e-5);
  }
}

TEST_CASE("relu passes no gradient through negative inputs") {
  Tape t;
  Var x = t.constant(Matrix{{-0.5}, {0.25}});
  Var y = t.relu(x);
  t.backward(t.sum(y));
  CHECK(t.grad(x)(0, 0) == 0.0);
  CHECK(t.grad(x)(1, 0) == 1.0);
}

TEST_CASE("sigmoid of zero is one half") {
  Tape t;
  CHECK(t.sigmoid(t.constant(Matrix(1, 1, 0.0))).scalar() == 0.5);
}

TEST_CASE("concat_rows splits the incoming gradient at the boundary") {
  Tape t;
  Var a = t.constant(Matrix{{1}, {2}});
  Var b = t.constant(Matrix{{3}, {4}});
  Var c = t.concat_rows(a, b);
  REQUIRE(c.rows() == 4);
  Var loss = t.sum(t.hadamard(c, t.constant(Matrix{{10}, {20}, {30}, {40}})));
  t.backward(loss);
  CHECK(t.grad(a) == Matrix{{10}, {20}});
  CHECK(t.grad(b) == Matrix{{30}, {40}});
}

TEST_CASE("gradient reversal is identity forward and negates backward") {
  SUBCASE("forward") {
    Tape t;
    Var x = t.constant(Matrix{{1.0}, {-2.0}});
    CHECK(t.gradient_reversal(x, 1.0).value() == Matrix{{1.0}, {-2.0}});
  }
  SUBCASE("scale one") {
    Tape t;
    Var x = t.constant(Matrix{{1.0}, {-2.0}});
    Var r = t.gradient_reversal(x, 1.0);
    t.backward(t.sum(t.hadamard(r, t.constant(Matrix{{0.3}, {0.3}}))));
    CHECK(t.grad(x) == Matrix{{-0.3}, {-0.3}});
  }
  SUBCASE("scale one half") {
    Tape t;
    Var x = t.constant(Matrix{{4.0}});
    t.backward(t.gradient_reversal(x, 0.5));
    CHECK(t.grad(x) == Matrix{{-0.5}});
  }
  SUBCASE("double application is identity forward, scale squared backward") {
    std::mt19937_64 rng(5);
    const Matrix x0 = testing::random_matrix(rng, 5, 1);
    const Matrix w = testing::random_matrix(rng, 5, 1);
    Tape t;
    Var x = t.constant(x0);
    Var r = t.gradient_reversal(t.gradient_reversal(x, 0.7), 0.7);
    CHECK(r.value() == x0);
    t.backward(t.sum(t.hadamard(r, t.constant(w))));
    for (std::size_t i = 0; i < 5; ++i) CHECK(t.grad(x)[i] == (-0.7) * ((-0.7) * w[i]));
  }
  SUBCASE("negative scale rejected") {
    Tape t;
    CHECK_THROWS_AS(t.gradient_reversal(t.constant(Matrix(1, 1)), -1.0), Error);
  }
}

TEST_CASE("gradient reversal flips the sign of a finite-difference derivative") {
  // Loss = (a * x)^2 through a reversal on a; the tape gradient for `a` must
  // be exactly the negated derivative of the non-reversed composition.
  ParameterSet params;
  params.add("a", Matrix{{0.8}});
  params.add("x", Matrix{{1.5}});
  LossBuilder reversed = [](Tape& t) {
    Var h = t.gradient_reversal(t.parameter("a"), 1.0);
    return t.squared_norm(t.matmul(h, t.parameter("x")));
  };
  compute_gradients(reversed, params);
  const double tape_grad = params.at("a").grad[0];
  const double step = 1e-6;
  params.at("a").value[0] += step;
  const double up = evaluate_loss(reversed, params);
  params.at("a").value[0] -= 2 * step;
  const double down = evaluate_loss(reversed, params);
  const double fd = (up - down) / (2 * step);
  CHECK(tape_grad == doctest::Approx(-fd).epsilon(1e-8));
  CHECK(tape_grad == doctest::Approx(-2.0 * 0.8 * 1.5 * 1.5));
}

TEST_CASE("a parameter used in two branches receives the sum of branch gradients") {
  ParameterSet params;
  params.add("w", Matrix{{2.0}, {-1.0}});
  params.zero_grad();
  Tape t(&params);
  Var w = t.parameter("w");
  Var branch1 = t.squared_norm(w);                       // grad 2w
  Var branch2 = t.sum(t.scale(w, 3.0));                  // grad 3
  t.backward(t.add(branch1, branch2));
  CHECK(params.at("w").grad == Matrix{{7.0}, {1.0}});
}

TEST_CASE("unreachable parameters get exactly zero gradient") {
  ParameterSet params;
  params.add("used", Matrix{{1.0}});
  params.add("unused", Matrix{{5.0}});
  params.zero_grad();
  Tape t(&params);
  t.parameter("unused");
  t.backward(t.squared_norm(t.parameter("used")));
  CHECK(params.at("unused").grad == Matrix{{0.0}});
  CHECK(params.at("used").grad == Matrix{{2.0}});
}

TEST_CASE("shape mismatches name both operand shapes") {
  Tape t;
  Var a = t.constant(Matrix(2, 3));
  Var b = t.constant(Matrix(3, 2));
  try {
    t.add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(t.matmul(a, a), ShapeError);
  CHECK_THROWS_AS(t.softmax2(t.constant(Matrix(3, 1))), ShapeError);
  CHECK_THROWS_AS(t.gather_columns(a, {3}), ShapeError);
}

TEST_CASE("non-finite intermediates are rejected naming the operation") {
  Tape t;
  try {
    t.log(t.constant(Matrix{{-1.0}}));
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
  }
}

TEST_CASE("binary cross-entropy clamps saturated probabilities") {
  Tape t;
  Var p = t.constant(Matrix{{0.0, 1.0}});
  Var loss = t.binary_cross_entropy(p, Matrix{{0.0, 1.0}});
  CHECK(loss.scalar() == doctest::Approx(-2.0 * std::log(1.0 - 1e-7)));
  Var bad = t.binary_cross_entropy(p, Matrix{{1.0, 0.0}});
  CHECK(bad.scalar() == doctest::Approx(-2.0 * std::log(1e-7)));
}

TEST_CASE("a tape runs backward only once") {
  Tape t;
  Var x = t.constant(Matrix{{1.0}});
  t.backward(t.squared_norm(x));
  CHECK_THROWS_AS(t.backward(t.squared_norm(x)), Error);
}

TEST_CASE("finite_diff_check on a quadratic is exact to 1e-7") {
  ParameterSet params;
  params.add("x", Matrix{{1.0}, {2.0}});
  LossBuilder loss = [](Tape& t) { return t.squared_norm(t.parameter("x")); };
  CHECK(finite_diff_check(loss, params, 1e-4).max_error < 1e-7);
}

TEST_CASE("finite_diff_check rejects non-deterministic losses and bad steps") {
  ParameterSet params;
  params.add("x", Matrix{{1.0}});
  int calls = 0;
  LossBuilder flaky = [&](Tape& t) {
    ++calls;
    return t.scale(t.squared_norm(t.parameter("x")), static_cast<double>(calls));
  };
  CHECK_THROWS_AS(finite_diff_check(flaky, params, 1e-5), Error);
  LossBuilder ok = [](Tape& t) { return t.squared_norm(t.parameter("x")); };
  CHECK_THROWS_AS(finite_diff_check(ok, params, 0.5), Error);
  CHECK_THROWS_AS(finite_diff_check(ok, params, 0.0), Error);
}

TEST_CASE("finite_diff_check reports a corrupted block by name") {
  ParameterSet params;
  params.add("a", Matrix{{1.0, 2.0}});
  params.add("b", Matrix{{3.0}});
  LossBuilder loss = [](Tape& t) {
    return t.add(t.squared_norm(t.parameter("a")), t.squared_norm(t.parameter("b")));
  };
  auto report = finite_diff_check(loss, params, 1e-5, {},
                                  [](ParameterSet& p) { p.at("b").grad[0] += 1.0; });
  CHECK(report.block("a").max_error < 1e-7);
  CHECK(report.block("b").max_error > 0.1);
}
