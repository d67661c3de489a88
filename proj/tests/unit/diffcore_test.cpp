#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "unimom/diff/adam.hpp"
#include "unimom/diff/gradcheck.hpp"
#include "unimom/diff/ops.hpp"
#include "unimom/error.hpp"
#include "unimom/simd/kernels.hpp"

using namespace unimom::diff;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Reduces any tensor to a scalar through a fixed random projection so every
// output element carries a distinct weight in the check.
Var project(Tape& tape, const Var& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor w = random_tensor(v.shape(), rng);
  return mean(mul(v, tape.constant(std::move(w))));
}

double check_op(std::vector<Parameter> params, const LossBuilder& f) {
  return finite_diff_check(f, params, 1e-5).max_rel_error;
}

}  // namespace

TEST_CASE("forward op examples") {
  Tape tape;
  CHECK(tanh(tape.constant(Tensor::scalar(0.0))).value().item() == 0.0);

  const Var s = softmax(tape.constant(Tensor(Shape{3}, 0.0)));
  for (double v : s.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  const Tensor m = Tensor::matrix(2, 2, {1.5, -2, 3, 4.25});
  CHECK(matmul(eye, tape.constant(m)).value() == m);
}

TEST_CASE("backward examples") {
  SUBCASE("d/dx x*x at 3 is 6") {
    Tape tape;
    const Var x = tape.variable(Tensor::scalar(3.0));
    const auto g = tape.backward(mul(x, x));
    CHECK(g[x].item() == 6.0);
  }
  SUBCASE("d/dx tanh at 0 is 1") {
    Tape tape;
    const Var x = tape.variable(Tensor::scalar(0.0));
    CHECK(tape.backward(tanh(x))[x].item() == 1.0);
  }
  SUBCASE("mean distributes 0.5 to each of two inputs") {
    Tape tape;
    const Var x = tape.variable(Tensor(Shape{2}, std::vector<double>{1.0, 5.0}));
    const auto g = tape.backward(mean(x));
    CHECK(g[x][0] == 0.5);
    CHECK(g[x][1] == 0.5);
  }
  SUBCASE("unused parameters get zero gradients") {
    Tape tape;
    const Var x = tape.variable(Tensor::scalar(2.0));
    const Var unused = tape.variable(Tensor(Shape{2, 2}, 1.0));
    const auto g = tape.backward(square(x));
    CHECK(g[unused] == Tensor(Shape{2, 2}, 0.0));
  }
}

TEST_CASE("backward error paths") {
  Tape empty;
  Tape other;
  const Var v = other.variable(Tensor::scalar(1.0));
  CHECK_THROWS_AS(empty.backward(v), unimom::Error);

  Tape tape;
  const Var x = tape.variable(Tensor(Shape{3}, 1.0));
  CHECK_THROWS_AS(tape.backward(tanh(x)), unimom::ShapeError);
}

TEST_CASE("forward error paths") {
  Tape tape;
  const Var a = tape.constant(Tensor(Shape{2, 3}, 1.0));
  const Var b = tape.constant(Tensor(Shape{2, 3}, 1.0));
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const unimom::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, tape.constant(Tensor(Shape{2}, 1.0))), unimom::ShapeError);
  CHECK_THROWS_AS(log(tape.constant(Tensor::scalar(-1.0))), unimom::DomainError);
  CHECK_THROWS_AS(sqrt(tape.constant(Tensor::scalar(-1e-3))), unimom::DomainError);
  CHECK_THROWS_AS(div(a, tape.constant(Tensor::scalar(0.0))), unimom::DomainError);
}

TEST_CASE("broadcasting: scalar and trailing axis only") {
  Tape tape;
  const Var m = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Var row = tape.constant(Tensor(Shape{3}, std::vector<double>{10, 20, 30}));
  const Var sum = add(m, row);
  CHECK(sum.value() == Tensor::matrix(2, 3, {11, 22, 33, 14, 25, 36}));
  const Var scaled = mul(m, tape.constant(Tensor::scalar(2.0)));
  CHECK(scaled.value() == Tensor::matrix(2, 3, {2, 4, 6, 8, 10, 12}));
  CHECK_THROWS_AS(add(m, tape.constant(Tensor(Shape{2, 1}, 1.0))), unimom::ShapeError);
}

TEST_CASE("every op matches central differences within 1e-6") {
  std::mt19937_64 rng(7);
  const auto A = [&](Shape s) { return Parameter{"a", random_tensor(std::move(s), rng)}; };
  const auto P = [&](Shape s) { return Parameter{"p", random_tensor(std::move(s), rng, 0.5, 2.0)}; };

  auto unary_check = [&](auto op, Parameter p, std::uint64_t seed) {
    return check_op({p}, [op, seed](Tape& t, std::span<const Var> v) { return project(t, op(v[0]), seed); });
  };
  auto binary_check = [&](auto op, Parameter a, Parameter b, std::uint64_t seed) {
    return check_op({a, b}, [op, seed](Tape& t, std::span<const Var> v) { return project(t, op(v[0], v[1]), seed); });
  };

  CHECK(binary_check([](const Var& a, const Var& b) { return matmul(a, b); }, A({3, 4}), A({4, 5}), 1) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) { return add(a, b); }, A({3, 4}), A({4}), 2) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) { return sub(a, b); }, A({3, 4}), A({3, 4}), 3) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) { return mul(a, b); }, A({3, 4}), A({}), 4) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) { return div(a, b); }, A({3, 4}), P({1, 4}), 5) < 1e-6);
  CHECK(unary_check([](const Var& a) { return tanh(a); }, A({3, 4}), 6) < 1e-6);
  CHECK(unary_check([](const Var& a) { return sigmoid(a); }, A({3, 4}), 7) < 1e-6);
  CHECK(unary_check([](const Var& a) { return exp(a); }, A({3, 4}), 8) < 1e-6);
  CHECK(unary_check([](const Var& a) { return log(a); }, P({3, 4}), 9) < 1e-6);
  CHECK(unary_check([](const Var& a) { return sqrt(a); }, P({3, 4}), 10) < 1e-6);
  CHECK(unary_check([](const Var& a) { return square(a); }, A({3, 4}), 11) < 1e-6);
  CHECK(unary_check([](const Var& a) { return abs(a); }, A({3, 4}), 12) < 1e-6);
  CHECK(unary_check([](const Var& a) { return softmax(a); }, A({3, 4}), 13) < 1e-6);
  CHECK(unary_check([](const Var& a) { return slice(a, 1, 3); }, A({3, 4}), 14) < 1e-6);
  CHECK(unary_check([](const Var& a) { return mean(a); }, A({3, 4}), 15) < 1e-6);
  CHECK(unary_check([](const Var& a) { return std_dev(a); }, A({3, 4}), 16) < 1e-6);
  CHECK(unary_check([](const Var& a) { return row_sum(a); }, A({3, 4}), 17) < 1e-6);
  CHECK(unary_check([](const Var& a) { return add_scalar(mul_scalar(a, 3.0), 1.0); }, A({3, 4}), 18) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) { return scale_rows(a, b); }, A({3, 4}), A({3, 1}), 19) < 1e-6);
  CHECK(binary_check([](const Var& a, const Var& b) {
          const Var parts[] = {a, b};
          return concat(parts);
        }, A({3, 2}), A({3, 4}), 20) < 1e-6);

  const std::vector<std::size_t> offsets{0, 2, 3, 6};
  CHECK(unary_check([&](const Var& a) { return segment_mean(a, offsets); }, A({6, 2}), 21) < 1e-6);
  CHECK(unary_check([&](const Var& a) { return segment_std(a, std::vector<std::size_t>{0, 2, 6}, 1e-8); }, A({6, 2}), 22) < 1e-6);

  CHECK(check_op({A({8, 3}), A({3, 8}), A({2, 8}), A({8})},
                 [](Tape& t, std::span<const Var> v) {
                   return project(t, lstm_sequence(v[0], v[1], v[2], v[3], 4, true), 23);
                 }) < 1e-6);
  CHECK(check_op({A({6, 3}), A({3, 12}), A({3, 12}), A({12})},
                 [](Tape& t, std::span<const Var> v) {
                   return project(t, lstm_sequence(v[0], v[1], v[2], v[3], 3, false), 24);
                 }) < 1e-6);
}

TEST_CASE("softmax rows are positive and sum to one") {
  std::mt19937_64 rng(3);
  Tape tape;
  const Var y = softmax(tape.constant(random_tensor({50, 7}, rng, -20.0, 20.0)));
  for (std::size_t r = 0; r < 50; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y.value().at(r, c) > 0.0);
      s += y.value().at(r, c);
    }
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("composite graph equals the hand-applied chain rule") {
  // f(x) = tanh(x)^2 -> f'(x) = 2 tanh(x) (1 - tanh(x)^2)
  for (double x0 : {-1.7, -0.2, 0.0, 0.9, 1.8}) {
    Tape tape;
    const Var x = tape.variable(Tensor::scalar(x0));
    const double grad = tape.backward(square(tanh(x)))[x].item();
    const double th = std::tanh(x0);
    CHECK(grad == doctest::Approx(2.0 * th * (1.0 - th * th)).epsilon(1e-14));
  }
}

TEST_CASE("segment std floors degenerate segments with zero gradient") {
  Tape tape;
  const Var x = tape.variable(Tensor::matrix(3, 1, {0.5, 0.5, 2.0}));
  const std::vector<std::size_t> off{0, 2, 3};
  const Var s = segment_std(x, off, 1e-8);
  CHECK(s.value()[0] == 1e-8);
  CHECK(s.value()[1] == 1e-8);
  const auto g = tape.backward(mean(s));
  CHECK(g[x] == Tensor(Shape{3, 1}, 0.0));
}

TEST_CASE("replay is bit-identical") {
  auto run = [] {
    std::mt19937_64 rng(11);
    Tape tape;
    const Var w = tape.variable(random_tensor({4, 3}, rng));
    const Var x = tape.constant(random_tensor({5, 4}, rng));
    const Var loss = mean(tanh(matmul(x, w)));
    const auto g = tape.backward(loss);
    return std::make_pair(loss.value().item(), g[w]);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("ops give the same results on scalar and vector kernels") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({12, 7}, rng);
  const Tensor wx = random_tensor({7, 32}, rng);
  const Tensor wh = random_tensor({8, 32}, rng);
  const Tensor b = random_tensor({32}, rng);
  auto run = [&] {
    Tape tape;
    const Var vwx = tape.variable(wx);
    const Var h = lstm_sequence(tape.constant(x), vwx, tape.variable(wh), tape.variable(b), 3, false);
    const Var loss = mean(square(h));
    return std::make_pair(loss.value().item(), tape.backward(loss)[vwx]);
  };
  unimom::simd::set_active_kernels(&unimom::simd::scalar_kernels());
  const auto ref = run();
  unimom::simd::set_active_kernels(nullptr);
  const auto vec = run();
  CHECK(vec.first == doctest::Approx(ref.first).epsilon(1e-12));
  for (std::size_t i = 0; i < ref.second.size(); ++i) {
    CHECK(std::fabs(vec.second[i] - ref.second[i]) <= 1e-12);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    std::vector<Parameter> p{{"w", Tensor(Shape{3}, std::vector<double>{1, -2, 3})}};
    Adam opt;
    for (int i = 0; i < 5; ++i) opt.step(p, {Tensor(Shape{3}, 0.0)});
    CHECK(p[0].value == Tensor(Shape{3}, std::vector<double>{1, -2, 3}));
    CHECK(opt.steps() == 5);
  }
  SUBCASE("first step moves against the gradient by about lr") {
    std::vector<Parameter> p{{"w", Tensor(Shape{3}, std::vector<double>{0.5, 0.5, 0.5})}};
    Adam opt;
    opt.step(p, {Tensor(Shape{3}, std::vector<double>{0.3, -0.02, 0.0})});
    CHECK(p[0].value[0] < 0.5);
    CHECK(p[0].value[1] > 0.5);
    CHECK(p[0].value[2] == 0.5);
    CHECK(0.5 - p[0].value[0] == doctest::Approx(1e-3 * 0.3 / (0.3 + 1e-8)).epsilon(1e-9));
  }
  SUBCASE("identical state and inputs give identical results") {
    std::vector<Parameter> p1{{"w", Tensor(Shape{2}, std::vector<double>{0.1, 0.2})}};
    auto p2 = p1;
    Adam a1, a2;
    for (int i = 0; i < 3; ++i) {
      a1.step(p1, {Tensor(Shape{2}, std::vector<double>{0.4, -7.0})});
      a2.step(p2, {Tensor(Shape{2}, std::vector<double>{0.4, -7.0})});
    }
    CHECK(p1[0].value == p2[0].value);
    CHECK(a1.first_moments() == a2.first_moments());
  }
  SUBCASE("NaN gradient names the parameter") {
    std::vector<Parameter> p{{"gate_fast.w", Tensor(Shape{1}, 0.0)}};
    Adam opt;
    try {
      opt.step(p, {Tensor(Shape{1}, std::nan(""))});
      FAIL("expected DomainError");
    } catch (const unimom::DomainError& e) {
      CHECK(std::string(e.what()).find("gate_fast.w") != std::string::npos);
    }
    CHECK(opt.steps() == 0);
  }
  SUBCASE("global norm clipping") {
    std::vector<Tensor> g{Tensor(Shape{2}, std::vector<double>{30, 40})};
    CHECK(clip_global_norm(g, 5.0) == doctest::Approx(50.0));
    CHECK(g[0][0] == doctest::Approx(3.0));
    CHECK(g[0][1] == doctest::Approx(4.0));
  }
}

TEST_CASE("finite_diff_check examples") {
  std::vector<Parameter> x{{"x", Tensor::scalar(3.0)}};
  CHECK(finite_diff_check([](Tape&, std::span<const Var> v) { return square(v[0]); }, x).max_rel_error < 1e-7);

  CHECK(finite_diff_check(
            [](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(4.2)); }, x)
            .max_rel_error < 1e-9);

  CHECK_THROWS_AS(finite_diff_check(
                      [](Tape&, std::span<const Var> v) { return mul_scalar(v[0], std::nan("")); }, x),
                  unimom::DomainError);
}
