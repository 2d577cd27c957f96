#include <doctest.h>

#include <cmath>
#include <string>

#include "etp/autograd.hpp"
#include "etp/errors.hpp"
#include "etp/gradcheck.hpp"
#include "helpers.hpp"

using namespace etp;

TEST_CASE("tensor construction and access") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(t.dim(2), IndexError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK(shape_str({2, 3}) == "[2x3]");
}

TEST_CASE("matmul") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  auto b = tape.constant(Tensor({2, 1}, {3, 4}));
  CHECK(matmul(a, b).value().data == std::vector<double>{3, 4});

  auto c = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  auto d = tape.constant(Tensor({2, 1}, {5, 6}));
  CHECK(matmul(c, d).value().data == std::vector<double>{17, 39});

  auto e = tape.constant(Tensor({2, 3}));
  auto f = tape.constant(Tensor({4, 5}));
  try {
    matmul(e, f);
    FAIL("expected DimensionError");
  } catch (const DimensionError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x5]") != std::string::npos);
  }
}

TEST_CASE("conv2d") {
  Tape tape;
  auto ones = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  auto kernel = tape.constant(Tensor({1, 1, 3, 3}, 1.0));
  auto out = conv2d(ones, kernel, 1, 0);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out.item() == 9.0);

  Tensor ramp({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) ramp.data[i] = static_cast<double>(i);
  auto r = conv2d(tape.constant(ramp), tape.constant(Tensor({1, 1, 2, 2}, {1, 0, 0, 1})), 2, 0);
  CHECK(r.value().data == std::vector<double>{5, 9, 21, 25});

  auto small = tape.constant(Tensor({1, 1, 2, 2}, 1.0));
  CHECK_THROWS_AS(conv2d(small, kernel, 1, 0), DimensionError);
  CHECK(conv_output_size(32, 3, 1, 1) == 32);
  CHECK_THROWS_AS(conv_output_size(2, 3, 1, 0), DimensionError);
}

TEST_CASE("relu") {
  Tape tape;
  CHECK(relu(tape.constant(Tensor({3}, {-1, 0, 2}))).value().data == std::vector<double>{0, 0, 2});
  CHECK(relu(tape.constant(Tensor({4}, -3.0))).value().data == std::vector<double>(4, 0.0));

  Tensor x({2}, {-1, 3});
  x.requires_grad = true;
  Tape t2;
  t2.backward(sum(relu(t2.watch(x))));
  CHECK(x.grad == std::vector<double>{0, 1});
}

TEST_CASE("softmax cross entropy") {
  Tape tape;
  const std::vector<std::size_t> zero{0};
  CHECK(softmax_cross_entropy(tape.constant(Tensor({1, 2}, 0.0)), zero).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double stable = softmax_cross_entropy(tape.constant(Tensor({1, 2}, {1000, -1000})), zero).item();
  CHECK(std::isfinite(stable));
  CHECK(stable == doctest::Approx(0.0));
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor({1, 2}, 0.0)), bad), IndexError);
}

TEST_CASE("mse loss") {
  Tape tape;
  auto p = tape.constant(Tensor({2}, {1, 2}));
  CHECK(mse_loss(p, p).item() == 0.0);
  CHECK(mse_loss(p, tape.constant(Tensor({2}, 0.0))).item() == 2.5);
  CHECK_THROWS_AS(mse_loss(tape.constant(Tensor({2, 2})), tape.constant(Tensor({2, 3}))), DimensionError);
}

TEST_CASE("backward") {
  Tensor x({3}, {1, 2, 3});
  x.requires_grad = true;
  {
    Tape tape;
    tape.backward(sum(tape.watch(x)));
    CHECK(x.grad == std::vector<double>{1, 1, 1});
  }
  Tensor y({2}, {1, 2});
  y.requires_grad = true;
  {
    Tape tape;
    auto v = tape.watch(y);
    tape.backward(sum(mul(v, v)));
    CHECK(y.grad == std::vector<double>{2, 4});
  }
  Tape tape;
  auto v = tape.watch(y);
  CHECK_THROWS_AS(tape.backward(scale(v, 2.0)), ContractError);
}

TEST_CASE("gradients accumulate across backward passes") {
  Tensor x({2}, {1, 2});
  x.requires_grad = true;
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(tape.watch(x)));
  }
  CHECK(x.grad == std::vector<double>{2, 2});
}

TEST_CASE("finite differences") {
  const auto sum_f = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data) s += v;
    return s;
  };
  const auto fd = finite_diff_grad(sum_f, test::random_tensor({5}, 3), 1e-4);
  for (double g : fd.grad.data) CHECK(g == doctest::Approx(1.0).epsilon(1e-8));

  const auto sq = finite_diff_grad([](const Tensor& t) { return t.data[0] * t.data[0]; }, Tensor({1}, {3.0}), 1e-4);
  CHECK(std::abs(sq.grad.data[0] - 6.0) < 1e-6);
  CHECK(sq.reliable);

  const auto norm = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data) s += v * v;
    return std::sqrt(s);
  };
  Tensor tiny({2}, {6e-10, 8e-10});
  const auto flagged = finite_diff_grad(norm, tiny, 1e-4);
  CHECK_FALSE(flagged.reliable);
  CHECK_THROWS_AS(finite_diff_grad(norm, tiny, 0.0), ContractError);
}

namespace {

// Checks d(sum(w . op(x)))/dx against finite differences for a unary op.
template <typename Op>
void check_op_gradient(Op op, Tensor x, std::uint64_t seed, double tol = 1e-6) {
  Tensor probe;
  {
    Tape tape;
    probe = test::random_tensor(op(tape.constant(x)).shape(), seed);
  }
  const auto f = [&](const Tensor& in) {
    Tape tape;
    return sum(mul(op(tape.constant(in)), tape.constant(probe))).item();
  };
  x.requires_grad = true;
  x.clear_grad();
  Tape tape;
  tape.backward(sum(mul(op(tape.watch(x)), tape.constant(probe))));
  const auto fd = finite_diff_grad(f, x, 1e-5);
  CHECK(max_relative_error(x.grad, fd.grad.data, 1e-6) < tol);
}

}  // namespace

TEST_CASE("op gradients match finite differences") {
  const Tensor w = test::random_tensor({3, 4}, 11);
  check_op_gradient([&](Var x) { return matmul(x, x.tape().constant(w)); }, test::random_tensor({2, 3}, 1), 21);
  check_op_gradient([&](Var x) { return matmul(x.tape().constant(w), x); }, test::random_tensor({4, 2}, 2), 22);
  check_op_gradient([](Var x) { return transpose(x); }, test::random_tensor({2, 3}, 3), 23);
  check_op_gradient([](Var x) { return relu(x); }, test::random_tensor({2, 5}, 4), 24);
  check_op_gradient([](Var x) { return add_row_bias(x, x.tape().constant(Tensor({3}, {1, 2, 3}))); },
                    test::random_tensor({2, 3}, 5), 25);
  check_op_gradient([](Var b) { return add_row_bias(b.tape().constant(Tensor({2, 3}, 1.0)), b); },
                    test::random_tensor({3}, 6), 26);
  const Tensor kernel = test::random_tensor({3, 2, 3, 3}, 12);
  check_op_gradient([&](Var x) { return conv2d(x, x.tape().constant(kernel), 1, 1); },
                    test::random_tensor({2, 2, 5, 5}, 7), 27);
  check_op_gradient([&](Var x) { return conv2d(x, x.tape().constant(kernel), 2, 0); },
                    test::random_tensor({1, 2, 6, 6}, 8), 28);
  const Tensor input = test::random_tensor({2, 2, 5, 4}, 13);
  check_op_gradient([&](Var k) { return conv2d(k.tape().constant(input), k, 1, 1); },
                    test::random_tensor({3, 2, 3, 3}, 9), 29);
  check_op_gradient([](Var b) { return add_channel_bias(b.tape().constant(Tensor({2, 2, 3, 3}, 0.5)), b); },
                    test::random_tensor({2}, 10), 30);
  check_op_gradient([](Var x) { return reshape(x, {2, 12}); }, test::random_tensor({2, 3, 2, 2}, 14), 31);
  check_op_gradient([](Var x) { return group_norms(x, std::nullopt); }, test::random_tensor({4, 3}, 15), 32);
  check_op_gradient([](Var x) { return group_norms(x, x.tape().constant(Tensor({4}, {1, -1, 0.5, 2}))); },
                    test::random_tensor({4, 3}, 16), 33);
}

TEST_CASE("loss gradients match finite differences") {
  const std::vector<std::size_t> labels{0, 2, 1};
  const auto ce = [&](const Tensor& in) {
    Tape tape;
    return softmax_cross_entropy(tape.constant(in), labels).item();
  };
  Tensor logits = test::random_tensor({3, 3}, 40, -2, 2);
  logits.requires_grad = true;
  {
    Tape tape;
    tape.backward(softmax_cross_entropy(tape.watch(logits), labels));
  }
  CHECK(max_relative_error(logits.grad, finite_diff_grad(ce, logits, 1e-5).grad.data) < 1e-6);

  const Tensor target = test::random_tensor({3, 2}, 41);
  const auto mse = [&](const Tensor& in) {
    Tape tape;
    return mse_loss(tape.constant(in), tape.constant(target)).item();
  };
  Tensor pred = test::random_tensor({3, 2}, 42);
  pred.requires_grad = true;
  {
    Tape tape;
    tape.backward(mse_loss(tape.watch(pred), tape.constant(target)));
  }
  CHECK(max_relative_error(pred.grad, finite_diff_grad(mse, pred, 1e-5).grad.data) < 1e-6);
}

TEST_CASE("group norms of a zero group have zero gradient") {
  Tensor w({2, 2}, {0, 0, 3, 4});
  w.requires_grad = true;
  Tape tape;
  auto norms = group_norms(tape.watch(w), std::nullopt);
  CHECK(norms.value().data == std::vector<double>{0, 5});
  tape.backward(sum(norms));
  CHECK(w.grad[0] == 0.0);
  CHECK(w.grad[1] == 0.0);
  CHECK(w.grad[2] == doctest::Approx(0.6));
  CHECK(w.grad[3] == doctest::Approx(0.8));
}
