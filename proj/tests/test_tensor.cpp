#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "title_forge/error.hpp"
#include "title_forge/ops.hpp"
#include "title_forge/tensor.hpp"

using namespace title_forge;

namespace {

using T64 = BasicTensor<double>;
using Tape64 = BasicTape<double>;

T64 random_tensor(std::mt19937_64& rng, Shape shape, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return T64(std::move(shape), std::move(v), grad);
}

// Random projection turns any output into a scalar with a non-trivial
// upstream gradient.
T64 project(const T64& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(rng, out.shape(), false);
  return ops::sum(ops::mul(out, w));
}

// Largest |analytic − numeric| over every element of every input, using
// central differences with step 1e-6.
double max_grad_error(std::vector<T64> inputs, const std::function<T64()>& loss_fn) {
  for (auto& in : inputs) in.clear_grad();
  Tape64 tape;
  {
    TapeScope<double> scope(tape);
    auto loss = loss_fn();
    tape.backward(loss);
  }
  double worst = 0.0;
  const double h = 1e-6;
  for (auto& in : inputs) {
    REQUIRE(in.has_grad());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double saved = in[i];
      in[i] = saved + h;
      const double up = loss_fn().item();
      in[i] = saved - h;
      const double down = loss_fn().item();
      in[i] = saved;
      worst = std::max(worst, std::abs((up - down) / (2 * h) - in.grad()[i]));
    }
  }
  return worst;
}

constexpr double kGradTol = 1e-7;

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction and shape checks") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 6.0f);
    CHECK(shape_string(t.shape()) == "[2,3]");
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), Error);
    try {
      (void)t.item();
      FAIL("expected NotScalar");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NotScalar);
    }
    CHECK(Tensor::scalar(2.5f).item() == 2.5f);
  }

  TEST_CASE("copies share storage, clones do not") {
    Tensor a({2}, {1, 2});
    Tensor b = a;
    Tensor c = a.clone();
    b[0] = 9;
    CHECK(a[0] == 9.0f);
    CHECK(c[0] == 1.0f);
  }

  TEST_CASE("forward values on small cases") {
    T64 a({2, 2}, {1, 2, 3, 4}), b({2, 2}, {5, 6, 7, 8});
    auto p = ops::matmul(a, b);
    CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{19, 22, 43, 50});
    auto pt = ops::matmul_transposed(a, b);
    CHECK(std::vector<double>(pt.data().begin(), pt.data().end()) == std::vector<double>{17, 23, 39, 53});

    T64 row({1, 3}, {1, 2, 3});
    auto s = ops::softmax(row, 1);
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(s[0] == doctest::Approx(std::exp(1.0) / z));
    CHECK(s[2] == doctest::Approx(std::exp(3.0) / z));

    T64 big({1, 2}, {1000, 1000});
    auto sb = ops::softmax(big, 1);
    CHECK(sb[0] == doctest::Approx(0.5));

    auto ln = ops::layer_norm(row, T64::full({3}, 1.0), T64::zeros({3}), 0.0);
    CHECK(ln[0] == doctest::Approx(-std::sqrt(1.5)));
    CHECK(ln[1] == doctest::Approx(0.0));
    CHECK(ln[2] == doctest::Approx(std::sqrt(1.5)));

    T64 logits = T64::zeros({3, 7});
    std::vector<TokenId> targets{1, 5, 0};
    CHECK(ops::cross_entropy(logits, targets, 0).item() == doctest::Approx(std::log(7.0)));

    CHECK_THROWS_AS(ops::matmul(a, row), Error);
  }

  TEST_CASE("cross entropy precondition errors") {
    T64 logits = T64::zeros({2, 4});
    std::vector<TokenId> pads{0, 0};
    try {
      ops::cross_entropy(logits, pads, 0);
      FAIL("expected EmptyTarget");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::EmptyTarget);
    }
    std::vector<TokenId> far{1, 9};
    try {
      ops::cross_entropy(logits, far, 0);
      FAIL("expected TargetOutOfRange");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TargetOutOfRange);
    }
  }

  TEST_CASE("nothing is recorded without an active tape") {
    Tape64 tape;
    T64 a({1}, {2.0}, true);
    auto b = ops::scale(a, 3.0);
    CHECK(tape.size() == 0);
    CHECK_FALSE(b.requires_grad());
    {
      TapeScope<double> scope(tape);
      auto c = ops::scale(a, 3.0);
      CHECK(tape.size() == 1);
      auto d = ops::scale(T64({1}, {1.0}), 2.0);  // no input needs a gradient
      CHECK(tape.size() == 1);
    }
  }

  TEST_CASE("backward errors") {
    Tape64 tape;
    TapeScope<double> scope(tape);
    T64 a({2}, {1.0, 2.0}, true);
    auto v = ops::scale(a, 2.0);
    try {
      tape.backward(v);
      FAIL("expected NotScalar");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::NotScalar);
    }
    auto loss = ops::sum(v);
    tape.backward(loss);
    CHECK(a.grad()[0] == 2.0);
    try {
      tape.backward(loss);
      FAIL("expected TapeClosed");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TapeClosed);
    }
    tape.reset();
    try {
      tape.backward(loss);  // produced by the previous recording
      FAIL("expected TapeClosed");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::TapeClosed);
    }
  }

  TEST_CASE("gradients accumulate over every use of a tensor") {
    Tape64 tape;
    TapeScope<double> scope(tape);
    T64 x({1}, {3.0}, true);
    auto loss = ops::sum(ops::add(ops::mul(x, x), x));  // x² + x
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(7.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
  }

  TEST_CASE("finite-difference gradients of every primitive") {
    std::mt19937_64 rng(3);
    auto a = random_tensor(rng, {3, 4});
    auto b = random_tensor(rng, {4, 5});
    auto bt = random_tensor(rng, {5, 4});
    auto c = random_tensor(rng, {3, 4});
    auto bias = random_tensor(rng, {4});
    auto gamma = random_tensor(rng, {4}, true, 0.5, 1.5);
    auto beta = random_tensor(rng, {4});
    auto table = random_tensor(rng, {6, 4});
    auto cube = random_tensor(rng, {2, 3, 4});

    SUBCASE("matmul") { CHECK(max_grad_error({a, b}, [&] { return project(ops::matmul(a, b), 1); }) < kGradTol); }
    SUBCASE("matmul_transposed") {
      CHECK(max_grad_error({a, bt}, [&] { return project(ops::matmul_transposed(a, bt), 2); }) < kGradTol);
    }
    SUBCASE("add and mul") {
      CHECK(max_grad_error({a, c}, [&] { return project(ops::mul(ops::add(a, c), c), 3); }) < kGradTol);
    }
    SUBCASE("add_bias and scale") {
      CHECK(max_grad_error({a, bias}, [&] { return project(ops::scale(ops::add_bias(a, bias), 0.7), 4); }) <
            kGradTol);
    }
    SUBCASE("relu away from the kink") {
      auto r = random_tensor(rng, {3, 4}, true, 0.1, 1.0);
      for (std::size_t i = 0; i < r.numel(); i += 2) r[i] = -r[i];
      CHECK(max_grad_error({r}, [&] { return project(ops::relu(r), 5); }) < kGradTol);
    }
    SUBCASE("softmax on each axis") {
      CHECK(max_grad_error({a}, [&] { return project(ops::softmax(a, 1), 6); }) < kGradTol);
      CHECK(max_grad_error({a}, [&] { return project(ops::softmax(a, 0), 7); }) < kGradTol);
      CHECK(max_grad_error({cube}, [&] { return project(ops::softmax(cube, 1), 8); }) < kGradTol);
    }
    SUBCASE("layer_norm") {
      CHECK(max_grad_error({a, gamma, beta}, [&] { return project(ops::layer_norm(a, gamma, beta), 9); }) <
            kGradTol);
    }
    SUBCASE("embedding with repeated ids") {
      std::vector<TokenId> ids{1, 4, 1, 5};
      CHECK(max_grad_error({table}, [&] { return project(ops::embedding(table, std::span<const TokenId>(ids)), 10); }) <
            kGradTol);
    }
    SUBCASE("mask_fill") {
      std::vector<std::uint8_t> mask{1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 1};
      CHECK(max_grad_error({a}, [&] { return project(ops::mask_fill(a, std::span<const std::uint8_t>(mask), -5.0), 11); }) <
            kGradTol);
    }
    SUBCASE("cross_entropy ignores pad rows") {
      std::vector<TokenId> targets{2, 0, 3};
      CHECK(max_grad_error({a}, [&] { return ops::cross_entropy(a, std::span<const TokenId>(targets), 0); }) < kGradTol);
    }
    SUBCASE("sum and mean") {
      CHECK(max_grad_error({a}, [&] { return ops::mean(ops::mul(a, a)); }) < kGradTol);
    }
    SUBCASE("slices and concatenations") {
      auto loss = [&] {
        std::vector<T64> cols{ops::slice_columns(a, 1, 2), c};
        auto wide = ops::concat_columns(std::span<const T64>(cols));  // [3, 6]
        std::vector<T64> rows{wide, wide};
        auto tall = ops::concat_rows(std::span<const T64>(rows));  // [6, 6]
        return project(ops::slice_rows(tall, 1, 4), 12);
      };
      CHECK(max_grad_error({a, c}, loss) < kGradTol);
    }
    SUBCASE("dropout with a fixed mask") {
      CHECK(max_grad_error({a}, [&] {
              std::mt19937_64 mask_rng(99);
              return project(ops::dropout(a, 0.3, true, &mask_rng), 13);
            }) < kGradTol);
    }
  }

  TEST_CASE("dropout statistics") {
    const std::size_t n = 200000;
    const double p = 0.1;
    T64 ones = T64::full({n}, 1.0);
    std::mt19937_64 rng(21);
    auto out = ops::dropout(ones, p, true, &rng);
    std::size_t zeros = 0;
    for (double v : out.data()) {
      if (v == 0.0) {
        ++zeros;
      } else {
        CHECK(v == doctest::Approx(1.0 / (1.0 - p)));
      }
    }
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(zeros) / n - p) < 3 * sigma);

    auto eval = ops::dropout(ones, p, false, &rng);
    for (double v : eval.data()) CHECK(v == 1.0);
  }
}
