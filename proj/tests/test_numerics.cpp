#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace lgse;
using testing::fd_error;
using testing::random_mat;

TEST_CASE("matmul equals the triple loop") {
  Rng rng(1);
  const Mat a = random_mat(rng, 6, 4), b = random_mat(rng, 4, 5);
  Tape t;
  const Mat c = matmul(t.constant(a), t.constant(b)).value();
  const Mat cnt = matmul_nt(t.constant(a), t.constant(b.transpose())).value();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) < 1e-14);
      CHECK(std::abs(cnt(i, j) - s) < 1e-14);
    }
}

TEST_CASE("softmax rows are stable and normalized") {
  Tape t;
  Mat x(2, 3);
  x << 1000, 1001, 1002, -5, 0, 5;
  const Mat y = softmax_rows(t.constant(x)).value();
  CHECK(y.allFinite());
  CHECK(std::abs(y.row(0).sum() - 1.0) < 1e-15);
  CHECK(std::abs(y(0, 2) / y(0, 1) - std::exp(1.0)) < 1e-12);
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
  Rng rng(2);
  Tape t;
  const Mat y = layer_norm_rows(t.constant(random_mat(rng, 3, 16)), t.constant(Mat::Ones(1, 16)),
                                t.constant(Mat::Zero(1, 16)), 0.0)
                    .value();
  for (int r = 0; r < 3; ++r) {
    CHECK(std::abs(y.row(r).mean()) < 1e-14);
    CHECK(std::abs(y.row(r).squaredNorm() / 16 - 1.0) < 1e-12);
  }
}

TEST_CASE("elementwise and structural ops pass gradient checks") {
  Rng rng(3);
  Parameter a("a", random_mat(rng, 3, 4, 0.5, 1.5));
  Parameter b("b", random_mat(rng, 3, 4, 0.5, 1.5));
  Parameter r("r", random_mat(rng, 1, 4));
  Parameter s("s", random_mat(rng, 1, 1, 0.5, 1.0));
  const Mat w = random_mat(rng, 3, 4);
  auto weighted = [&](Tape& t, Var v) { return sum(mul(v, t.constant(w))); };

  SUBCASE("arithmetic") {
    CHECK(fd_error({&a, &b}, [&](Tape& t, auto& v) { return weighted(t, add(mul(v[0], v[1]), div(v[0], v[1]))); }) <
          1e-7);
    CHECK(fd_error({&a, &b}, [&](Tape& t, auto& v) { return weighted(t, sub(square(v[0]), scale(v[1], 3))); }) < 1e-7);
  }
  SUBCASE("broadcasts") {
    CHECK(fd_error({&a, &r, &s}, [&](Tape& t, auto& v) {
            return weighted(t, add_by(mul_by(add_row(v[0], v[1]), v[2]), v[2]));
          }) < 1e-7);
  }
  SUBCASE("nonlinearities") {
    CHECK(fd_error({&a}, [&](Tape& t, auto& v) { return weighted(t, log(exp(sigmoid(v[0])))); }) < 1e-7);
    CHECK(fd_error({&a}, [&](Tape& t, auto& v) { return weighted(t, relu(add_scalar(v[0], -1.0))); }) < 1e-6);
    CHECK(fd_error({&a}, [&](Tape& t, auto& v) { return weighted(t, abs(add_scalar(v[0], -1.0))); }) < 1e-6);
  }
  SUBCASE("attention pieces") {
    CHECK(fd_error({&a, &r}, [&](Tape& t, auto& v) {
            return weighted(t, softmax_rows(layer_norm_rows(v[0], v[1], v[1])));
          }) < 1e-6);
    CHECK(fd_error({&a, &b}, [&](Tape& t, auto& v) { return sum(matmul(matmul_nt(v[0], v[1]), v[0])); }) < 1e-7);
    CHECK(fd_error({&a}, [&](Tape& t, auto& v) { return weighted(t, transpose(transpose(v[0]))); }) < 1e-7);
  }
  SUBCASE("slicing and gathering") {
    CHECK(fd_error({&a, &b}, [&](Tape&, auto& v) {
            Var c = concat_cols({slice_cols(v[0], 1, 2), slice_rows(v[1], 0, 3)});
            return mean(square(c));
          }) < 1e-7);
    CHECK(fd_error({&r}, [&](Tape& t, auto& v) {
            Var g = gather(v[0], {0, 0, 3, 2, 1});
            return sum(mul(toeplitz(g, 3), t.constant(Mat::Constant(3, 3, 0.7)))) ;
          }) < 1e-7);
    CHECK(fd_error({&a}, [&](Tape&, auto& v) { return mul(pick(v[0], 1, 2), pick(v[0], 2, 3)); }) < 1e-7);
  }
  SUBCASE("rotation and loss") {
    CHECK(fd_error({&a}, [&](Tape& t, auto& v) { return weighted(t, rope_rotate(v[0])); }) < 1e-7);
    CHECK(fd_error({&a, &b}, [&](Tape&, auto& v) { return mse(v[0], v[1]); }) < 1e-7);
  }
}

TEST_CASE("toeplitz layout") {
  Tape t;
  Mat off(1, 5);
  off << 10, 11, 12, 13, 14;  // offsets -2..2
  const Mat m = toeplitz(t.constant(off), 3).value();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(m(i, j) == off(0, i - j + 2));
}

TEST_CASE("rope rotation matches the closed form") {
  Rng rng(4);
  const Mat x = random_mat(rng, 5, 6);
  Tape t;
  const Mat y = rope_rotate(t.constant(x)).value();
  for (int l = 0; l < 5; ++l)
    for (int m = 0; m < 3; ++m) {
      const double th = l * std::pow(10000.0, -2.0 * m / 6.0);
      CHECK(std::abs(y(l, 2 * m) - (x(l, 2 * m) * std::cos(th) - x(l, 2 * m + 1) * std::sin(th))) < 1e-14);
      CHECK(std::abs(y(l, 2 * m + 1) - (x(l, 2 * m) * std::sin(th) + x(l, 2 * m + 1) * std::cos(th))) < 1e-14);
    }
}

TEST_CASE("contract violations") {
  Tape t;
  Var a = t.constant(Mat::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, a), DimensionError);
  CHECK_THROWS_AS(add(a, t.constant(Mat::Ones(3, 2))), DimensionError);
  CHECK_THROWS_AS(t.backward(a), ContractError);
}

TEST_CASE("gradients accumulate across backward passes until zeroed") {
  Parameter p("p", Mat::Constant(1, 1, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(square(t.parameter(p)));
  }
  CHECK(p.grad(0, 0) == doctest::Approx(8.0));
  p.zero_grad();
  CHECK(p.grad(0, 0) == 0.0);
}

TEST_CASE("inference tape records no gradients") {
  Parameter p("p", Mat::Ones(2, 2));
  Tape t(false);
  Var y = sum(square(t.parameter(p)));
  CHECK_FALSE(t.needs_grad(y.id()));
}

TEST_CASE("rng is portable and restorable") {
  Rng a(42), b(42);
  for (int i = 0; i < 5; ++i) CHECK(a.normal() == b.normal());
  a.normal();
  const std::string st = a.state();
  const double next = a.normal();
  Rng c;
  c.set_state(st);
  CHECK(c.normal() == next);
  CHECK(sub_seed(1, "model") != sub_seed(1, "pe"));
  CHECK(sub_seed(1, "model") != sub_seed(2, "model"));
  for (int i = 0; i < 1000; ++i) {
    const auto v = a.integer(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
  }
}
