#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gcalib/errors.hpp"
#include "gcalib/kernels.hpp"
#include "gcalib/rng.hpp"

using namespace gcalib;
using namespace gcalib::kernels;

namespace {

Matrix row_matrix(std::vector<double> values) {
  Matrix m(1, static_cast<int>(values.size()));
  m.data = std::move(values);
  return m;
}

}  // namespace

TEST_CASE("softmax of simple rows") {
  const Matrix a = softmax_rows(row_matrix({0.0, 0.0}));
  CHECK(a(0, 0) == doctest::Approx(0.5));
  CHECK(a(0, 1) == doctest::Approx(0.5));

  const Matrix b = softmax_rows(row_matrix({1.0, 0.0}));
  CHECK(b(0, 0) == doctest::Approx(0.731059).epsilon(1e-5));
  CHECK(b(0, 1) == doctest::Approx(0.268941).epsilon(1e-5));

  const Matrix c = softmax_rows(row_matrix({1000.0, 0.0}));
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c(0, 1) == doctest::Approx(0.0));
  CHECK(std::isfinite(c(0, 0)));
}

TEST_CASE("softmax rejects non-finite input") {
  CHECK_THROWS_AS(softmax_rows(row_matrix({std::nan(""), 0.0})), NonFiniteInput);
  CHECK_THROWS_AS(softmax_rows(row_matrix({std::numeric_limits<double>::infinity(), 0.0})), NonFiniteInput);
}

TEST_CASE("softmax rows sum to one under extreme magnitudes") {
  Rng rng(31);
  const int rows = 1000, cols = 6;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double scale = (i % 3 == 0) ? 1e3 : (i % 3 == 1) ? 1.0 : 1e-3;
    for (int k = 0; k < cols; ++k) m(i, k) = (2.0 * rng.next_double() - 1.0) * scale;
  }
  const Matrix p = softmax_rows(m);
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int k = 0; k < cols; ++k) sum += p(i, k);
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("log softmax values and consistency") {
  const Matrix a = log_softmax_rows(row_matrix({0.0, 0.0}));
  CHECK(a(0, 0) == doctest::Approx(-std::log(2.0)));

  const Matrix b = log_softmax_rows(row_matrix({1.0, 0.0}));
  CHECK(b(0, 0) == doctest::Approx(-0.313262).epsilon(1e-5));
  CHECK(b(0, 1) == doctest::Approx(-1.313262).epsilon(1e-5));

  Rng rng(77);
  Matrix m(50, 4);
  for (double& v : m.data) v = 4.0 * rng.next_double() - 2.0;
  const Matrix ls = log_softmax_rows(m);
  for (int i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (int k = 0; k < m.cols; ++k) sum += std::exp(ls(i, k));
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softplus and its gradient") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus_grad(0.0) == doctest::Approx(0.5));
  CHECK(softplus(50.0) == doctest::Approx(50.0));
  CHECK(std::isfinite(softplus(800.0)));
  CHECK(softplus(-800.0) == doctest::Approx(0.0));
}

TEST_CASE("leaky relu") {
  CHECK(leaky_relu(2.0, 0.2) == doctest::Approx(2.0));
  CHECK(leaky_relu(-1.0, 0.2) == doctest::Approx(-0.2));
  CHECK(leaky_relu(0.0, 0.2) == doctest::Approx(0.0));
}

TEST_CASE("normalize_and_sort_logits") {
  const Matrix a = normalize_and_sort_logits(row_matrix({2.0, -1.0, 0.0}));
  CHECK(a(0, 0) == doctest::Approx(1.0));
  CHECK(a(0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(a(0, 2) == doctest::Approx(0.0));

  const Matrix degenerate = normalize_and_sort_logits(row_matrix({5.0, 5.0, 5.0}));
  for (double v : degenerate.data) CHECK(v == 0.0);

  const Matrix two = normalize_and_sort_logits(row_matrix({0.0, 1.0}));
  CHECK(two(0, 0) == doctest::Approx(1.0));
  CHECK(two(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("normalized sorted rows are nonincreasing within [0,1]") {
  Rng rng(15);
  Matrix m(200, 5);
  for (double& v : m.data) v = 20.0 * rng.next_double() - 10.0;
  const Matrix s = normalize_and_sort_logits(m);
  for (int i = 0; i < s.rows; ++i) {
    for (int k = 0; k < s.cols; ++k) {
      CHECK(s(i, k) >= 0.0);
      CHECK(s(i, k) <= 1.0);
      if (k > 0) CHECK(s(i, k) <= s(i, k - 1));
    }
  }
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  const std::vector<double> v = {0.2, 0.5, 0.5};
  CHECK(argmax(v) == 1);
  const std::vector<double> u = {0.7, 0.1, 0.7};
  CHECK(argmax(u) == 0);
}

TEST_CASE("gradient checker accepts correct gradients") {
  const auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const auto square_grad = [](const std::vector<double>& x) { return std::vector<double>{2.0 * x[0]}; };
  const auto report = check_gradient(square, square_grad, {3.0});
  CHECK(report.max_relative_error < 1e-7);

  const auto sp = [](const std::vector<double>& x) { return softplus(x[0]); };
  const auto sp_grad = [](const std::vector<double>& x) { return std::vector<double>{softplus_grad(x[0])}; };
  CHECK(check_gradient(sp, sp_grad, {0.0}).max_relative_error < 1e-7);
}

TEST_CASE("gradient checker flags a wrong gradient") {
  const auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const auto wrong = [](const std::vector<double>& x) { return std::vector<double>{2.0 * x[0] + 1.0}; };
  const auto report = check_gradient(square, wrong, {3.0});
  CHECK(report.max_relative_error > 1e-2);
  CHECK(report.parameter_index_of_max == 0);
}
