#pragma once

#include <functional>
#include <span>
#include <vector>

namespace gcalib {

// Dense row-major matrix of 64-bit reals. Calibrator parameter sets are tiny,
// so everything runs in double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameter_index_of_max = 0;
};

namespace kernels {

// Row-wise softmax with max subtraction. Throws NonFiniteInput on NaN/inf.
Matrix softmax_rows(const Matrix& m);

// Row-wise log-softmax computed in the log domain.
Matrix log_softmax_rows(const Matrix& m);

// ln(1 + e^x) without overflow; gradient is the logistic function.
double softplus(double x);
double softplus_grad(double x);

double leaky_relu(double x, double slope);
double leaky_relu_grad(double x, double slope);

// Min-max normalizes each row to [0,1]; constant rows become all zeros.
Matrix normalize_logits(const Matrix& z);

// Min-max normalize then sort each row descending (stable ties).
Matrix normalize_and_sort_logits(const Matrix& z);

// Index of the row maximum, ties broken to the lowest index.
int argmax(std::span<const double> row);

// Central-difference check of an analytic gradient, step 1e-5. Relative
// error per coordinate is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport check_gradient(const std::function<double(const std::vector<double>&)>& f,
                               const std::function<std::vector<double>(const std::vector<double>&)>& grad_f,
                               const std::vector<double>& at);

}  // namespace kernels
}  // namespace gcalib
