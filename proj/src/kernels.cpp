#include "gcalib/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcalib/errors.hpp"

namespace gcalib::kernels {

namespace {

void require_finite(const Matrix& m, const char* op) {
  for (double v : m.data) {
    if (!std::isfinite(v)) throw NonFiniteInput(std::string(op) + ": non-finite entry");
  }
}

}  // namespace

Matrix softmax_rows(const Matrix& m) {
  require_finite(m, "softmax_rows");
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    auto in = m.row(i);
    auto dst = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (int k = 0; k < m.cols; ++k) {
      dst[k] = std::exp(in[k] - mx);
      sum += dst[k];
    }
    for (int k = 0; k < m.cols; ++k) dst[k] /= sum;
  }
  return out;
}

Matrix log_softmax_rows(const Matrix& m) {
  require_finite(m, "log_softmax_rows");
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    auto in = m.row(i);
    auto dst = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (int k = 0; k < m.cols; ++k) dst[k] = in[k] - lse;
  }
  return out;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_grad(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double leaky_relu(double x, double slope) { return x >= 0.0 ? x : slope * x; }

double leaky_relu_grad(double x, double slope) { return x >= 0.0 ? 1.0 : slope; }

Matrix normalize_logits(const Matrix& z) {
  Matrix out(z.rows, z.cols);
  for (int i = 0; i < z.rows; ++i) {
    auto in = z.row(i);
    auto dst = out.row(i);
    double lo = in[0], hi = in[0];
    for (double v : in) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double range = hi - lo;
    if (range == 0.0) {
      for (int k = 0; k < z.cols; ++k) dst[k] = 0.0;
    } else {
      for (int k = 0; k < z.cols; ++k) dst[k] = (in[k] - lo) / range;
    }
  }
  return out;
}

Matrix normalize_and_sort_logits(const Matrix& z) {
  Matrix out = normalize_logits(z);
  for (int i = 0; i < out.rows; ++i) {
    auto r = out.row(i);
    std::stable_sort(r.begin(), r.end(), std::greater<double>());
  }
  return out;
}

int argmax(std::span<const double> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

GradCheckReport check_gradient(const std::function<double(const std::vector<double>&)>& f,
                               const std::function<std::vector<double>(const std::vector<double>&)>& grad_f,
                               const std::vector<double>& at) {
  constexpr double kStep = 1e-5;
  const std::vector<double> analytic = grad_f(at);
  GradCheckReport report;
  std::vector<double> x = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    x[i] = at[i] + kStep;
    const double fp = f(x);
    x[i] = at[i] - kStep;
    const double fm = f(x);
    x[i] = at[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NonFiniteInput("check_gradient: non-finite objective");
    const double numeric = (fp - fm) / (2.0 * kStep);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.parameter_index_of_max = i;
    }
  }
  return report;
}

}  // namespace gcalib::kernels
