#include "gcalib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcalib/errors.hpp"

namespace gcalib::metrics {

namespace {

std::vector<int> sorted_eval_set(const std::vector<int>& eval_set) {
  std::vector<int> s = eval_set;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

void check_probability_rows(const Matrix& probs, const std::vector<int>& eval_set) {
  for (int i : eval_set) {
    double sum = 0.0;
    for (double v : probs.row(i)) sum += v;
    if (!(std::abs(sum - 1.0) <= 1e-6)) {
      throw NotAProbability("row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

double row_confidence(const Matrix& probs, int i) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : probs.row(i)) mx = std::max(mx, v);
  return mx;
}

}  // namespace

int bin_index(double confidence, int num_bins) {
  int idx = static_cast<int>(std::ceil(confidence * num_bins)) - 1;
  idx = std::clamp(idx, 0, num_bins - 1);
  // Fix up against the definitional edges so boundary values bin exactly.
  while (idx > 0 && confidence <= static_cast<double>(idx) / num_bins) --idx;
  while (idx < num_bins - 1 && confidence > static_cast<double>(idx + 1) / num_bins) ++idx;
  return idx;
}

BinStats reliability_bins(const Matrix& probs, const std::vector<int>& labels,
                          const std::vector<int>& eval_set, int num_bins) {
  if (eval_set.empty()) throw EmptyEvalSet("reliability_bins: empty eval set");
  if (num_bins < 1) throw InvalidConfig("reliability_bins: num_bins must be >= 1");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  check_probability_rows(probs, nodes);

  BinStats bins;
  bins.num_bins = num_bins;
  bins.total = static_cast<int>(nodes.size());
  bins.count.assign(num_bins, 0);
  bins.acc.assign(num_bins, std::numeric_limits<double>::quiet_NaN());
  bins.conf.assign(num_bins, std::numeric_limits<double>::quiet_NaN());

  std::vector<int> correct(num_bins, 0);
  std::vector<double> conf_sum(num_bins, 0.0);
  for (int i : nodes) {
    const double c = row_confidence(probs, i);
    const int m = bin_index(c, num_bins);
    bins.count[m]++;
    conf_sum[m] += c;
    if (kernels::argmax(probs.row(i)) == labels[i]) correct[m]++;
  }
  for (int m = 0; m < num_bins; ++m) {
    if (bins.count[m] > 0) {
      bins.acc[m] = static_cast<double>(correct[m]) / bins.count[m];
      bins.conf[m] = conf_sum[m] / bins.count[m];
    }
  }
  return bins;
}

double ece(const BinStats& bins) {
  double total = 0.0;
  for (int m = 0; m < bins.num_bins; ++m) {
    if (bins.count[m] == 0) continue;
    total += (static_cast<double>(bins.count[m]) / bins.total) * std::abs(bins.acc[m] - bins.conf[m]);
  }
  return total;
}

std::vector<double> nodewise_calibration_error(const BinStats& bins, const Matrix& probs,
                                               const std::vector<int>& labels,
                                               const std::vector<int>& eval_set) {
  if (eval_set.empty()) throw EmptyEvalSet("nodewise_calibration_error: empty eval set");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  check_probability_rows(probs, nodes);
  (void)labels;
  std::vector<double> out;
  out.reserve(nodes.size());
  for (int i : nodes) {
    const int m = bin_index(row_confidence(probs, i), bins.num_bins);
    out.push_back(std::abs(bins.acc[m] - bins.conf[m]));
  }
  return out;
}

double classwise_ece(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<int>& eval_set, int num_bins) {
  if (eval_set.empty()) throw EmptyEvalSet("classwise_ece: empty eval set");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  check_probability_rows(probs, nodes);
  const int num_classes = probs.cols;
  const double n = static_cast<double>(nodes.size());

  double total = 0.0;
  std::vector<int> count(num_bins), hits(num_bins);
  std::vector<double> conf_sum(num_bins);
  for (int k = 0; k < num_classes; ++k) {
    std::fill(count.begin(), count.end(), 0);
    std::fill(hits.begin(), hits.end(), 0);
    std::fill(conf_sum.begin(), conf_sum.end(), 0.0);
    for (int i : nodes) {
      const double p = probs(i, k);
      const int m = bin_index(p, num_bins);  // p == 0 falls in bin 0
      count[m]++;
      conf_sum[m] += p;
      if (labels[i] == k) hits[m]++;
    }
    for (int m = 0; m < num_bins; ++m) {
      if (count[m] == 0) continue;
      const double freq = static_cast<double>(hits[m]) / count[m];
      const double conf = conf_sum[m] / count[m];
      total += (count[m] / n) * std::abs(freq - conf);
    }
  }
  return total / num_classes;
}

double kde_ece(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set) {
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  if (nodes.size() < 2) throw TooFewSamples("kde_ece: need at least 2 evaluated nodes");
  check_probability_rows(probs, nodes);

  const std::size_t n = nodes.size();
  std::vector<double> conf(n);
  std::vector<char> correct(n);
  double mean = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const int i = nodes[t];
    conf[t] = row_confidence(probs, i);
    correct[t] = kernels::argmax(probs.row(i)) == labels[i];
    mean += conf[t];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double c : conf) var += (c - mean) * (c - mean);
  const double sigma = std::sqrt(var / static_cast<double>(n));
  double h = 1.06 * sigma * std::pow(static_cast<double>(n), -0.2);
  if (h < 1e-3) h = 1e-3;

  // Triweight kernel profile on [-1, 1].
  const auto kappa = [](double t) {
    if (std::abs(t) >= 1.0) return 0.0;
    const double u = 1.0 - t * t;
    return (35.0 / 32.0) * u * u * u;
  };

  constexpr int kGridPoints = 1024;
  std::vector<double> integrand(kGridPoints, 0.0);
  for (int gpt = 0; gpt < kGridPoints; ++gpt) {
    const double c = static_cast<double>(gpt) / (kGridPoints - 1);
    double ksum = 0.0, khit = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = kappa((c - conf[t]) / h);
      ksum += w;
      if (correct[t]) khit += w;
    }
    if (ksum <= 0.0) continue;  // empty kernel support
    const double pi_hat = khit / ksum;
    const double density = ksum / (static_cast<double>(n) * h);
    integrand[gpt] = std::abs(pi_hat - c) * density;
  }
  double integral = 0.0;
  const double dx = 1.0 / (kGridPoints - 1);
  for (int gpt = 0; gpt + 1 < kGridPoints; ++gpt) {
    integral += 0.5 * (integrand[gpt] + integrand[gpt + 1]) * dx;
  }
  return std::clamp(integral, 0.0, 1.0);
}

double nll(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set) {
  if (eval_set.empty()) throw EmptyEvalSet("nll: empty eval set");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  double total = 0.0;
  for (int i : nodes) {
    total -= std::log(std::max(probs(i, labels[i]), 1e-12));
  }
  return total / static_cast<double>(nodes.size());
}

double brier(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set) {
  if (eval_set.empty()) throw EmptyEvalSet("brier: empty eval set");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  double total = 0.0;
  for (int i : nodes) {
    for (int k = 0; k < probs.cols; ++k) {
      const double d = probs(i, k) - (labels[i] == k ? 1.0 : 0.0);
      total += d * d;
    }
  }
  return total / static_cast<double>(nodes.size());
}

double accuracy(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set) {
  if (eval_set.empty()) throw EmptyEvalSet("accuracy: empty eval set");
  const std::vector<int> nodes = sorted_eval_set(eval_set);
  int hits = 0;
  for (int i : nodes) {
    if (kernels::argmax(probs.row(i)) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

std::vector<double> entropy_per_node(const Matrix& probs) {
  std::vector<double> out(probs.rows, 0.0);
  for (int i = 0; i < probs.rows; ++i) {
    double h = 0.0;
    for (double p : probs.row(i)) {
      if (p > 0.0) h -= p * std::log(p);
    }
    out[i] = h;
  }
  return out;
}

EvalResult evaluate_all(const Matrix& probs, const std::vector<int>& labels,
                        const std::vector<int>& eval_set, int num_bins) {
  EvalResult r;
  const BinStats bins = reliability_bins(probs, labels, eval_set, num_bins);
  r.ece = ece(bins);
  r.classwise_ece = classwise_ece(probs, labels, eval_set, num_bins);
  r.kde_ece = kde_ece(probs, labels, eval_set);
  r.nll = nll(probs, labels, eval_set);
  r.brier = brier(probs, labels, eval_set);
  r.accuracy = accuracy(probs, labels, eval_set);
  return r;
}

}  // namespace gcalib::metrics
