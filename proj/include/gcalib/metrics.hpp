#pragma once

#include <vector>

#include "gcalib/kernels.hpp"

namespace gcalib {

// Per-bin accuracy / mean confidence / count over M equal-width confidence
// bins ((m-1)/M, m/M]. Empty bins keep count 0 and NaN acc/conf.
struct BinStats {
  int num_bins = 0;
  int total = 0;  // evaluated-node count
  std::vector<int> count;
  std::vector<double> acc;
  std::vector<double> conf;
};

struct EvalResult {
  double ece = 0.0;
  double classwise_ece = 0.0;
  double kde_ece = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double accuracy = 0.0;
};

namespace metrics {

// Bin index in [0, M) for a confidence under the left-open binning scheme;
// exact at bin boundaries. A value of exactly 0 lands in bin 0.
int bin_index(double confidence, int num_bins);

// Bins the max-probability confidences of eval_set rows. Rows must sum to 1
// within 1e-6 (NotAProbability otherwise); eval_set must be nonempty.
BinStats reliability_bins(const Matrix& probs, const std::vector<int>& labels,
                          const std::vector<int>& eval_set, int num_bins);

// Bin-weighted mean |acc - conf|; empty bins contribute 0.
double ece(const BinStats& bins);

// Each evaluated node receives its bin's |acc - conf|; order follows the
// ascending node ids of eval_set.
std::vector<double> nodewise_calibration_error(const BinStats& bins, const Matrix& probs,
                                               const std::vector<int>& labels,
                                               const std::vector<int>& eval_set);

// ECE over every class's marginal probability, averaged over classes.
// Zero probabilities land in bin 1 (left-closed at 0 for that bin only).
double classwise_ece(const Matrix& probs, const std::vector<int>& labels,
                     const std::vector<int>& eval_set, int num_bins);

// Binning-free calibration error via triweight kernel density estimates,
// bandwidth 1.06 * sigma * n^(-1/5) (floored at 1e-3), trapezoid rule on a
// uniform 1024-point grid over [0,1]. Needs at least 2 evaluated nodes.
double kde_ece(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set);

// Mean negative log-likelihood of the true class; probabilities floored at
// 1e-12 inside the log.
double nll(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set);

double brier(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set);

double accuracy(const Matrix& probs, const std::vector<int>& labels, const std::vector<int>& eval_set);

// Shannon entropy -sum p ln p per row, with 0 ln 0 = 0.
std::vector<double> entropy_per_node(const Matrix& probs);

EvalResult evaluate_all(const Matrix& probs, const std::vector<int>& labels,
                        const std::vector<int>& eval_set, int num_bins);

}  // namespace metrics
}  // namespace gcalib
