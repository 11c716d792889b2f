#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gcalib/dataset.hpp"
#include "gcalib/graph.hpp"
#include "gcalib/kernels.hpp"

namespace gcalib {

// Per-node diagnostic factors over the evaluated node set, ordered by
// ascending node id.
struct FactorReport {
  std::vector<int> node_ids;
  std::vector<std::optional<int>> dist_train;
  std::vector<double> delta_conf;
  std::vector<double> homophily;
  std::vector<double> entropy;
  std::vector<double> nce;  // nodewise calibration error
  std::vector<double> conf;
};

namespace diag {

// Node confidence minus the mean confidence of its neighbors (self
// excluded); isolated nodes get 0.
std::vector<double> relative_confidence(const Matrix& probs, const Graph& g);

// Assembles all per-node factors for the dataset's test mask (or every node
// with all_nodes set) from the given probabilities.
FactorReport factor_report(const Dataset& data, const Matrix& probs, int num_bins, bool all_nodes = false);

struct CurveRow {
  double bin_center = 0.0;
  double mean_value = 0.0;
  bool has_mean = false;  // false for empty bins (blank in CSV)
  int count = 0;
};

// Bins the factor column and averages the value column per bin. Integer
// factors (dist_train) bin per integer value; continuous factors use
// equal-width bins over the observed range. Unreachable distances are
// excluded. Unknown column names raise UnknownColumn.
std::vector<CurveRow> binned_factor_curve(const FactorReport& report, const std::string& factor,
                                          const std::string& value_column, int bins);
std::vector<CurveRow> binned_factor_curve(const FactorReport& report, const std::string& factor,
                                          const std::string& value_column, const std::vector<double>& edges);

struct ReliabilityRow {
  double conf = 0.0;
  double acc = 0.0;
  bool has_stats = false;
  int count = 0;
};

std::vector<ReliabilityRow> reliability_curve(const Matrix& probs, const std::vector<int>& labels,
                                              const std::vector<int>& eval_set, int num_bins);

std::string factor_report_csv(const FactorReport& report);
std::string curve_csv(const std::vector<CurveRow>& rows);
std::string counts_csv(const std::vector<CurveRow>& rows);
std::string reliability_csv(const std::vector<ReliabilityRow>& rows);

// Writes the full diagnostic bundle (factor report, reliability curve,
// factor curves, node-count histograms) into out_dir.
void write_diagnostics(const Dataset& data, const Matrix& probs, int num_bins, bool all_nodes,
                       const std::string& out_dir);

}  // namespace diag
}  // namespace gcalib
