#include "gcalib/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "gcalib/errors.hpp"
#include "gcalib/metrics.hpp"

namespace gcalib::diag {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// Column accessor: value per report row, or nullopt when undefined
// (unreachable distance).
std::vector<std::optional<double>> column(const FactorReport& report, const std::string& name) {
  const std::size_t n = report.node_ids.size();
  std::vector<std::optional<double>> out(n);
  if (name == "dist_train") {
    for (std::size_t i = 0; i < n; ++i) {
      if (report.dist_train[i]) out[i] = static_cast<double>(*report.dist_train[i]);
    }
    return out;
  }
  const std::vector<double>* src = nullptr;
  if (name == "delta_conf")
    src = &report.delta_conf;
  else if (name == "homophily")
    src = &report.homophily;
  else if (name == "entropy")
    src = &report.entropy;
  else if (name == "nce")
    src = &report.nce;
  else if (name == "conf")
    src = &report.conf;
  else
    throw UnknownColumn("unknown factor column: " + name);
  for (std::size_t i = 0; i < n; ++i) out[i] = (*src)[i];
  return out;
}

std::vector<CurveRow> curve_from_edges(const std::vector<std::optional<double>>& factor,
                                       const std::vector<std::optional<double>>& value,
                                       const std::vector<double>& edges) {
  const int num_bins = static_cast<int>(edges.size()) - 1;
  std::vector<CurveRow> rows(num_bins);
  std::vector<double> sums(num_bins, 0.0);
  std::vector<int> value_counts(num_bins, 0);
  for (int b = 0; b < num_bins; ++b) rows[b].bin_center = 0.5 * (edges[b] + edges[b + 1]);
  for (std::size_t i = 0; i < factor.size(); ++i) {
    if (!factor[i]) continue;
    const double x = *factor[i];
    if (x < edges.front() || x > edges.back()) continue;
    int b = static_cast<int>((x - edges.front()) / (edges.back() - edges.front()) * num_bins);
    b = std::clamp(b, 0, num_bins - 1);
    while (b > 0 && x < edges[b]) --b;
    while (b < num_bins - 1 && x >= edges[b + 1]) ++b;
    rows[b].count++;
    if (value[i]) {
      sums[b] += *value[i];
      value_counts[b]++;
    }
  }
  for (int b = 0; b < num_bins; ++b) {
    if (value_counts[b] > 0) {
      rows[b].mean_value = sums[b] / value_counts[b];
      rows[b].has_mean = true;
    }
  }
  return rows;
}

}  // namespace

std::vector<double> relative_confidence(const Matrix& probs, const Graph& g) {
  std::vector<double> conf(g.num_nodes, 0.0);
  for (int i = 0; i < g.num_nodes; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : probs.row(i)) mx = std::max(mx, v);
    conf[i] = mx;
  }
  std::vector<double> out(g.num_nodes, 0.0);
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto nbrs = g.neighbors(i);
    if (nbrs.empty()) continue;
    double sum = 0.0;
    for (int j : nbrs) sum += conf[j];
    out[i] = conf[i] - sum / static_cast<double>(nbrs.size());
  }
  return out;
}

FactorReport factor_report(const Dataset& data, const Matrix& probs, int num_bins, bool all_nodes) {
  std::vector<int> eval_set;
  if (all_nodes) {
    eval_set.resize(data.graph.num_nodes);
    for (int i = 0; i < data.graph.num_nodes; ++i) eval_set[i] = i;
  } else {
    eval_set = data.mask.test;
  }
  if (eval_set.empty()) throw EmptyEvalSet("factor_report: empty evaluation set");
  std::sort(eval_set.begin(), eval_set.end());

  const auto distances = graph_core::bfs_distance_to_set(data.graph, data.mask.train);
  const auto dconf = relative_confidence(probs, data.graph);
  std::vector<int> pred(data.graph.num_nodes);
  for (int i = 0; i < data.graph.num_nodes; ++i) pred[i] = kernels::argmax(probs.row(i));
  const auto homophily = graph_core::node_homophily(data.graph, pred);
  const auto entropy = metrics::entropy_per_node(probs);
  const auto bins = metrics::reliability_bins(probs, data.labels, eval_set, num_bins);
  const auto nce = metrics::nodewise_calibration_error(bins, probs, data.labels, eval_set);

  FactorReport report;
  report.node_ids = eval_set;
  report.dist_train.reserve(eval_set.size());
  for (std::size_t t = 0; t < eval_set.size(); ++t) {
    const int i = eval_set[t];
    report.dist_train.push_back(distances[i]);
    report.delta_conf.push_back(dconf[i]);
    report.homophily.push_back(homophily[i]);
    report.entropy.push_back(entropy[i]);
    report.nce.push_back(nce[t]);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : probs.row(i)) mx = std::max(mx, v);
    report.conf.push_back(mx);
  }
  return report;
}

std::vector<CurveRow> binned_factor_curve(const FactorReport& report, const std::string& factor,
                                          const std::string& value_column, int bins) {
  const auto fac = column(report, factor);
  const auto val = column(report, value_column);

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& x : fac) {
    if (!x) continue;
    lo = std::min(lo, *x);
    hi = std::max(hi, *x);
  }
  if (!(lo <= hi)) return {};  // nothing observed

  std::vector<double> edges;
  if (factor == "dist_train") {
    // One bin per integer value.
    const int lo_i = static_cast<int>(lo), hi_i = static_cast<int>(hi);
    for (int d = lo_i; d <= hi_i + 1; ++d) edges.push_back(d - 0.5);
  } else {
    if (lo == hi) {
      edges = {lo - 0.5, lo + 0.5};
    } else {
      for (int b = 0; b <= bins; ++b) edges.push_back(lo + (hi - lo) * b / bins);
    }
  }
  return curve_from_edges(fac, val, edges);
}

std::vector<CurveRow> binned_factor_curve(const FactorReport& report, const std::string& factor,
                                          const std::string& value_column, const std::vector<double>& edges) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    throw InvalidConfig("binned_factor_curve: need at least two ascending edges");
  }
  return curve_from_edges(column(report, factor), column(report, value_column), edges);
}

std::vector<ReliabilityRow> reliability_curve(const Matrix& probs, const std::vector<int>& labels,
                                              const std::vector<int>& eval_set, int num_bins) {
  const BinStats bins = metrics::reliability_bins(probs, labels, eval_set, num_bins);
  std::vector<ReliabilityRow> rows(num_bins);
  for (int m = 0; m < num_bins; ++m) {
    rows[m].count = bins.count[m];
    if (bins.count[m] > 0) {
      rows[m].conf = bins.conf[m];
      rows[m].acc = bins.acc[m];
      rows[m].has_stats = true;
    }
  }
  return rows;
}

std::string factor_report_csv(const FactorReport& report) {
  std::string out = "node_id,dist_train,delta_conf,homophily,entropy,nce,conf\n";
  for (std::size_t i = 0; i < report.node_ids.size(); ++i) {
    out += std::to_string(report.node_ids[i]);
    out += ",";
    out += report.dist_train[i] ? std::to_string(*report.dist_train[i]) : std::string("inf");
    out += "," + format_double(report.delta_conf[i]);
    out += "," + format_double(report.homophily[i]);
    out += "," + format_double(report.entropy[i]);
    out += "," + format_double(report.nce[i]);
    out += "," + format_double(report.conf[i]);
    out += "\n";
  }
  return out;
}

std::string curve_csv(const std::vector<CurveRow>& rows) {
  std::string out = "bin_center,mean_value,count\n";
  for (const CurveRow& r : rows) {
    out += format_double(r.bin_center);
    out += ",";
    if (r.has_mean) out += format_double(r.mean_value);
    out += "," + std::to_string(r.count) + "\n";
  }
  return out;
}

std::string counts_csv(const std::vector<CurveRow>& rows) {
  std::string out = "bin_center,count\n";
  for (const CurveRow& r : rows) {
    out += format_double(r.bin_center) + "," + std::to_string(r.count) + "\n";
  }
  return out;
}

std::string reliability_csv(const std::vector<ReliabilityRow>& rows) {
  std::string out = "conf,acc,count\n";
  for (const ReliabilityRow& r : rows) {
    if (r.has_stats) {
      out += format_double(r.conf) + "," + format_double(r.acc);
    } else {
      out += ",";
    }
    out += "," + std::to_string(r.count) + "\n";
  }
  return out;
}

void write_diagnostics(const Dataset& data, const Matrix& probs, int num_bins, bool all_nodes,
                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const FactorReport report = factor_report(data, probs, num_bins, all_nodes);

  std::vector<int> eval_set = all_nodes ? std::vector<int>() : data.mask.test;
  if (all_nodes) {
    eval_set.resize(data.graph.num_nodes);
    for (int i = 0; i < data.graph.num_nodes; ++i) eval_set[i] = i;
  }

  const auto write = [&out_dir](const std::string& name, const std::string& content) {
    io::write_text_atomic((fs::path(out_dir) / name).string(), content);
  };

  write("factors.csv", factor_report_csv(report));
  write("reliability.csv", reliability_csv(reliability_curve(probs, data.labels, eval_set, num_bins)));

  // Calibration-error curves plus pairwise factor correlations; continuous
  // factors use 10 equal-width bins, distances bin per hop count.
  const int kContinuousBins = 10;
  const std::vector<std::pair<std::string, std::string>> curves = {
      {"dist_train", "nce"},        {"delta_conf", "nce"},        {"homophily", "nce"},
      {"dist_train", "delta_conf"}, {"delta_conf", "dist_train"}, {"homophily", "delta_conf"},
      {"delta_conf", "homophily"},  {"dist_train", "homophily"},  {"homophily", "dist_train"},
  };
  for (const auto& [factor, value] : curves) {
    const auto rows = binned_factor_curve(report, factor, value, kContinuousBins);
    write("curve_" + value + "_by_" + factor + ".csv", curve_csv(rows));
  }
  for (const std::string factor : {"dist_train", "delta_conf", "homophily"}) {
    const auto rows = binned_factor_curve(report, factor, "conf", kContinuousBins);
    write("counts_" + factor + ".csv", counts_csv(rows));
  }
}

}  // namespace gcalib::diag
