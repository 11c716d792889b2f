#include <algorithm>
#include <cmath>

#include "calib_detail.hpp"
#include "gcalib/calibrators.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/rng.hpp"
#include "gcalib/trainer.hpp"

namespace gcalib::calib {

namespace {

using detail::kTempFloor;

// y = A * x for CSR A and dense row-major x.
Matrix spmm(const SparseMatrix& a, const Matrix& x) {
  Matrix y(a.rows, x.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int t = a.row_offsets[i]; t < a.row_offsets[i + 1]; ++t) {
      const int j = a.col_indices[t];
      const double v = a.values[t];
      for (int c = 0; c < x.cols; ++c) y(i, c) += v * x(j, c);
    }
  }
  return y;
}

// Packed parameter layout: [w1 (K x hidden, row-major), b1, w2, b2].
struct CagcnShape {
  int num_classes;
  int hidden;
  std::size_t size() const { return static_cast<std::size_t>(num_classes) * hidden + 2 * hidden + 1; }
  const double* w1(const std::vector<double>& p) const { return p.data(); }
  const double* b1(const std::vector<double>& p) const { return p.data() + num_classes * hidden; }
  const double* w2(const std::vector<double>& p) const { return p.data() + num_classes * hidden + hidden; }
  double b2(const std::vector<double>& p) const { return p.back(); }
};

struct CagcnForward {
  Matrix h1pre;                // N x hidden
  Matrix s2;                   // N x hidden (propagated hidden activations)
  std::vector<double> tpre;    // N
  std::vector<double> temps;   // N
};

CagcnForward cagcn_forward(const CagcnShape& shape, const SparseMatrix& adj, const Matrix& s1,
                           const std::vector<double>& p) {
  const int n = s1.rows;
  const int hidden = shape.hidden;
  CagcnForward f;
  f.h1pre = Matrix(n, hidden);
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < hidden; ++h) {
      double acc = shape.b1(p)[h];
      for (int k = 0; k < shape.num_classes; ++k) acc += s1(i, k) * shape.w1(p)[k * hidden + h];
      f.h1pre(i, h) = acc;
    }
  }
  Matrix h1 = f.h1pre;
  for (double& v : h1.data) v = std::max(v, 0.0);
  f.s2 = spmm(adj, h1);
  f.tpre.resize(n);
  f.temps.resize(n);
  for (int i = 0; i < n; ++i) {
    double acc = shape.b2(p);
    for (int h = 0; h < hidden; ++h) acc += f.s2(i, h) * shape.w2(p)[h];
    f.tpre[i] = acc;
    f.temps[i] = std::max(kernels::softplus(acc), kTempFloor);
  }
  return f;
}

// Backpropagates d(loss)/dT (nonzero on `nodes`) through both layers.
void cagcn_backward(const CagcnShape& shape, const SparseMatrix& adj, const Matrix& s1,
                    const std::vector<double>& p, const CagcnForward& f, const std::vector<int>& nodes,
                    const std::vector<double>& dtemp, std::vector<double>& grad) {
  const int n = s1.rows;
  const int hidden = shape.hidden;
  std::vector<double> dtpre(n, 0.0);
  for (int i : nodes) {
    if (kernels::softplus(f.tpre[i]) >= kTempFloor) {
      dtpre[i] = dtemp[i] * kernels::softplus_grad(f.tpre[i]);
    }
  }
  double* gw1 = grad.data();
  double* gb1 = grad.data() + shape.num_classes * hidden;
  double* gw2 = grad.data() + shape.num_classes * hidden + hidden;
  double& gb2 = grad.back();

  Matrix ds2(n, hidden);
  for (int i : nodes) {
    gb2 += dtpre[i];
    for (int h = 0; h < hidden; ++h) {
      gw2[h] += dtpre[i] * f.s2(i, h);
      ds2(i, h) = dtpre[i] * shape.w2(p)[h];
    }
  }
  const Matrix dh1 = spmm(adj, ds2);  // adjacency is symmetric
  for (int i = 0; i < n; ++i) {
    for (int h = 0; h < hidden; ++h) {
      if (f.h1pre(i, h) <= 0.0) continue;
      const double d = dh1(i, h);
      if (d == 0.0) continue;
      gb1[h] += d;
      for (int k = 0; k < shape.num_classes; ++k) gw1[k * hidden + h] += s1(i, k) * d;
    }
  }
}

}  // namespace

namespace detail {

double cagcn_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                       const std::vector<double>& params, std::vector<double>* grad) {
  const CagcnShape shape{data.num_classes, config.cagcn_hidden};
  const SparseMatrix adj = normalized_adjacency(data.graph);
  const Matrix s1 = spmm(adj, data.logits);
  const CagcnForward f = cagcn_forward(shape, adj, s1, params);
  std::vector<double> dtemp(data.graph.num_nodes, 0.0);
  const double loss =
      nll_temp_objective(data.logits, data.labels, nodes, f.temps, grad ? &dtemp : nullptr);
  if (grad) cagcn_backward(shape, adj, s1, params, f, nodes, dtemp, *grad);
  return loss;
}

}  // namespace detail

SparseMatrix normalized_adjacency(const Graph& g) {
  SparseMatrix a;
  a.rows = g.num_nodes;
  a.row_offsets.assign(g.num_nodes + 1, 0);
  for (int i = 0; i < g.num_nodes; ++i) a.row_offsets[i + 1] = a.row_offsets[i] + g.degree(i) + 1;
  a.col_indices.resize(a.row_offsets.back());
  a.values.resize(a.row_offsets.back());
  std::vector<double> inv_sqrt_deg(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(g.degree(i) + 1.0);
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto closed = graph_core::neighbors_with_self(g, i);
    int slot = a.row_offsets[i];
    for (int j : closed) {
      a.col_indices[slot] = j;
      a.values[slot] = inv_sqrt_deg[i] * inv_sqrt_deg[j];
      ++slot;
    }
  }
  return a;
}

FitOutcome fit_cagcn(const CalibratorConfig& config, const Dataset& data) {
  const CagcnShape shape{data.num_classes, config.cagcn_hidden};
  const SparseMatrix adj = normalized_adjacency(data.graph);
  const Matrix s1 = spmm(adj, data.logits);
  const int n = data.graph.num_nodes;
  const int hidden = shape.hidden;

  std::vector<double> init(shape.size());
  {
    // Uniform fan-in init per layer, matching the usual linear-layer scheme.
    Rng rng1(Rng::derive(config.seed, 101));
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(data.num_classes));
    for (int t = 0; t < data.num_classes * hidden + hidden; ++t) {
      init[t] = (2.0 * rng1.next_double() - 1.0) * bound1;
    }
    Rng rng2(Rng::derive(config.seed, 102));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (std::size_t t = data.num_classes * hidden + hidden; t < shape.size(); ++t) {
      init[t] = (2.0 * rng2.next_double() - 1.0) * bound2;
    }
  }

  std::vector<double> dtemp(n, 0.0);

  const auto objective = [&](const std::vector<double>& p, std::vector<double>& grad) {
    const CagcnForward f = cagcn_forward(shape, adj, s1, p);
    std::fill(dtemp.begin(), dtemp.end(), 0.0);
    const double loss = detail::nll_temp_objective(data.logits, data.labels, data.mask.val, f.temps, &dtemp);
    cagcn_backward(shape, adj, s1, p, f, data.mask.val, dtemp, grad);
    return loss;
  };
  const auto monitor = [&](const std::vector<double>& p) {
    const CagcnForward f = cagcn_forward(shape, adj, s1, p);
    return detail::nll_temp_objective(data.logits, data.labels, data.mask.train, f.temps, nullptr);
  };

  const trainer::FitOptions options = detail::fit_options_for(config, config.weight_decay);
  const trainer::FitResult result = trainer::fit_with_early_stopping(objective, monitor, init, options);

  Matrix w1(data.num_classes, hidden);
  std::copy_n(result.params.begin(), w1.data.size(), w1.data.begin());
  std::vector<double> b1(result.params.begin() + data.num_classes * hidden,
                         result.params.begin() + data.num_classes * hidden + hidden);
  std::vector<double> w2(result.params.begin() + data.num_classes * hidden + hidden,
                         result.params.end() - 1);
  const double b2 = result.params.back();

  FitOutcome outcome;
  outcome.calibrator =
      std::make_unique<CagcnCalibrator>(std::move(w1), std::move(b1), std::move(w2), b2, config);
  outcome.best_monitor_nll = result.best_monitor;
  outcome.epochs_run = result.epochs_run;
  return outcome;
}

std::vector<double> CagcnCalibrator::node_temperatures(const Dataset& data) const {
  detail::check_classes(w1_.rows, data, "cagcn");
  const CagcnShape shape{w1_.rows, static_cast<int>(b1_.size())};
  std::vector<double> packed(shape.size());
  std::copy(w1_.data.begin(), w1_.data.end(), packed.begin());
  std::copy(b1_.begin(), b1_.end(), packed.begin() + w1_.data.size());
  std::copy(w2_.begin(), w2_.end(), packed.begin() + w1_.data.size() + b1_.size());
  packed.back() = b2_;
  const SparseMatrix adj = normalized_adjacency(data.graph);
  const Matrix s1 = spmm(adj, data.logits);
  return cagcn_forward(shape, adj, s1, packed).temps;
}

CalibratedOutput CagcnCalibrator::apply(const Dataset& data) const {
  CalibratedOutput out;
  out.temperatures = node_temperatures(data);
  out.probs = detail::scaled_softmax(data.logits, *out.temperatures);
  return out;
}

nlohmann::json CagcnCalibrator::to_json() const {
  nlohmann::json j = detail::common_json(*this, config_);
  j["params"]["w1"] = detail::hex_array(w1_.data);
  j["params"]["b1"] = detail::hex_array(b1_);
  j["params"]["w2"] = detail::hex_array(w2_);
  j["params"]["b2"] = io::double_to_hex(b2_);
  return j;
}

}  // namespace gcalib::calib
