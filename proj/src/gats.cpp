#include <algorithm>
#include <cmath>
#include <limits>

#include "calib_detail.hpp"
#include "gcalib/calibrators.hpp"
#include "gcalib/diagnostics.hpp"
#include "gcalib/errors.hpp"
#include "gcalib/rng.hpp"
#include "gcalib/trainer.hpp"

namespace gcalib::calib {

namespace {

using detail::kTempFloor;

enum NodeGroup : unsigned char { kTrain = 0, kNeighbor = 1, kOther = 2 };

// Everything about the instance that stays constant during fitting: node
// groups, transformed logits, relative confidences, closed neighborhoods,
// and pairwise logit inner products.
struct GatsWorkspace {
  int num_nodes = 0;
  int num_classes = 0;
  GatsStructure structure;
  std::vector<unsigned char> group;
  Matrix transformed;          // z-tilde, num_nodes x num_classes
  std::vector<double> dconf;   // relative confidence from uncalibrated probs
  std::vector<int> offsets;    // closed neighborhoods, CSR layout
  std::vector<int> nbr;
  std::vector<double> inner;   // z_i . z_j per closed-neighborhood slot
};

GatsWorkspace build_workspace(const Matrix& logits, const Graph& g, const std::vector<int>& train_mask,
                              const std::vector<int>& neighbor_mask, const GatsStructure& structure) {
  GatsWorkspace ws;
  ws.num_nodes = g.num_nodes;
  ws.num_classes = logits.cols;
  ws.structure = structure;

  ws.group.assign(g.num_nodes, kOther);
  for (int i : neighbor_mask) ws.group[i] = kNeighbor;
  for (int i : train_mask) ws.group[i] = kTrain;

  ws.transformed = structure.ablations.no_sorting ? kernels::normalize_logits(logits)
                                                  : kernels::normalize_and_sort_logits(logits);
  ws.dconf = diag::relative_confidence(kernels::softmax_rows(logits), g);

  ws.offsets.assign(g.num_nodes + 1, 0);
  for (int i = 0; i < g.num_nodes; ++i) ws.offsets[i + 1] = ws.offsets[i] + g.degree(i) + 1;
  ws.nbr.resize(ws.offsets.back());
  ws.inner.resize(ws.offsets.back());
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto closed = graph_core::neighbors_with_self(g, i);
    int slot = ws.offsets[i];
    for (int j : closed) {
      ws.nbr[slot] = j;
      double dot = 0.0;
      for (int k = 0; k < logits.cols; ++k) dot += logits(i, k) * logits(j, k);
      ws.inner[slot] = dot;
      ++slot;
    }
  }
  return ws;
}

// Parameter vector layout: [t0, omega, gamma_t, gamma_n, theta (head-major)].
constexpr int kThetaOffset = 4;

std::vector<double> pack(const GatsParams& p) {
  std::vector<double> v(kThetaOffset + p.theta.data.size());
  v[0] = p.t0;
  v[1] = p.omega;
  v[2] = p.gamma_t;
  v[3] = p.gamma_n;
  std::copy(p.theta.data.begin(), p.theta.data.end(), v.begin() + kThetaOffset);
  return v;
}

GatsParams unpack(const std::vector<double>& v, int heads, int num_classes) {
  GatsParams p;
  p.t0 = v[0];
  p.omega = v[1];
  p.gamma_t = v[2];
  p.gamma_n = v[3];
  p.theta = Matrix(heads, num_classes);
  std::copy(v.begin() + kThetaOffset, v.end(), p.theta.data.begin());
  return p;
}

struct GatsEngine {
  const GatsWorkspace& ws;
  int heads;

  // Per-call state sized by the largest closed neighborhood.
  mutable std::vector<double> alpha, scores, rescaled;

  explicit GatsEngine(const GatsWorkspace& w, int h) : ws(w), heads(h) {}

  double gamma_of(const std::vector<double>& params, int node) const {
    if (ws.structure.ablations.no_gamma) return 1.0;
    switch (ws.group[node]) {
      case kTrain: return params[2];
      case kNeighbor: return params[3];
      default: return 1.0;
    }
  }

  // tau(h, j) for all nodes; refreshed whenever theta changes.
  Matrix head_contributions(const std::vector<double>& params) const {
    Matrix tau(heads, ws.num_nodes);
    for (int h = 0; h < heads; ++h) {
      const double* theta = params.data() + kThetaOffset + static_cast<std::size_t>(h) * ws.num_classes;
      for (int j = 0; j < ws.num_nodes; ++j) {
        double dot = 0.0;
        for (int k = 0; k < ws.num_classes; ++k) dot += theta[k] * ws.transformed(j, k);
        tau(h, j) = dot;
      }
    }
    return tau;
  }

  // Temperature of one node; optionally backpropagates d(loss)/dT into the
  // packed gradient vector.
  double node_temperature(const std::vector<double>& params, const Matrix& tau, int i,
                          double grad_in = 0.0, std::vector<double>* grad_out = nullptr) const {
    const bool attention = !ws.structure.ablations.no_attention;
    const double omega = params[1];
    const int begin = ws.offsets[i];
    const int count = ws.offsets[i + 1] - begin;

    if (attention) {
      alpha.resize(count);
      scores.resize(count);
      rescaled.resize(count);
      const double gi = gamma_of(params, i);
      double mx = -std::numeric_limits<double>::infinity();
      for (int t = 0; t < count; ++t) {
        const int j = ws.nbr[begin + t];
        rescaled[t] = ws.inner[begin + t] / (gi * gamma_of(params, j));
        scores[t] = kernels::leaky_relu(rescaled[t], ws.structure.leaky_slope);
        mx = std::max(mx, scores[t]);
      }
      double denom = 0.0;
      for (int t = 0; t < count; ++t) {
        alpha[t] = std::exp(scores[t] - mx);
        denom += alpha[t];
      }
      for (int t = 0; t < count; ++t) alpha[t] /= denom;
    }

    double acc = 0.0;
    std::vector<double> head_inputs(heads);
    for (int h = 0; h < heads; ++h) {
      double s = omega * ws.dconf[i];
      if (attention) {
        for (int t = 0; t < count; ++t) {
          const int j = ws.nbr[begin + t];
          s += alpha[t] * gamma_of(params, j) * tau(h, j);
        }
      }
      head_inputs[h] = s;
      acc += kernels::softplus(s);
    }
    const double raw = params[0] + acc / heads;
    const double temperature = std::max(raw, kTempFloor);

    if (grad_out != nullptr && raw >= kTempFloor) {
      auto& g = *grad_out;
      g[0] += grad_in;
      std::vector<double> score_grad(attention ? count : 0, 0.0);
      for (int h = 0; h < heads; ++h) {
        const double w = grad_in * kernels::softplus_grad(head_inputs[h]) / heads;
        g[1] += w * ws.dconf[i];
        if (!attention) continue;
        double weighted_sum = 0.0;
        for (int t = 0; t < count; ++t) {
          const int j = ws.nbr[begin + t];
          weighted_sum += alpha[t] * gamma_of(params, j) * tau(h, j);
        }
        double* theta_grad = g.data() + kThetaOffset + static_cast<std::size_t>(h) * ws.num_classes;
        for (int t = 0; t < count; ++t) {
          const int j = ws.nbr[begin + t];
          const double gj = gamma_of(params, j);
          const double waj = w * alpha[t];
          for (int k = 0; k < ws.num_classes; ++k) theta_grad[k] += waj * gj * ws.transformed(j, k);
          if (!ws.structure.ablations.no_gamma) {
            if (ws.group[j] == kTrain) g[2] += waj * tau(h, j);
            else if (ws.group[j] == kNeighbor) g[3] += waj * tau(h, j);
          }
          score_grad[t] += waj * (gj * tau(h, j) - weighted_sum);
        }
      }
      if (attention && !ws.structure.ablations.no_gamma) {
        // Chain through the attention scores into the scaling factors.
        for (int t = 0; t < count; ++t) {
          const int j = ws.nbr[begin + t];
          const double gv = score_grad[t] * kernels::leaky_relu_grad(rescaled[t], ws.structure.leaky_slope);
          const int count_t = (ws.group[i] == kTrain) + (ws.group[j] == kTrain);
          const int count_n = (ws.group[i] == kNeighbor) + (ws.group[j] == kNeighbor);
          if (count_t > 0) g[2] += gv * (-rescaled[t]) * count_t / params[2];
          if (count_n > 0) g[3] += gv * (-rescaled[t]) * count_n / params[3];
        }
      }
    }
    return temperature;
  }
};

void require_finite_params(const std::vector<double>& params) {
  for (double v : params) {
    if (!std::isfinite(v)) throw NonFiniteParameter("gats parameters must be finite");
  }
}

std::vector<bool> frozen_mask(const CalibratorConfig& config, std::size_t size) {
  std::vector<bool> frozen(size, false);
  const AblationFlags& a = config.ablations;
  if (a.no_t0) frozen[0] = true;
  if (a.no_dconf) frozen[1] = true;
  if (a.no_gamma || a.no_attention) frozen[2] = frozen[3] = true;
  if (a.no_attention) {
    for (std::size_t i = kThetaOffset; i < size; ++i) frozen[i] = true;
  }
  return frozen;
}

}  // namespace

namespace detail {

double gats_objective(const CalibratorConfig& config, const Dataset& data, const std::vector<int>& nodes,
                      const std::vector<double>& params, std::vector<double>* grad) {
  const std::vector<int> neighbor_mask = graph_core::train_neighbor_set(data.graph, data.mask.train);
  const GatsStructure structure{config.leaky_slope, config.ablations};
  const GatsWorkspace ws =
      build_workspace(data.logits, data.graph, data.mask.train, neighbor_mask, structure);
  GatsEngine engine(ws, config.heads);
  const Matrix tau = engine.head_contributions(params);
  std::vector<double> temps(data.graph.num_nodes, 1.0);
  for (int i : nodes) temps[i] = engine.node_temperature(params, tau, i);
  std::vector<double> dtemp(data.graph.num_nodes, 0.0);
  const double loss =
      nll_temp_objective(data.logits, data.labels, nodes, temps, grad ? &dtemp : nullptr);
  if (grad) {
    for (int i : nodes) engine.node_temperature(params, tau, i, dtemp[i], grad);
  }
  return loss;
}

}  // namespace detail

std::vector<double> gats_node_temperatures(const GatsParams& params, const Matrix& logits, const Graph& g,
                                           const std::vector<int>& train_mask,
                                           const std::vector<int>& neighbor_mask,
                                           const GatsStructure& structure) {
  const std::vector<double> packed = pack(params);
  require_finite_params(packed);
  const GatsWorkspace ws = build_workspace(logits, g, train_mask, neighbor_mask, structure);
  GatsEngine engine(ws, params.theta.rows);
  const Matrix tau = engine.head_contributions(packed);
  std::vector<double> temps(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) temps[i] = engine.node_temperature(packed, tau, i);
  return temps;
}

FitOutcome fit_gats(const CalibratorConfig& config, const Dataset& data) {
  const std::vector<int> neighbor_mask = graph_core::train_neighbor_set(data.graph, data.mask.train);
  const GatsStructure structure{config.leaky_slope, config.ablations};
  const GatsWorkspace ws =
      build_workspace(data.logits, data.graph, data.mask.train, neighbor_mask, structure);
  GatsEngine engine(ws, config.heads);

  const int num_classes = data.num_classes;
  GatsParams init;
  init.t0 = config.ablations.no_t0 ? 0.0 : config.initial_t0;
  init.omega = 0.0;
  init.gamma_t = 1.0;
  init.gamma_n = 1.0;
  init.theta = Matrix(config.heads, num_classes);
  const double bound = 1.0 / std::sqrt(static_cast<double>(num_classes));
  for (int h = 0; h < config.heads; ++h) {
    Rng rng(Rng::derive(config.seed, 2000 + static_cast<std::uint64_t>(h)));
    for (int k = 0; k < num_classes; ++k) {
      init.theta(h, k) = (2.0 * rng.next_double() - 1.0) * bound;
    }
  }

  std::vector<double> temps(data.graph.num_nodes, 1.0);
  std::vector<double> dtemp(data.graph.num_nodes, 0.0);

  const auto objective = [&](const std::vector<double>& params, std::vector<double>& grad) {
    const Matrix tau = engine.head_contributions(params);
    for (int i : data.mask.val) temps[i] = engine.node_temperature(params, tau, i);
    const double loss = detail::nll_temp_objective(data.logits, data.labels, data.mask.val, temps, &dtemp);
    for (int i : data.mask.val) engine.node_temperature(params, tau, i, dtemp[i], &grad);
    return loss;
  };
  const auto monitor = [&](const std::vector<double>& params) {
    const Matrix tau = engine.head_contributions(params);
    for (int i : data.mask.train) temps[i] = engine.node_temperature(params, tau, i);
    return detail::nll_temp_objective(data.logits, data.labels, data.mask.train, temps, nullptr);
  };

  const std::vector<double> init_vec = pack(init);
  const std::vector<bool> frozen = frozen_mask(config, init_vec.size());
  trainer::FitOptions options = detail::fit_options_for(config, config.weight_decay);
  options.frozen = &frozen;

  const trainer::FitResult result = trainer::fit_with_early_stopping(objective, monitor, init_vec, options);

  FitOutcome outcome;
  outcome.calibrator =
      std::make_unique<GatsCalibrator>(unpack(result.params, config.heads, num_classes), config);
  outcome.best_monitor_nll = result.best_monitor;
  outcome.epochs_run = result.epochs_run;
  return outcome;
}

std::size_t GatsCalibrator::num_learnable_parameters() const {
  const std::size_t total = kThetaOffset + params_.theta.data.size();
  const std::vector<bool> frozen = frozen_mask(config_, total);
  std::size_t learnable = 0;
  for (bool f : frozen) {
    if (!f) ++learnable;
  }
  return learnable;
}

CalibratedOutput GatsCalibrator::apply(const Dataset& data) const {
  detail::check_classes(params_.theta.cols, data, "gats");
  const std::vector<int> neighbor_mask = graph_core::train_neighbor_set(data.graph, data.mask.train);
  const GatsStructure structure{config_.leaky_slope, config_.ablations};
  CalibratedOutput out;
  out.temperatures =
      gats_node_temperatures(params_, data.logits, data.graph, data.mask.train, neighbor_mask, structure);
  out.probs = detail::scaled_softmax(data.logits, *out.temperatures);
  return out;
}

nlohmann::json GatsCalibrator::to_json() const {
  nlohmann::json j = detail::common_json(*this, config_);
  j["params"]["t0"] = io::double_to_hex(params_.t0);
  j["params"]["omega"] = io::double_to_hex(params_.omega);
  j["params"]["gamma_t"] = io::double_to_hex(params_.gamma_t);
  j["params"]["gamma_n"] = io::double_to_hex(params_.gamma_n);
  j["params"]["theta"] = detail::hex_array(params_.theta.data);
  return j;
}

}  // namespace gcalib::calib
