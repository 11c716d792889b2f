#pragma once

#include <cstdint>
#include <string>

namespace gcalib {

enum class Method { TS, VS, ETS, CaGCN, GATS };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// Design toggles for the attention-based calibrator; each flag freezes or
// removes one component of the temperature formula.
struct AblationFlags {
  bool no_t0 = false;         // fix the global bias to 0
  bool no_gamma = false;      // fix the train/neighbor scaling factors to 1
  bool no_dconf = false;      // fix the relative-confidence coefficient to 0
  bool no_attention = false;  // drop the neighbor-aggregation term entirely
  bool no_sorting = false;    // use normalized but unsorted logits

  bool any() const { return no_t0 || no_gamma || no_dconf || no_attention || no_sorting; }
};

AblationFlags ablation_from_name(const std::string& name);
std::string ablation_names(const AblationFlags& f);  // comma-separated

struct CalibratorConfig {
  Method method = Method::TS;
  int heads = 8;
  int bins = 15;
  double weight_decay = 0.0;
  double initial_t0 = 1.0;
  double leaky_slope = 0.2;
  AblationFlags ablations;
  int cagcn_hidden = 16;
  double lr = 0.01;
  int max_epochs = 2000;
  int patience = 100;
  std::uint64_t seed = 0;
};

// Throws InvalidConfig on out-of-range fields or ablation flags on a
// non-attention method.
void validate(const CalibratorConfig& config);

}  // namespace gcalib
