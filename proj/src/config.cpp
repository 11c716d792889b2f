#include "gcalib/config.hpp"

#include "gcalib/errors.hpp"

namespace gcalib {

std::string method_name(Method m) {
  switch (m) {
    case Method::TS: return "ts";
    case Method::VS: return "vs";
    case Method::ETS: return "ets";
    case Method::CaGCN: return "cagcn";
    case Method::GATS: return "gats";
  }
  throw InvalidConfig("unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "ts") return Method::TS;
  if (name == "vs") return Method::VS;
  if (name == "ets") return Method::ETS;
  if (name == "cagcn") return Method::CaGCN;
  if (name == "gats") return Method::GATS;
  throw InvalidConfig("unknown calibration method: " + name);
}

AblationFlags ablation_from_name(const std::string& name) {
  AblationFlags f;
  if (name == "no_t0")
    f.no_t0 = true;
  else if (name == "no_gamma")
    f.no_gamma = true;
  else if (name == "no_dconf")
    f.no_dconf = true;
  else if (name == "no_attention")
    f.no_attention = true;
  else if (name == "no_sorting")
    f.no_sorting = true;
  else
    throw InvalidConfig("unknown ablation flag: " + name);
  return f;
}

std::string ablation_names(const AblationFlags& f) {
  std::string out;
  const auto add = [&out](const char* name) {
    if (!out.empty()) out += ",";
    out += name;
  };
  if (f.no_t0) add("no_t0");
  if (f.no_gamma) add("no_gamma");
  if (f.no_dconf) add("no_dconf");
  if (f.no_attention) add("no_attention");
  if (f.no_sorting) add("no_sorting");
  return out;
}

void validate(const CalibratorConfig& config) {
  if (config.heads < 1) throw InvalidConfig("heads must be >= 1");
  if (config.bins < 1) throw InvalidConfig("bins must be >= 1");
  if (config.weight_decay < 0.0) throw InvalidConfig("weight_decay must be >= 0");
  if (!(config.leaky_slope > 0.0 && config.leaky_slope < 1.0)) {
    throw InvalidConfig("leaky_slope must lie in (0, 1)");
  }
  if (config.cagcn_hidden < 1) throw InvalidConfig("cagcn_hidden must be >= 1");
  if (config.lr <= 0.0) throw InvalidConfig("lr must be > 0");
  if (config.max_epochs < 1) throw InvalidConfig("max_epochs must be >= 1");
  if (config.patience < 0) throw InvalidConfig("patience must be >= 0");
  if (config.ablations.any() && config.method != Method::GATS) {
    throw InvalidConfig("ablation flags are only valid for the gats method");
  }
}

}  // namespace gcalib
