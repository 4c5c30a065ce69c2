#include "fcre/method_config.hpp"

#include "fcre/errors.hpp"

namespace fcre {

std::string family_name(Family f) {
  switch (f) {
    case Family::kSckd:
      return "sckd";
    case Family::kConpl:
      return "conpl";
    case Family::kCpl:
      return "cpl";
  }
  return "?";
}

Family family_from_name(const std::string& name) {
  if (name == "sckd") return Family::kSckd;
  if (name == "conpl") return Family::kConpl;
  if (name == "cpl") return Family::kCpl;
  throw ConfigError("unknown method family \"" + name + "\" (expected sckd|conpl|cpl)");
}

std::string MethodConfig::name() const {
  return family_name(family) + (mi_enabled ? "_mi" : "") + (freeze_lm_head ? "_frozen" : "");
}

void MethodConfig::validate() const {
  if (batch_size < 1) throw ConfigError("MethodConfig: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("MethodConfig: epochs must be >= 1");
  if (lr <= 0.0) throw ConfigError("MethodConfig: lr must be positive");
  if (mi.tau <= 0.0) throw ConfigError("MethodConfig: mi.tau must be positive");
  if (mi.lambda < 0.0) throw ConfigError("MethodConfig: mi.lambda must be nonnegative");
  if (conpl.alpha < 0.0) throw ConfigError("MethodConfig: conpl.alpha must be nonnegative");
  for (double w : {conpl.w_ce, conpl.w_cc, conpl.w_fc, conpl.w_dc}) {
    if (w < 0.0) throw ConfigError("MethodConfig: ConPL loss weights must be nonnegative");
  }
  if (cpl.margin <= 0.0 || cpl.margin >= 1.0) {
    throw ConfigError("MethodConfig: cpl.margin must lie in (0,1)");
  }
  if (cpl.k <= 0.0) throw ConfigError("MethodConfig: cpl.k must be positive");
  if (cpl.tau <= 0.0) throw ConfigError("MethodConfig: cpl.tau must be positive");
  for (double w : {sckd.w_fd, sckd.w_pd}) {
    if (w < 0.0) throw ConfigError("MethodConfig: SCKD loss weights must be nonnegative");
  }
  // values above 1 are an allowed augmentation-off surrogate
  if (sckd.tau_sim <= -1.0) throw ConfigError("MethodConfig: sckd.tau_sim must be > -1");
  if (sckd.distill_temp <= 0.0) throw ConfigError("MethodConfig: distill_temp must be positive");
  if (memory_size < 1) throw ConfigError("MethodConfig: memory_size must be >= 1");
}

}  // namespace fcre
