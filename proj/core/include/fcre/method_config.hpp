#pragma once

#include <cstdint>
#include <string>

#include "fcre/losses.hpp"
#include "fcre/memory.hpp"

namespace fcre {

enum class Family { kSckd, kConpl, kCpl };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// One cell of the method grid: a baseline family, optionally combined with
// the mutual-information term, plus the knobs of its losses and trainer.
struct MethodConfig {
  Family family = Family::kCpl;
  bool mi_enabled = false;
  bool freeze_lm_head = false;
  TemplateMode template_mode = TemplateMode::kMask;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 2e-3;
  MiLossConfig mi;
  ConplConfig conpl;
  CplConfig cpl;
  SckdConfig sckd;
  std::size_t memory_size = 1;  // L
  std::uint64_t seed = 1;

  // Display/file name, e.g. "cpl" or "cpl_mi".
  std::string name() const;
  void validate() const;  // throws ConfigError

  bool use_prompt() const { return family == Family::kCpl; }
  // MI is active only when enabled with a positive weight; a zero weight is
  // exactly the disabled trainer.
  bool mi_active() const { return mi_enabled && mi.lambda > 0.0; }
};

}  // namespace fcre
