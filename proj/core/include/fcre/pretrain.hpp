#pragma once

#include <vector>

#include "fcre/adam.hpp"
#include "fcre/encoder.hpp"
#include "fcre/instance.hpp"
#include "fcre/rng.hpp"

namespace fcre {

struct PretrainConfig {
  double mask_prob = 0.15;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double lr = 0.01;
};

struct PretrainLog {
  std::vector<double> loss;      // per-epoch mean masked-token cross-entropy
  std::vector<double> accuracy;  // per-epoch masked-token argmax accuracy
};

// Masked-token pretraining of the trunk + LM head: content-token positions
// are selected independently with probability mask_prob; each selected
// position is masked in its own forward pass (pooled at that mask) and the
// LM head is trained with cross-entropy against the original token.
PretrainLog pretrain_mlm(EncoderParams& params, const std::vector<Instance>& corpus,
                         const PretrainConfig& cfg, RngState& rng);

}  // namespace fcre
