#pragma once

#include <cstdint>
#include <vector>

#include "fcre/matrix.hpp"

namespace fcre {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are created lazily from the
// shapes of the first step() call; later calls must pass the same parameter
// list in the same order.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads);

  std::int64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t t_ = 0;
};

}  // namespace fcre
