#pragma once

#include <functional>
#include <vector>

#include "fcre/encoder.hpp"
#include "fcre/grad_check.hpp"
#include "fcre/instance.hpp"
#include "fcre/rng.hpp"
#include "fcre/vocab.hpp"

namespace fcre::test {

inline std::vector<double> flatten(const std::vector<const Matrix*>& mats) {
  std::vector<double> out;
  for (const Matrix* m : mats) out.insert(out.end(), m->data().begin(), m->data().end());
  return out;
}

inline void unflatten(const std::vector<double>& x, const std::vector<Matrix*>& mats) {
  std::size_t k = 0;
  for (Matrix* m : mats) {
    for (std::size_t i = 0; i < m->size(); ++i) (*m)[i] = x[k++];
  }
}

inline std::vector<const Matrix*> const_ptrs(const std::vector<Matrix*>& mats) {
  return {mats.begin(), mats.end()};
}

// Small random dimensions within the gradient-suite envelope
// (all widths <= 8, vocab <= 20).
inline EncoderDims small_dims(RngState& rng) {
  EncoderDims dims;
  dims.vocab = 14 + rng.below(7);
  dims.d_e = 2 + rng.below(4);
  dims.d_h = 2 + rng.below(6);
  dims.d = 2 + rng.below(5);
  dims.d_phi = 2 + rng.below(5);
  dims.n_prompt = 2 + rng.below(3);
  return dims;
}

inline Instance random_instance(std::size_t vocab_size, RngState& rng) {
  Instance inst;
  const std::size_t prefix = rng.below(2);
  const std::size_t head_len = 1 + rng.below(2);
  const std::size_t mid = 1 + rng.below(2);
  const std::size_t tail_len = 1 + rng.below(2);
  const std::size_t suffix = rng.below(2);
  auto content = [&]() {
    return static_cast<int>(Vocab::kReservedCount +
                            rng.below(vocab_size - Vocab::kReservedCount));
  };
  for (std::size_t i = 0; i < prefix; ++i) inst.tokens.push_back(content());
  inst.head.start = inst.tokens.size();
  for (std::size_t i = 0; i < head_len; ++i) inst.tokens.push_back(content());
  inst.head.end = inst.tokens.size();
  for (std::size_t i = 0; i < mid; ++i) inst.tokens.push_back(content());
  inst.tail.start = inst.tokens.size();
  for (std::size_t i = 0; i < tail_len; ++i) inst.tokens.push_back(content());
  inst.tail.end = inst.tokens.size();
  for (std::size_t i = 0; i < suffix; ++i) inst.tokens.push_back(content());
  inst.relation = 0;
  return inst;
}

// Checks an analytic gradient of `f` at the point packed in `tensors`
// against central finite differences; returns the worst scale-aware error.
inline double max_grad_err(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x, const std::vector<double>& analytic,
                           double h = 1e-5) {
  const std::vector<double> fd = finite_diff_grad(f, x, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, grad_rel_err(analytic[i], fd[i]));
  }
  return worst;
}

}  // namespace fcre::test
