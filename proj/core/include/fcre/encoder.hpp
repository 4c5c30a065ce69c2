#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fcre/matrix.hpp"
#include "fcre/rng.hpp"
#include "fcre/templating.hpp"

namespace fcre {

struct EncoderDims {
  std::size_t vocab = 0;
  std::size_t d_e = 8;    // embedding width
  std::size_t d_h = 16;   // hidden width
  std::size_t d = 8;      // feature width
  std::size_t d_phi = 8;  // classifier-branch width
  std::size_t n_prompt = 4;

  bool operator==(const EncoderDims&) const = default;
};

// All trainable tensors of the dual-branch encoder. f = encoder trunk
// output, g_phi = normalized classifier-branch feature, lm_head = vocabulary
// logits; W_mi is the bilinear critic between the two branches.
struct EncoderParams {
  EncoderDims dims;
  Matrix E;       // vocab x d_e
  Matrix W1, b1;  // d_h x 3*d_e, 1 x d_h
  Matrix W2, b2;  // d x d_h, 1 x d
  Matrix P_phi, b_phi;  // d_phi x d, 1 x d_phi
  Matrix W_lm, b_lm;    // vocab x d, 1 x vocab
  Matrix W_mi;          // d_phi x vocab
  Matrix V_prompt;      // n_prompt x d_e
  double tau_mi = 1.0;
  double tau_mcl = 0.1;

  static EncoderParams init(EncoderDims dims, RngState& rng);
};

// Gradient accumulator shaped like EncoderParams.
struct EncoderGrads {
  Matrix E, W1, b1, W2, b2, P_phi, b_phi, W_lm, b_lm, W_mi, V_prompt;

  static EncoderGrads zeros_like(const EncoderParams& p);
  void scale(double s);
  void add(const EncoderGrads& other, double s = 1.0);
};

// Fixed tensor ordering shared by the optimizer, freeze masks and
// checkpoints.
std::vector<Matrix*> param_tensors(EncoderParams& p);
std::vector<const Matrix*> param_tensors(const EncoderParams& p);
std::vector<Matrix*> grad_tensors(EncoderGrads& g);
std::vector<const Matrix*> grad_tensors(const EncoderGrads& g);
std::vector<const char*> param_tensor_names();

// Everything needed to replay one forward pass bit-exactly and to run the
// exact backward pass.
struct ForwardCache {
  std::vector<int> tokens;
  Span head, tail;
  std::size_t pooled_pos = 0;
  std::vector<std::size_t> scaffold_positions;
  bool use_prompt = false;
  Matrix x;   // 1 x 3*d_e concatenated span means
  Matrix a1;  // 1 x d_h
  Matrix f;   // 1 x d
};

// f(x) = tanh(W2 tanh(W1 [mean(E[tokens]); mean(E[head]); mean(E[tail])] +
// b1) + b2). With use_prompt, embeddings at scaffold positions come from
// V_prompt (row k mod n_prompt for the k-th scaffold position) instead of E.
// pooled_pos must be in range; this reference trunk does not otherwise use
// it.
Matrix encode(const EncoderParams& p, const std::vector<int>& tokens, Span head, Span tail,
              std::size_t pooled_pos, const std::vector<std::size_t>& scaffold_positions = {},
              bool use_prompt = false, ForwardCache* cache = nullptr);
Matrix encode(const EncoderParams& p, const TemplatedInput& input, bool use_prompt = false,
              ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(params) given d(loss)/df.
void encode_backward(const EncoderParams& p, const ForwardCache& cache, const Matrix& df,
                     EncoderGrads& grads);

// Recomputes f from the cached inputs; bit-identical to the cached value.
Matrix replay(const EncoderParams& p, const ForwardCache& cache);

struct GPhiCache {
  Matrix f;  // input
  Matrix u;  // pre-normalization
  Matrix g;  // output
  double nu = 0.0;
};

// normalize(P_phi f + b_phi); unit Euclidean norm.
Matrix g_phi(const EncoderParams& p, const Matrix& f, GPhiCache* cache = nullptr);
void g_phi_backward(const EncoderParams& p, const GPhiCache& cache, const Matrix& dg,
                    EncoderGrads& grads, Matrix& df);

// W_lm f + b_lm.
Matrix lm_head(const EncoderParams& p, const Matrix& f);
void lm_head_backward(const EncoderParams& p, const Matrix& f, const Matrix& dlogits,
                      EncoderGrads& grads, Matrix& df);

// Per-group gradient gate. The classifier group covers P_phi/b_phi and, in
// trainers that have one, the linear relation classifier.
struct FreezeMask {
  bool embeddings = false;
  bool encoder = false;
  bool classifier = false;
  bool lm_head = false;
  bool mi_critic = false;

  bool all_frozen() const {
    return embeddings && encoder && classifier && lm_head && mi_critic;
  }
};

// Zeroes the gradients of frozen groups; throws ConfigError when every group
// is frozen.
void apply_freeze(const FreezeMask& mask, EncoderGrads& grads);

}  // namespace fcre
