#pragma once

#include <cstddef>
#include <vector>

#include "fcre/matrix.hpp"

namespace fcre {

struct MiLossConfig {
  double tau = 1.0;     // critic temperature
  double lambda = 1.0;  // weight of the MI term in the combined objective
};

struct ConplConfig {
  double alpha = 0.3;  // similar-prototype screening threshold
  double w_ce = 1.0;
  double w_cc = 1.0;
  double w_fc = 1.0;
  double w_dc = 1.0;
};

struct CplConfig {
  double margin = 0.25;  // m
  double k = 0.1;        // relaxation slope
  double tau = 0.1;      // contrastive temperature
};

struct SckdConfig {
  double w_fd = 0.5;
  double w_pd = 0.5;
  double tau_sim = 0.9;       // entity-swap similarity threshold
  double distill_temp = 2.0;  // prediction-distillation temperature
};

// Prototype stack: row r of `vecs` is the prototype of relation `rels[r]`.
struct ProtoStack {
  Matrix vecs;
  std::vector<int> rels;

  std::size_t count() const { return rels.size(); }
  // Row index of a relation id; throws ProtocolError when absent.
  std::size_t index_of(int rel) const;
};

// ---------------------------------------------------------------------------
// Mutual-information loss between the two branches.

struct InfoNceResult {
  double value = 0.0;
  Matrix d_gphi;  // B x d_phi
  Matrix d_glm;   // B x vocab
  Matrix d_w;     // d_phi x vocab
};

// (1/B) sum_i log[ h(i,i) / sum_j h(i,j) ] with
// h(i,j) = exp(gphi_i^T W glm_j / tau). Always <= 0.
InfoNceResult info_nce(const Matrix& gphi, const Matrix& glm, const Matrix& w_mi, double tau);

// L_MI = -InfoNCE; always >= 0, ln B at W = 0, 0 at B = 1.
InfoNceResult mi_loss(const Matrix& gphi, const Matrix& glm, const Matrix& w_mi, double tau);

// ---------------------------------------------------------------------------
// ConPL losses.

struct ProtoLossResult {
  double value = 0.0;
  Matrix d_f;       // 1 x d
  Matrix d_protos;  // n x d
};

// -log softmax over cosine similarities to the prototypes, at `label` (a row
// index into the stack).
ProtoLossResult ce_proto(const Matrix& f, const Matrix& prototypes, std::size_t label);

// Ordered similar-prototype set: [label; most similar other; every other
// prototype s with d(f,p_label) - d(f,p_s) < alpha], deduplicated.
std::vector<std::size_t> similar_prototypes(const Matrix& f, const Matrix& prototypes,
                                            std::size_t label, double alpha);

// ce_proto restricted to an explicit candidate set (first entry must be the
// label's own prototype).
ProtoLossResult restricted_ce_proto(const Matrix& f, const Matrix& prototypes, std::size_t label,
                                    const std::vector<std::size_t>& candidates);

// -log p_s(r|x) over similar_prototypes(f, prototypes, label, alpha).
ProtoLossResult loss_fc(const Matrix& f, const Matrix& prototypes, std::size_t label,
                        double alpha);

struct PairLossResult {
  double value = 0.0;
  Matrix d_features;  // n x d
  Matrix d_refs;      // n x d
};

// sum_i || f_i - p_i || (Euclidean, subgradient 0 at the kink).
PairLossResult loss_cc(const Matrix& features, const Matrix& prototypes);

struct DcLossResult {
  double value = 0.0;
  Matrix d_features;  // n x d
};

// sum_i || d(f_i, P) - d(p_i, P) || where d(v, P) is the vector of cosine
// similarities of v to every stored prototype; p_i is the prototype of
// labels[i]. Prototypes are treated as constants.
DcLossResult loss_dc(const Matrix& features, const std::vector<int>& labels,
                     const ProtoStack& prototype_memory);

// ---------------------------------------------------------------------------
// SCKD losses.

struct LinearCeResult {
  double value = 0.0;
  Matrix d_h;  // 1 x d
  Matrix d_w;  // m x d
  Matrix d_b;  // 1 x m
};

// Softmax cross-entropy on logits = W h + b.
LinearCeResult ce_linear(const Matrix& h, const Matrix& w, const Matrix& b, std::size_t label);

struct FdLossResult {
  double value = 0.0;
  Matrix d_new;  // n x d
};

// (1/n) sum_i (1 - f_old_i . f_new_i); rows are expected unit-norm; the old
// features are constants.
FdLossResult loss_fd(const Matrix& f_old, const Matrix& f_new);

struct PdLossResult {
  double value = 0.0;
  Matrix d_new;  // B x m (full width; nonzero only on the old columns)
};

// Mean KL(softmax(old/T) || softmax(new/T)) over the old-relation columns;
// old logits are constants. Empty column set -> 0.
PdLossResult loss_pd(const Matrix& logits_old, const Matrix& logits_new,
                     const std::vector<std::size_t>& old_columns, double temperature = 2.0);

// ---------------------------------------------------------------------------
// CPL margin-based contrastive loss.

struct MclResult {
  double value = 0.0;
  Matrix d_z;    // 1 x d
  Matrix d_pos;  // P x d
  Matrix d_neg;  // N x d
};

// L = -sum_p log[ exp(a_p s_p / tau) / Z ], a_p = m + k s_p,
// a_n = 1 - m + k s_n, Z = sum_p exp(a_p s_p/tau) + sum_n exp(a_n s_n/tau).
// All vectors are expected unit-norm; s are plain dot products.
MclResult mcl(const Matrix& z, const Matrix& positives, const Matrix& negatives,
              const CplConfig& cfg);

}  // namespace fcre
