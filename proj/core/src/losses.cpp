#include "fcre/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fcre/errors.hpp"

namespace fcre {

std::size_t ProtoStack::index_of(int rel) const {
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (rels[i] == rel) return i;
  }
  throw ProtocolError("ProtoStack: no prototype for relation " + std::to_string(rel));
}

InfoNceResult info_nce(const Matrix& gphi, const Matrix& glm, const Matrix& w_mi, double tau) {
  const std::size_t B = gphi.rows();
  if (B == 0 || glm.rows() != B) {
    throw ShapeError("info_nce: batch size mismatch (" + std::to_string(B) + " vs " +
                     std::to_string(glm.rows()) + ")");
  }
  if (w_mi.rows() != gphi.cols() || w_mi.cols() != glm.cols()) {
    throw ShapeError("info_nce: critic shape mismatch");
  }
  if (tau <= 0.0) throw ConfigError("info_nce: temperature must be positive");

  const std::size_t d_phi = gphi.cols();
  const std::size_t d_lm = glm.cols();

  // wg[j] = W glm_j, so S(i,j) = gphi_i . wg[j] / tau.
  Matrix wg(B, d_phi);
  for (std::size_t j = 0; j < B; ++j) {
    for (std::size_t r = 0; r < d_phi; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d_lm; ++c) acc += w_mi(r, c) * glm(j, c);
      wg(j, r) = acc;
    }
  }
  Matrix scores(B, B);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < B; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < d_phi; ++r) acc += gphi(i, r) * wg(j, r);
      scores(i, j) = acc / tau;
    }
  }

  InfoNceResult out;
  out.d_gphi = Matrix(B, d_phi);
  out.d_glm = Matrix(B, d_lm);
  out.d_w = Matrix(w_mi.rows(), w_mi.cols());

  Matrix coeff(B, B);  // dV/dS(i,j) = (delta_ij - softmax_j) / B
  double value = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    const double lse = log_sum_exp({&scores(i, 0), B});
    value += scores(i, i) - lse;
    for (std::size_t j = 0; j < B; ++j) {
      const double p = std::exp(scores(i, j) - lse);
      coeff(i, j) = ((i == j ? 1.0 : 0.0) - p) / static_cast<double>(B);
    }
  }
  out.value = value / static_cast<double>(B);

  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t j = 0; j < B; ++j) {
      const double c = coeff(i, j) / tau;
      if (c == 0.0) continue;
      for (std::size_t r = 0; r < d_phi; ++r) out.d_gphi(i, r) += c * wg(j, r);
      for (std::size_t r = 0; r < d_phi; ++r) {
        const double gi = c * gphi(i, r);
        for (std::size_t v = 0; v < d_lm; ++v) {
          out.d_w(r, v) += gi * glm(j, v);
        }
      }
    }
  }
  // d_glm_j = sum_i coeff(i,j)/tau * W^T gphi_i
  for (std::size_t j = 0; j < B; ++j) {
    Matrix acc(1, d_phi);
    for (std::size_t i = 0; i < B; ++i) {
      const double c = coeff(i, j) / tau;
      for (std::size_t r = 0; r < d_phi; ++r) acc[r] += c * gphi(i, r);
    }
    for (std::size_t v = 0; v < d_lm; ++v) {
      double s = 0.0;
      for (std::size_t r = 0; r < d_phi; ++r) s += w_mi(r, v) * acc[r];
      out.d_glm(j, v) += s;
    }
  }
  return out;
}

InfoNceResult mi_loss(const Matrix& gphi, const Matrix& glm, const Matrix& w_mi, double tau) {
  InfoNceResult out = info_nce(gphi, glm, w_mi, tau);
  out.value = -out.value;
  for (Matrix* m : {&out.d_gphi, &out.d_glm, &out.d_w}) {
    for (std::size_t i = 0; i < m->size(); ++i) (*m)[i] = -(*m)[i];
  }
  return out;
}

namespace {

std::vector<double> proto_similarities(const Matrix& f, const Matrix& prototypes) {
  std::vector<double> sims(prototypes.rows());
  for (std::size_t l = 0; l < prototypes.rows(); ++l) {
    sims[l] = cosine(f, prototypes.row_copy(l));
  }
  return sims;
}

}  // namespace

ProtoLossResult restricted_ce_proto(const Matrix& f, const Matrix& prototypes, std::size_t label,
                                    const std::vector<std::size_t>& candidates) {
  if (label >= prototypes.rows()) throw IndexError("ce_proto: label out of range");
  if (candidates.empty() || candidates.front() != label) {
    throw IndexError("restricted_ce_proto: candidate set must start with the label");
  }
  std::vector<double> sims;
  sims.reserve(candidates.size());
  for (std::size_t c : candidates) {
    if (c >= prototypes.rows()) throw IndexError("restricted_ce_proto: candidate out of range");
    sims.push_back(cosine(f, prototypes.row_copy(c)));
  }
  const double lse = log_sum_exp(sims);

  ProtoLossResult out;
  out.value = lse - sims.front();
  out.d_f = Matrix(1, f.size());
  out.d_protos = Matrix(prototypes.rows(), prototypes.cols());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double q = std::exp(sims[k] - lse);
    const double coeff = q - (k == 0 ? 1.0 : 0.0);
    if (coeff == 0.0) continue;
    Matrix p_row = prototypes.row_copy(candidates[k]);
    Matrix dp(1, prototypes.cols());
    cosine_backward(f, p_row, coeff, out.d_f, dp);
    out.d_protos.add_row(candidates[k], dp);
  }
  return out;
}

ProtoLossResult ce_proto(const Matrix& f, const Matrix& prototypes, std::size_t label) {
  std::vector<std::size_t> all(prototypes.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (label >= prototypes.rows()) throw IndexError("ce_proto: label out of range");
  std::swap(all[0], all[label]);
  return restricted_ce_proto(f, prototypes, label, all);
}

std::vector<std::size_t> similar_prototypes(const Matrix& f, const Matrix& prototypes,
                                            std::size_t label, double alpha) {
  if (label >= prototypes.rows()) throw IndexError("similar_prototypes: label out of range");
  std::vector<std::size_t> out{label};
  if (prototypes.rows() < 2) return out;
  const std::vector<double> sims = proto_similarities(f, prototypes);

  std::size_t most = label == 0 ? 1 : 0;
  for (std::size_t s = 0; s < sims.size(); ++s) {
    if (s == label) continue;
    if (sims[s] > sims[most]) most = s;  // ties keep the lowest index
  }
  out.push_back(most);
  for (std::size_t s = 0; s < sims.size(); ++s) {
    if (s == label || s == most) continue;
    if (sims[label] - sims[s] < alpha) out.push_back(s);
  }
  return out;
}

ProtoLossResult loss_fc(const Matrix& f, const Matrix& prototypes, std::size_t label,
                        double alpha) {
  const std::vector<std::size_t> psim = similar_prototypes(f, prototypes, label, alpha);
  if (psim.size() < 2) {
    ProtoLossResult out;
    out.d_f = Matrix(1, f.size());
    out.d_protos = Matrix(prototypes.rows(), prototypes.cols());
    return out;
  }
  return restricted_ce_proto(f, prototypes, label, psim);
}

PairLossResult loss_cc(const Matrix& features, const Matrix& prototypes) {
  if (!features.same_shape(prototypes)) {
    throw ShapeError("loss_cc: feature/prototype shape mismatch");
  }
  PairLossResult out;
  out.d_features = Matrix(features.rows(), features.cols());
  out.d_refs = Matrix(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < features.cols(); ++c) {
      const double d = features(i, c) - prototypes(i, c);
      sq += d * d;
    }
    const double dist = std::sqrt(sq);
    out.value += dist;
    if (dist > 0.0) {
      for (std::size_t c = 0; c < features.cols(); ++c) {
        const double g = (features(i, c) - prototypes(i, c)) / dist;
        out.d_features(i, c) += g;
        out.d_refs(i, c) -= g;
      }
    }
  }
  return out;
}

DcLossResult loss_dc(const Matrix& features, const std::vector<int>& labels,
                     const ProtoStack& prototype_memory) {
  if (prototype_memory.count() == 0) throw ConfigError("loss_dc: empty prototype memory");
  if (features.rows() != labels.size()) throw ShapeError("loss_dc: feature/label count mismatch");

  const std::size_t m = prototype_memory.count();
  DcLossResult out;
  out.d_features = Matrix(features.rows(), features.cols());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Matrix f = features.row_copy(i);
    const Matrix p = prototype_memory.vecs.row_copy(prototype_memory.index_of(labels[i]));
    std::vector<double> diff(m);
    double sq = 0.0;
    for (std::size_t l = 0; l < m; ++l) {
      const Matrix proto = prototype_memory.vecs.row_copy(l);
      diff[l] = cosine(f, proto) - cosine(p, proto);
      sq += diff[l] * diff[l];
    }
    const double dist = std::sqrt(sq);
    out.value += dist;
    if (dist > 0.0) {
      Matrix df(1, features.cols());
      Matrix unused(1, features.cols());
      for (std::size_t l = 0; l < m; ++l) {
        if (diff[l] == 0.0) continue;
        const Matrix proto = prototype_memory.vecs.row_copy(l);
        unused.fill(0.0);
        cosine_backward(f, proto, diff[l] / dist, df, unused);
      }
      out.d_features.add_row(i, df);
    }
  }
  return out;
}

LinearCeResult ce_linear(const Matrix& h, const Matrix& w, const Matrix& b, std::size_t label) {
  if (w.cols() != h.size() || b.size() != w.rows()) throw ShapeError("ce_linear: shape mismatch");
  if (label >= w.rows()) throw IndexError("ce_linear: label out of range");
  const std::size_t m = w.rows();
  Matrix logits(1, m);
  for (std::size_t r = 0; r < m; ++r) {
    double acc = b[r];
    for (std::size_t c = 0; c < w.cols(); ++c) acc += w(r, c) * h[c];
    logits[r] = acc;
  }
  const double lse = log_sum_exp(logits.flat());

  LinearCeResult out;
  out.value = lse - logits[label];
  out.d_h = Matrix(1, h.size());
  out.d_w = Matrix(w.rows(), w.cols());
  out.d_b = Matrix(1, m);
  for (std::size_t r = 0; r < m; ++r) {
    const double coeff = std::exp(logits[r] - lse) - (r == label ? 1.0 : 0.0);
    out.d_b[r] = coeff;
    for (std::size_t c = 0; c < w.cols(); ++c) {
      out.d_w(r, c) = coeff * h[c];
      out.d_h[c] += coeff * w(r, c);
    }
  }
  return out;
}

FdLossResult loss_fd(const Matrix& f_old, const Matrix& f_new) {
  if (!f_old.same_shape(f_new)) throw ShapeError("loss_fd: batch shape mismatch");
  if (f_old.rows() == 0) throw ShapeError("loss_fd: empty batch");
  const double inv = 1.0 / static_cast<double>(f_old.rows());
  FdLossResult out;
  out.d_new = Matrix(f_new.rows(), f_new.cols());
  for (std::size_t i = 0; i < f_old.rows(); ++i) {
    double d = 0.0;
    for (std::size_t c = 0; c < f_old.cols(); ++c) d += f_old(i, c) * f_new(i, c);
    out.value += inv * (1.0 - d);
    for (std::size_t c = 0; c < f_old.cols(); ++c) out.d_new(i, c) = -inv * f_old(i, c);
  }
  return out;
}

PdLossResult loss_pd(const Matrix& logits_old, const Matrix& logits_new,
                     const std::vector<std::size_t>& old_columns, double temperature) {
  if (logits_old.rows() != logits_new.rows()) throw ShapeError("loss_pd: batch size mismatch");
  if (temperature <= 0.0) throw ConfigError("loss_pd: temperature must be positive");
  PdLossResult out;
  out.d_new = Matrix(logits_new.rows(), logits_new.cols());
  if (old_columns.empty() || logits_old.rows() == 0) return out;
  for (std::size_t col : old_columns) {
    if (col >= logits_old.cols() || col >= logits_new.cols()) {
      throw IndexError("loss_pd: old column out of range");
    }
  }
  const std::size_t B = logits_old.rows();
  const std::size_t m = old_columns.size();
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<double> zo(m), zn(m);
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      zo[k] = logits_old(i, old_columns[k]) / temperature;
      zn[k] = logits_new(i, old_columns[k]) / temperature;
    }
    const double lo = log_sum_exp(zo);
    const double ln = log_sum_exp(zn);
    for (std::size_t k = 0; k < m; ++k) {
      const double p = std::exp(zo[k] - lo);
      const double q = std::exp(zn[k] - ln);
      out.value += inv_b * p * ((zo[k] - lo) - (zn[k] - ln));
      out.d_new(i, old_columns[k]) = inv_b * (q - p) / temperature;
    }
  }
  return out;
}

MclResult mcl(const Matrix& z, const Matrix& positives, const Matrix& negatives,
              const CplConfig& cfg) {
  if (cfg.margin <= 0.0 || cfg.margin >= 1.0) throw ConfigError("mcl: margin must be in (0,1)");
  if (cfg.k <= 0.0) throw ConfigError("mcl: k must be positive");
  if (cfg.tau <= 0.0) throw ConfigError("mcl: temperature must be positive");
  if (positives.rows() == 0) throw ConfigError("mcl: empty positive set");
  if (positives.cols() != z.size() || (negatives.rows() > 0 && negatives.cols() != z.size())) {
    throw ShapeError("mcl: vector width mismatch");
  }

  const std::size_t P = positives.rows();
  const std::size_t N = negatives.rows();
  std::vector<double> sp(P), sn(N), tp(P), tn(N);
  for (std::size_t p = 0; p < P; ++p) {
    sp[p] = dot(z, positives.row_copy(p));
    tp[p] = (cfg.margin + cfg.k * sp[p]) * sp[p] / cfg.tau;
  }
  for (std::size_t n = 0; n < N; ++n) {
    sn[n] = dot(z, negatives.row_copy(n));
    tn[n] = (1.0 - cfg.margin + cfg.k * sn[n]) * sn[n] / cfg.tau;
  }
  std::vector<double> all;
  all.reserve(P + N);
  all.insert(all.end(), tp.begin(), tp.end());
  all.insert(all.end(), tn.begin(), tn.end());
  const double logz = log_sum_exp(all);

  MclResult out;
  out.d_z = Matrix(1, z.size());
  out.d_pos = Matrix(P, positives.cols());
  out.d_neg = Matrix(N, z.size());
  for (std::size_t p = 0; p < P; ++p) out.value += logz - tp[p];

  const double np = static_cast<double>(P);
  for (std::size_t p = 0; p < P; ++p) {
    const double dt = np * std::exp(tp[p] - logz) - 1.0;
    const double ds = dt * (cfg.margin + 2.0 * cfg.k * sp[p]) / cfg.tau;
    for (std::size_t c = 0; c < z.size(); ++c) {
      out.d_z[c] += ds * positives(p, c);
      out.d_pos(p, c) += ds * z[c];
    }
  }
  for (std::size_t n = 0; n < N; ++n) {
    const double dt = np * std::exp(tn[n] - logz);
    const double ds = dt * (1.0 - cfg.margin + 2.0 * cfg.k * sn[n]) / cfg.tau;
    for (std::size_t c = 0; c < z.size(); ++c) {
      out.d_z[c] += ds * negatives(n, c);
      out.d_neg(n, c) += ds * z[c];
    }
  }
  return out;
}

}  // namespace fcre
