#include "fcre/encoder.hpp"

#include <cmath>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

void xavier_fill(Matrix& m, std::size_t fan_in, std::size_t fan_out, RngState& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-s, s);
}

// Embedding row for a position, honoring prompt injection.
const double* position_embedding(const EncoderParams& p, const ForwardCache& c, std::size_t pos,
                                 std::size_t* scaffold_rank) {
  if (c.use_prompt && *scaffold_rank < c.scaffold_positions.size() &&
      c.scaffold_positions[*scaffold_rank] == pos) {
    const std::size_t row = *scaffold_rank % p.dims.n_prompt;
    ++*scaffold_rank;
    return p.V_prompt.row_ptr(row);
  }
  return p.E.row_ptr(static_cast<std::size_t>(c.tokens[pos]));
}

void mean_segment(const EncoderParams& p, const ForwardCache& c, std::size_t begin,
                  std::size_t end, double* out) {
  const std::size_t d_e = p.dims.d_e;
  for (std::size_t k = 0; k < d_e; ++k) out[k] = 0.0;
  std::size_t rank = 0;
  for (std::size_t pos = 0; pos < c.tokens.size(); ++pos) {
    const double* emb = position_embedding(p, c, pos, &rank);
    if (pos >= begin && pos < end) {
      for (std::size_t k = 0; k < d_e; ++k) out[k] += emb[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(end - begin);
  for (std::size_t k = 0; k < d_e; ++k) out[k] *= inv;
}

Matrix affine(const Matrix& w, const Matrix& x, const Matrix& b) {
  Matrix out = b;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) acc += w(i, j) * x[j];
    out[i] += acc;
  }
  return out;
}

Matrix tanh_vec(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return out;
}

Matrix forward_from_cache(const EncoderParams& p, ForwardCache& c) {
  const std::size_t d_e = p.dims.d_e;
  c.x = Matrix(1, 3 * d_e);
  mean_segment(p, c, 0, c.tokens.size(), &c.x[0]);
  mean_segment(p, c, c.head.start, c.head.end, &c.x[d_e]);
  mean_segment(p, c, c.tail.start, c.tail.end, &c.x[2 * d_e]);
  c.a1 = tanh_vec(affine(p.W1, c.x, p.b1));
  c.f = tanh_vec(affine(p.W2, c.a1, p.b2));
  return c.f;
}

void scatter_segment(const EncoderParams& p, const ForwardCache& c, std::size_t begin,
                     std::size_t end, const double* dseg, EncoderGrads& g) {
  const std::size_t d_e = p.dims.d_e;
  const double inv = 1.0 / static_cast<double>(end - begin);
  std::size_t rank = 0;
  for (std::size_t pos = 0; pos < c.tokens.size(); ++pos) {
    const bool is_scaffold = c.use_prompt && rank < c.scaffold_positions.size() &&
                             c.scaffold_positions[rank] == pos;
    std::size_t prompt_row = 0;
    if (is_scaffold) prompt_row = rank++ % p.dims.n_prompt;
    if (pos < begin || pos >= end) continue;
    if (is_scaffold) {
      for (std::size_t k = 0; k < d_e; ++k) g.V_prompt(prompt_row, k) += inv * dseg[k];
    } else {
      const auto row = static_cast<std::size_t>(c.tokens[pos]);
      for (std::size_t k = 0; k < d_e; ++k) g.E(row, k) += inv * dseg[k];
    }
  }
}

}  // namespace

EncoderParams EncoderParams::init(EncoderDims dims, RngState& rng) {
  if (dims.vocab < 2 || dims.d_e < 2 || dims.d_h < 2 || dims.d < 2 || dims.d_phi < 2 ||
      dims.n_prompt < 1) {
    throw ConfigError("EncoderParams::init: dimensions too small");
  }
  EncoderParams p;
  p.dims = dims;
  p.E = Matrix(dims.vocab, dims.d_e);
  for (std::size_t i = 0; i < p.E.size(); ++i) p.E[i] = rng.uniform(-0.5, 0.5);
  p.W1 = Matrix(dims.d_h, 3 * dims.d_e);
  xavier_fill(p.W1, 3 * dims.d_e, dims.d_h, rng);
  // Entity-span segments start attenuated: the sentence mean carries the
  // relational signal, the span means mostly encode entity identity.
  for (std::size_t r = 0; r < dims.d_h; ++r) {
    for (std::size_t c = dims.d_e; c < 3 * dims.d_e; ++c) p.W1(r, c) *= 0.2;
  }
  p.b1 = Matrix(1, dims.d_h);
  p.W2 = Matrix(dims.d, dims.d_h);
  xavier_fill(p.W2, dims.d_h, dims.d, rng);
  p.b2 = Matrix(1, dims.d);
  p.P_phi = Matrix(dims.d_phi, dims.d);
  xavier_fill(p.P_phi, dims.d, dims.d_phi, rng);
  p.b_phi = Matrix(1, dims.d_phi);
  p.W_lm = Matrix(dims.vocab, dims.d);
  xavier_fill(p.W_lm, dims.d, dims.vocab, rng);
  p.b_lm = Matrix(1, dims.vocab);
  p.W_mi = Matrix(dims.d_phi, dims.vocab);
  xavier_fill(p.W_mi, dims.vocab, dims.d_phi, rng);
  p.V_prompt = Matrix(dims.n_prompt, dims.d_e);
  for (std::size_t i = 0; i < p.V_prompt.size(); ++i) p.V_prompt[i] = rng.uniform(-0.5, 0.5);
  return p;
}

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& p) {
  EncoderGrads g;
  g.E = Matrix(p.E.rows(), p.E.cols());
  g.W1 = Matrix(p.W1.rows(), p.W1.cols());
  g.b1 = Matrix(p.b1.rows(), p.b1.cols());
  g.W2 = Matrix(p.W2.rows(), p.W2.cols());
  g.b2 = Matrix(p.b2.rows(), p.b2.cols());
  g.P_phi = Matrix(p.P_phi.rows(), p.P_phi.cols());
  g.b_phi = Matrix(p.b_phi.rows(), p.b_phi.cols());
  g.W_lm = Matrix(p.W_lm.rows(), p.W_lm.cols());
  g.b_lm = Matrix(p.b_lm.rows(), p.b_lm.cols());
  g.W_mi = Matrix(p.W_mi.rows(), p.W_mi.cols());
  g.V_prompt = Matrix(p.V_prompt.rows(), p.V_prompt.cols());
  return g;
}

void EncoderGrads::scale(double s) {
  for (Matrix* m : grad_tensors(*this)) {
    for (std::size_t i = 0; i < m->size(); ++i) (*m)[i] *= s;
  }
}

void EncoderGrads::add(const EncoderGrads& other, double s) {
  auto mine = grad_tensors(*this);
  auto theirs = grad_tensors(other);
  for (std::size_t k = 0; k < mine.size(); ++k) axpy(*mine[k], s, *theirs[k]);
}

std::vector<Matrix*> param_tensors(EncoderParams& p) {
  return {&p.E,  &p.W1,   &p.b1,   &p.W2,   &p.b2,      &p.P_phi,
          &p.b_phi, &p.W_lm, &p.b_lm, &p.W_mi, &p.V_prompt};
}

std::vector<const Matrix*> param_tensors(const EncoderParams& p) {
  return {&p.E,  &p.W1,   &p.b1,   &p.W2,   &p.b2,      &p.P_phi,
          &p.b_phi, &p.W_lm, &p.b_lm, &p.W_mi, &p.V_prompt};
}

std::vector<Matrix*> grad_tensors(EncoderGrads& g) {
  return {&g.E,  &g.W1,   &g.b1,   &g.W2,   &g.b2,      &g.P_phi,
          &g.b_phi, &g.W_lm, &g.b_lm, &g.W_mi, &g.V_prompt};
}

std::vector<const Matrix*> grad_tensors(const EncoderGrads& g) {
  return {&g.E,  &g.W1,   &g.b1,   &g.W2,   &g.b2,      &g.P_phi,
          &g.b_phi, &g.W_lm, &g.b_lm, &g.W_mi, &g.V_prompt};
}

std::vector<const char*> param_tensor_names() {
  return {"E", "W1", "b1", "W2", "b2", "P_phi", "b_phi", "W_lm", "b_lm", "W_mi", "V_prompt"};
}

Matrix encode(const EncoderParams& p, const std::vector<int>& tokens, Span head, Span tail,
              std::size_t pooled_pos, const std::vector<std::size_t>& scaffold_positions,
              bool use_prompt, ForwardCache* cache) {
  Instance probe{tokens, head, tail, 0};
  const std::string problem = instance_problem(probe);
  if (!problem.empty()) throw ShapeError("encode: " + problem);
  if (pooled_pos >= tokens.size()) throw ShapeError("encode: pooled position out of range");
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= p.dims.vocab) {
      throw ShapeError("encode: token id out of vocabulary range");
    }
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.tokens = tokens;
  c.head = head;
  c.tail = tail;
  c.pooled_pos = pooled_pos;
  c.scaffold_positions = scaffold_positions;
  c.use_prompt = use_prompt;
  Matrix f = forward_from_cache(p, c);
  f.check_finite("encode");
  return f;
}

Matrix encode(const EncoderParams& p, const TemplatedInput& input, bool use_prompt,
              ForwardCache* cache) {
  return encode(p, input.tokens, input.head, input.tail, input.pooled_pos,
                input.scaffold_positions, use_prompt, cache);
}

Matrix replay(const EncoderParams& p, const ForwardCache& cache) {
  ForwardCache copy = cache;
  return forward_from_cache(p, copy);
}

void encode_backward(const EncoderParams& p, const ForwardCache& cache, const Matrix& df,
                     EncoderGrads& grads) {
  if (df.size() != p.dims.d) throw ShapeError("encode_backward: df width mismatch");
  const std::size_t d_e = p.dims.d_e;

  // f = tanh(z2): dz2 = df * (1 - f^2)
  Matrix dz2(1, p.dims.d);
  for (std::size_t i = 0; i < dz2.size(); ++i) dz2[i] = df[i] * (1.0 - cache.f[i] * cache.f[i]);
  for (std::size_t i = 0; i < p.dims.d; ++i) {
    for (std::size_t j = 0; j < p.dims.d_h; ++j) grads.W2(i, j) += dz2[i] * cache.a1[j];
    grads.b2[i] += dz2[i];
  }
  Matrix da1(1, p.dims.d_h);
  for (std::size_t j = 0; j < p.dims.d_h; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.dims.d; ++i) acc += p.W2(i, j) * dz2[i];
    da1[j] = acc;
  }
  Matrix dz1(1, p.dims.d_h);
  for (std::size_t j = 0; j < dz1.size(); ++j) dz1[j] = da1[j] * (1.0 - cache.a1[j] * cache.a1[j]);
  for (std::size_t i = 0; i < p.dims.d_h; ++i) {
    for (std::size_t j = 0; j < 3 * d_e; ++j) grads.W1(i, j) += dz1[i] * cache.x[j];
    grads.b1[i] += dz1[i];
  }
  Matrix dx(1, 3 * d_e);
  for (std::size_t j = 0; j < 3 * d_e; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.dims.d_h; ++i) acc += p.W1(i, j) * dz1[i];
    dx[j] = acc;
  }
  scatter_segment(p, cache, 0, cache.tokens.size(), &dx[0], grads);
  scatter_segment(p, cache, cache.head.start, cache.head.end, &dx[d_e], grads);
  scatter_segment(p, cache, cache.tail.start, cache.tail.end, &dx[2 * d_e], grads);
}

Matrix g_phi(const EncoderParams& p, const Matrix& f, GPhiCache* cache) {
  if (f.size() != p.dims.d) throw ShapeError("g_phi: feature width mismatch");
  Matrix u = affine(p.P_phi, f, p.b_phi);
  const double nu = norm(u);
  if (nu == 0.0) throw DegenerateInputError("g_phi: zero vector before normalization");
  Matrix g = (1.0 / nu) * u;
  if (cache) {
    cache->f = f;
    cache->u = u;
    cache->g = g;
    cache->nu = nu;
  }
  return g;
}

void g_phi_backward(const EncoderParams& p, const GPhiCache& cache, const Matrix& dg,
                    EncoderGrads& grads, Matrix& df) {
  if (dg.size() != p.dims.d_phi) throw ShapeError("g_phi_backward: dg width mismatch");
  // g = u/|u|: du = (dg - g (g . dg)) / |u|
  const double gdot = dot(cache.g, dg);
  Matrix du(1, p.dims.d_phi);
  for (std::size_t i = 0; i < du.size(); ++i) du[i] = (dg[i] - cache.g[i] * gdot) / cache.nu;
  for (std::size_t i = 0; i < p.dims.d_phi; ++i) {
    for (std::size_t j = 0; j < p.dims.d; ++j) grads.P_phi(i, j) += du[i] * cache.f[j];
    grads.b_phi[i] += du[i];
  }
  for (std::size_t j = 0; j < p.dims.d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.dims.d_phi; ++i) acc += p.P_phi(i, j) * du[i];
    df[j] += acc;
  }
}

Matrix lm_head(const EncoderParams& p, const Matrix& f) {
  if (f.size() != p.dims.d) throw ShapeError("lm_head: feature width mismatch");
  return affine(p.W_lm, f, p.b_lm);
}

void lm_head_backward(const EncoderParams& p, const Matrix& f, const Matrix& dlogits,
                      EncoderGrads& grads, Matrix& df) {
  if (dlogits.size() != p.dims.vocab) throw ShapeError("lm_head_backward: dlogits width mismatch");
  for (std::size_t i = 0; i < p.dims.vocab; ++i) {
    for (std::size_t j = 0; j < p.dims.d; ++j) grads.W_lm(i, j) += dlogits[i] * f[j];
    grads.b_lm[i] += dlogits[i];
  }
  for (std::size_t j = 0; j < p.dims.d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.dims.vocab; ++i) acc += p.W_lm(i, j) * dlogits[i];
    df[j] += acc;
  }
}

void apply_freeze(const FreezeMask& mask, EncoderGrads& grads) {
  if (mask.all_frozen()) throw ConfigError("apply_freeze: every parameter group is frozen");
  if (mask.embeddings) {
    grads.E.fill(0.0);
    grads.V_prompt.fill(0.0);
  }
  if (mask.encoder) {
    grads.W1.fill(0.0);
    grads.b1.fill(0.0);
    grads.W2.fill(0.0);
    grads.b2.fill(0.0);
  }
  if (mask.classifier) {
    grads.P_phi.fill(0.0);
    grads.b_phi.fill(0.0);
  }
  if (mask.lm_head) {
    grads.W_lm.fill(0.0);
    grads.b_lm.fill(0.0);
  }
  if (mask.mi_critic) {
    grads.W_mi.fill(0.0);
  }
}

}  // namespace fcre
