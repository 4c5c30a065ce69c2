#include "fcre/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "fcre/errors.hpp"

namespace fcre {

TemplatedInput EncodeContext::apply_template(const Instance& inst) const {
  return mode == TemplateMode::kMask ? template_mask(inst) : template_ar(inst);
}

Matrix EncodeContext::feature(const Instance& inst) const {
  return encode(*params, apply_template(inst), use_prompt);
}

Matrix EncodeContext::feature(const Instance& inst, ForwardCache& cache) const {
  return encode(*params, apply_template(inst), use_prompt, &cache);
}

void PrototypeMemory::store(int rel, Matrix p, int task) {
  p.check_finite("PrototypeMemory::store");
  if (norm(p) == 0.0) {
    throw DegenerateInputError("PrototypeMemory::store: zero-norm prototype for relation " +
                               std::to_string(rel));
  }
  entries_[rel] = PrototypeEntry{std::move(p), task};
}

const Matrix& PrototypeMemory::get(int rel) const {
  auto it = entries_.find(rel);
  if (it == entries_.end()) {
    throw ProtocolError("PrototypeMemory: no prototype for relation " + std::to_string(rel));
  }
  return it->second.vec;
}

std::vector<int> PrototypeMemory::relations() const {
  std::vector<int> out;
  for (const auto& [rel, _] : entries_) out.push_back(rel);
  return out;
}

ProtoStack PrototypeMemory::stack() const { return stack(relations()); }

ProtoStack PrototypeMemory::stack(const std::vector<int>& rels) const {
  ProtoStack s;
  s.rels = rels;
  if (rels.empty()) return s;
  const std::size_t d = get(rels.front()).size();
  s.vecs = Matrix(rels.size(), d);
  for (std::size_t i = 0; i < rels.size(); ++i) s.vecs.set_row(i, get(rels[i]));
  return s;
}

void SampleMemory::store(int rel, std::vector<Instance> samples) {
  if (samples.empty()) throw ConfigError("SampleMemory::store: empty sample list");
  entries_[rel] = std::move(samples);
}

const std::vector<Instance>& SampleMemory::get(int rel) const {
  auto it = entries_.find(rel);
  if (it == entries_.end()) {
    throw ProtocolError("SampleMemory: no samples for relation " + std::to_string(rel));
  }
  return it->second;
}

std::vector<int> SampleMemory::relations() const {
  std::vector<int> out;
  for (const auto& [rel, _] : entries_) out.push_back(rel);
  return out;
}

std::vector<Instance> SampleMemory::all() const {
  std::vector<Instance> out;
  for (const auto& [_, samples] : entries_) {
    out.insert(out.end(), samples.begin(), samples.end());
  }
  return out;
}

Matrix compute_prototype(const std::vector<Instance>& instances, const EncodeContext& ctx) {
  if (instances.empty()) throw ConfigError("compute_prototype: empty instance list");
  Matrix mean = ctx.feature(instances.front());
  for (std::size_t i = 1; i < instances.size(); ++i) {
    mean += ctx.feature(instances[i]);
  }
  const double inv = 1.0 / static_cast<double>(instances.size());
  for (std::size_t c = 0; c < mean.size(); ++c) mean[c] *= inv;
  return mean;
}

namespace {

double sq_dist(const Matrix& points, std::size_t i, const Matrix& center, std::size_t c) {
  double acc = 0.0;
  for (std::size_t k = 0; k < points.cols(); ++k) {
    const double d = points(i, k) - center(c, k);
    acc += d * d;
  }
  return acc;
}

// Deterministic k-means++ seeding followed by Lloyd iterations.
Matrix kmeans_centroids(const Matrix& points, std::size_t k, RngState& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);

  std::size_t first = rng.below(n);
  centers.set_row(0, points.row_copy(first));
  chosen[first] = true;
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(points, i, centers, c - 1));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > u) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = n - 1;  // u landed on the accumulated rounding slack
    } else {
      // All remaining mass is zero (duplicate points); take the lowest unchosen index.
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
      if (pick == n) pick = 0;
    }
    centers.set_row(c, points.row_copy(pick));
    chosen[pick] = true;
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(points, i, centers, 0);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(points, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      Matrix mean(1, points.cols());
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != c) continue;
        mean.add_row(0, points.row_copy(i));
        ++count;
      }
      if (count == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t kk = 0; kk < mean.size(); ++kk) mean[kk] /= static_cast<double>(count);
      double shift = 0.0;
      for (std::size_t kk = 0; kk < mean.size(); ++kk) {
        const double d = mean[kk] - centers(c, kk);
        shift += d * d;
      }
      movement = std::max(movement, std::sqrt(shift));
      centers.set_row(c, mean);
    }
    if (movement < 1e-6) break;
  }
  return centers;
}

}  // namespace

TypicalSelection select_typical_detail(const std::vector<Instance>& instances,
                                       const EncodeContext& ctx, std::size_t L, RngState& rng) {
  if (L == 0) throw ConfigError("select_typical: L must be positive");
  TypicalSelection out;
  if (instances.size() <= L) {  // shortfall: everything we have
    out.chosen = instances;
    for (std::size_t i = 0; i < instances.size(); ++i) out.chosen_indices.push_back(i);
    return out;
  }

  const std::size_t n = instances.size();
  Matrix points(n, ctx.params->dims.d);
  for (std::size_t i = 0; i < n; ++i) points.set_row(i, ctx.feature(instances[i]));

  const Matrix centers = kmeans_centroids(points, L, rng);

  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_d = sq_dist(points, i, centers, 0);
    for (std::size_t c = 1; c < L; ++c) {
      const double d = sq_dist(points, i, centers, c);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assign[i] = best;
  }

  std::set<std::size_t> taken;
  for (std::size_t c = 0; c < L; ++c) {
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      const double d = sq_dist(points, i, centers, c);
      if (d < best_d) {  // strict: ties keep the lowest index
        best_d = d;
        best = i;
      }
    }
    if (best < n) {
      out.chosen.push_back(instances[best]);
      out.chosen_indices.push_back(best);
      taken.insert(best);
    }
  }
  // Top up from empty clusters so the memory invariant (exactly L) holds.
  for (std::size_t i = 0; i < n && out.chosen.size() < L; ++i) {
    if (!taken.count(i)) {
      out.chosen.push_back(instances[i]);
      out.chosen_indices.push_back(i);
      taken.insert(i);
    }
  }
  out.features = std::move(points);
  out.centroids = centers;
  out.assignments = std::move(assign);
  return out;
}

std::vector<Instance> select_typical(const std::vector<Instance>& instances,
                                     const EncodeContext& ctx, std::size_t L, RngState& rng) {
  return select_typical_detail(instances, ctx, L, rng).chosen;
}

namespace {

Matrix entity_embedding(const EncoderParams& params, const std::vector<int>& tokens) {
  Matrix mean(1, params.dims.d_e);
  for (int t : tokens) {
    for (std::size_t k = 0; k < params.dims.d_e; ++k) {
      mean[k] += params.E(static_cast<std::size_t>(t), k);
    }
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] *= inv;
  return mean;
}

Instance rebuild_with_replacement(const Instance& inst, bool replace_head,
                                  const std::vector<int>& replacement) {
  Instance out;
  out.relation = inst.relation;
  const Span target = replace_head ? inst.head : inst.tail;
  for (std::size_t pos = 0; pos < inst.tokens.size(); ++pos) {
    if (pos == target.start) {
      if (replace_head) out.head.start = out.tokens.size();
      else out.tail.start = out.tokens.size();
      for (int t : replacement) out.tokens.push_back(t);
      if (replace_head) out.head.end = out.tokens.size();
      else out.tail.end = out.tokens.size();
    }
    if (pos >= target.start && pos < target.end) continue;
    if (pos == inst.head.start && !replace_head) out.head.start = out.tokens.size();
    if (pos == inst.tail.start && replace_head) out.tail.start = out.tokens.size();
    out.tokens.push_back(inst.tokens[pos]);
    if (pos + 1 == inst.head.end && !replace_head) out.head.end = out.tokens.size();
    if (pos + 1 == inst.tail.end && replace_head) out.tail.end = out.tokens.size();
  }
  return out;
}

}  // namespace

std::vector<Instance> entity_swap_augment(const std::vector<Instance>& instances,
                                          const EncoderParams& params, double tau_sim) {
  // Distinct entities in first-appearance order, with every (instance, side)
  // occurrence recorded.
  std::vector<std::vector<int>> entities;
  std::vector<std::vector<std::pair<std::size_t, bool>>> occurrences;  // (instance, is_head)
  auto entity_index = [&](const std::vector<int>& seq) {
    for (std::size_t e = 0; e < entities.size(); ++e) {
      if (entities[e] == seq) return e;
    }
    entities.push_back(seq);
    occurrences.emplace_back();
    return entities.size() - 1;
  };
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    std::vector<int> head_seq(inst.tokens.begin() + inst.head.start,
                              inst.tokens.begin() + inst.head.end);
    std::vector<int> tail_seq(inst.tokens.begin() + inst.tail.start,
                              inst.tokens.begin() + inst.tail.end);
    occurrences[entity_index(head_seq)].emplace_back(i, true);
    occurrences[entity_index(tail_seq)].emplace_back(i, false);
  }

  std::vector<Instance> out = instances;
  std::set<std::vector<int>> seen_keys;
  auto key_of = [](const Instance& inst) {
    std::vector<int> key = inst.tokens;
    key.push_back(static_cast<int>(inst.head.start));
    key.push_back(static_cast<int>(inst.head.end));
    key.push_back(static_cast<int>(inst.tail.start));
    key.push_back(static_cast<int>(inst.tail.end));
    key.push_back(inst.relation);
    return key;
  };
  for (const Instance& inst : out) seen_keys.insert(key_of(inst));

  std::vector<Matrix> reps;
  reps.reserve(entities.size());
  for (const auto& seq : entities) reps.push_back(entity_embedding(params, seq));

  auto emit = [&](std::size_t ent, std::size_t other) {
    for (const auto& [idx, is_head] : occurrences[ent]) {
      Instance swapped = rebuild_with_replacement(instances[idx], is_head, entities[other]);
      if (seen_keys.insert(key_of(swapped)).second) out.push_back(std::move(swapped));
    }
  };
  for (std::size_t a = 0; a < entities.size(); ++a) {
    for (std::size_t b = a + 1; b < entities.size(); ++b) {
      double sim;
      try {
        sim = cosine(reps[a], reps[b]);
      } catch (const DegenerateInputError&) {
        continue;  // zero-embedding entity: no similarity defined
      }
      if (sim > tau_sim) {
        emit(a, b);
        emit(b, a);
      }
    }
  }
  return out;
}

PrototypeMemory refresh_prototypes(const SampleMemory& memory, const EncodeContext& ctx,
                                   int task) {
  if (memory.size() == 0) throw ConfigError("refresh_prototypes: empty sample memory");
  PrototypeMemory out;
  for (int rel : memory.relations()) {
    out.store(rel, compute_prototype(memory.get(rel), ctx), task);
  }
  return out;
}

}  // namespace fcre
