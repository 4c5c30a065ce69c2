#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "fcre/encoder.hpp"
#include "fcre/instance.hpp"
#include "fcre/losses.hpp"
#include "fcre/rng.hpp"

namespace fcre {

enum class TemplateMode { kMask, kAutoregressive };

// How instances are turned into features: template mode plus prompt
// injection, bound to one parameter snapshot.
struct EncodeContext {
  const EncoderParams* params = nullptr;
  TemplateMode mode = TemplateMode::kMask;
  bool use_prompt = false;

  TemplatedInput apply_template(const Instance& inst) const;
  Matrix feature(const Instance& inst) const;  // f
  Matrix feature(const Instance& inst, ForwardCache& cache) const;
};

struct PrototypeEntry {
  Matrix vec;
  int written_by_task = 0;
};

// One prototype per seen relation; vectors must be finite and nonzero.
class PrototypeMemory {
 public:
  void store(int rel, Matrix p, int task);
  bool has(int rel) const { return entries_.count(rel) > 0; }
  const Matrix& get(int rel) const;
  std::vector<int> relations() const;
  std::size_t size() const { return entries_.size(); }
  ProtoStack stack() const;
  ProtoStack stack(const std::vector<int>& rels) const;

 private:
  std::map<int, PrototypeEntry> entries_;
};

// Per-relation exemplar store.
class SampleMemory {
 public:
  void store(int rel, std::vector<Instance> samples);
  bool has(int rel) const { return entries_.count(rel) > 0; }
  const std::vector<Instance>& get(int rel) const;
  std::vector<int> relations() const;
  std::size_t size() const { return entries_.size(); }
  // All stored instances, in ascending relation order.
  std::vector<Instance> all() const;

 private:
  std::map<int, std::vector<Instance>> entries_;
};

// Mean feature of the given instances.
Matrix compute_prototype(const std::vector<Instance>& instances, const EncodeContext& ctx);

// k-means (k = L, k-means++ init, Lloyd, max 100 iterations, tolerance 1e-6
// on centroid movement) over features; per cluster the instance nearest its
// centroid (Euclidean, ties by lowest index). Fewer than L instances: all of
// them are returned.
std::vector<Instance> select_typical(const std::vector<Instance>& instances,
                                     const EncodeContext& ctx, std::size_t L, RngState& rng);

// Same selection plus the clustering it came from, so tests can verify each
// exemplar against its centroid exhaustively. `assignments` is empty when
// the shortfall path fired.
struct TypicalSelection {
  std::vector<Instance> chosen;
  std::vector<std::size_t> chosen_indices;
  Matrix features;    // n x d
  Matrix centroids;   // L x d
  std::vector<std::size_t> assignments;
};
TypicalSelection select_typical_detail(const std::vector<Instance>& instances,
                                       const EncodeContext& ctx, std::size_t L, RngState& rng);

// Bidirectional entity-swap augmentation: entity representations are mean
// embedding rows over the span; every unordered pair of distinct entities
// with cosine similarity above tau_sim contributes both swapped copies.
// Output = originals + swaps, deduplicated, labels preserved.
std::vector<Instance> entity_swap_augment(const std::vector<Instance>& instances,
                                          const EncoderParams& params, double tau_sim);

// Prototypes recomputed from the stored samples under the current encoder.
PrototypeMemory refresh_prototypes(const SampleMemory& memory, const EncodeContext& ctx,
                                   int task);

}  // namespace fcre
