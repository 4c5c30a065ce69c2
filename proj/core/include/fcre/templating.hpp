#pragma once

#include <cstddef>
#include <vector>

#include "fcre/instance.hpp"

namespace fcre {

// Token sequence produced by a prompt template, with entity spans remapped
// into the new sequence. `scaffold_positions` lists (in order) the positions
// the template inserted beyond the raw sentence/entity tokens; prompt-tuning
// replaces the embeddings at exactly these positions.
struct TemplatedInput {
  std::vector<int> tokens;
  Span head;
  Span tail;
  std::size_t pooled_pos = 0;
  std::vector<std::size_t> scaffold_positions;
};

// [CLS] e_h [MASK] e_t [SEP] x [SEP]; pooled at the [MASK] position.
TemplatedInput template_mask(const Instance& inst);

// x the relation between e_h and e_t is; pooled at the trailing "is".
TemplatedInput template_ar(const Instance& inst);

}  // namespace fcre
