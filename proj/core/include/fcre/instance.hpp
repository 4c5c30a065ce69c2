#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fcre {

// Half-open token index range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

// Tokenized sentence with head/tail entity spans and a relation label.
struct Instance {
  std::vector<int> tokens;
  Span head;
  Span tail;
  int relation = -1;

  bool operator==(const Instance&) const = default;
};

// Empty string when the instance satisfies its invariants (spans in bounds,
// non-empty, non-overlapping), else a description of the violation.
std::string instance_problem(const Instance& inst);

}  // namespace fcre
