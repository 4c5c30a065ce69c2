#include "fcre/instance.hpp"

#include <utility>

namespace fcre {

std::string instance_problem(const Instance& inst) {
  if (inst.tokens.empty()) return "empty token sequence";
  for (const auto& [span, name] : {std::pair{inst.head, "head"}, std::pair{inst.tail, "tail"}}) {
    if (span.start >= span.end) return std::string(name) + " span empty";
    if (span.end > inst.tokens.size()) return std::string(name) + " span out of bounds";
  }
  const bool overlap = inst.head.start < inst.tail.end && inst.tail.start < inst.head.end;
  if (overlap) return "head and tail spans overlap";
  return {};
}

}  // namespace fcre
