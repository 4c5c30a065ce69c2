#include "fcre/templating.hpp"

#include "fcre/errors.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

namespace {

void require_valid(const Instance& inst) {
  const std::string problem = instance_problem(inst);
  if (!problem.empty()) throw ShapeError("template: " + problem);
}

}  // namespace

TemplatedInput template_mask(const Instance& inst) {
  require_valid(inst);
  TemplatedInput out;
  const std::size_t hl = inst.head.size();
  const std::size_t tl = inst.tail.size();
  out.tokens.reserve(4 + hl + tl + inst.tokens.size());

  out.scaffold_positions.push_back(out.tokens.size());
  out.tokens.push_back(Vocab::kCls);
  out.head = {out.tokens.size(), out.tokens.size() + hl};
  for (std::size_t i = inst.head.start; i < inst.head.end; ++i) out.tokens.push_back(inst.tokens[i]);
  out.pooled_pos = out.tokens.size();
  out.scaffold_positions.push_back(out.tokens.size());
  out.tokens.push_back(Vocab::kMask);
  out.tail = {out.tokens.size(), out.tokens.size() + tl};
  for (std::size_t i = inst.tail.start; i < inst.tail.end; ++i) out.tokens.push_back(inst.tokens[i]);
  out.scaffold_positions.push_back(out.tokens.size());
  out.tokens.push_back(Vocab::kSep);
  for (int t : inst.tokens) out.tokens.push_back(t);
  out.scaffold_positions.push_back(out.tokens.size());
  out.tokens.push_back(Vocab::kSep);
  return out;
}

TemplatedInput template_ar(const Instance& inst) {
  require_valid(inst);
  TemplatedInput out;
  const std::size_t hl = inst.head.size();
  const std::size_t tl = inst.tail.size();
  out.tokens.reserve(5 + hl + tl + inst.tokens.size());

  for (int t : inst.tokens) out.tokens.push_back(t);
  for (int scaffold : {Vocab::kThe, Vocab::kRelation, Vocab::kBetween}) {
    out.scaffold_positions.push_back(out.tokens.size());
    out.tokens.push_back(scaffold);
  }
  out.head = {out.tokens.size(), out.tokens.size() + hl};
  for (std::size_t i = inst.head.start; i < inst.head.end; ++i) out.tokens.push_back(inst.tokens[i]);
  out.scaffold_positions.push_back(out.tokens.size());
  out.tokens.push_back(Vocab::kAnd);
  out.tail = {out.tokens.size(), out.tokens.size() + tl};
  for (std::size_t i = inst.tail.start; i < inst.tail.end; ++i) out.tokens.push_back(inst.tokens[i]);
  out.scaffold_positions.push_back(out.tokens.size());
  out.pooled_pos = out.tokens.size();
  out.tokens.push_back(Vocab::kIs);
  return out;
}

}  // namespace fcre
