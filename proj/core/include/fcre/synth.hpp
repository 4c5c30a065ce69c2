#pragma once

#include <cstdint>
#include <vector>

#include "fcre/tasks.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

// Synthetic few-shot relation-extraction stream. Every relation is planted
// as a unique two-token trigger pattern sitting between the head and tail
// entity spans; with probability `noise` the trigger of an instance is
// replaced by random content tokens.
struct SynthConfig {
  std::size_t vocab_size = 60;  // content tokens
  std::size_t relations = 80;
  std::size_t tasks = 8;   // T
  std::size_t ways = 10;   // N
  std::size_t shots = 5;   // K
  std::size_t test_per_relation = 10;
  std::size_t first_task_relations = 0;           // 0 -> ways
  std::size_t first_task_train_per_relation = 0;  // 0 -> shots
  double noise = 0.0;
};

struct SynthOutput {
  Vocab vocab;
  TaskStream stream;
};

SynthOutput synth_generate(const SynthConfig& cfg, std::uint64_t seed);

// Unlabeled-corpus stand-in for the pretraining text: fresh sentences drawn
// from the same generator, `per_relation` for every relation.
std::vector<Instance> synth_pretrain_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                            std::size_t per_relation);

// Relation names used by the generator ("R0", "R1", ...).
std::vector<std::string> synth_relation_names(std::size_t relations);

}  // namespace fcre
