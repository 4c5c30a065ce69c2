#pragma once

#include <string>
#include <vector>

#include "fcre/instance.hpp"
#include "fcre/tasks.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

// How load_jsonl treats tokens absent from the working vocabulary.
enum class VocabPolicy {
  kExtend,  // append new tokens as content ids
  kFixed,   // map unknown tokens to [UNK]
};

struct LoadedCorpus {
  Vocab vocab;
  std::vector<Instance> instances;
  RelationRegistry relations;
};

// One JSON object per line: {"tokens": [str], "head": [int, int],
// "tail": [int, int], "relation": str}. Spans are half-open. Malformed lines
// raise ParseError naming the line number. With kExtend and a nonzero
// vocab_cap, tokens beyond the cap map to [UNK].
LoadedCorpus load_jsonl(const std::string& path, VocabPolicy policy, Vocab vocab = Vocab(),
                        RelationRegistry relations = {}, std::size_t vocab_cap = 0);

void save_jsonl(const std::string& path, const std::vector<Instance>& instances,
                const Vocab& vocab, const RelationRegistry& relations);

}  // namespace fcre
