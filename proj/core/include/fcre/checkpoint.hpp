#pragma once

#include <cstdint>
#include <string>

#include "fcre/encoder.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

struct Checkpoint {
  EncoderParams params;
  std::uint64_t vocab_hash = 0;
};

// Versioned JSON blob with every tensor plus the vocabulary hash. Writing is
// deterministic: same params -> identical bytes.
void save_checkpoint(const std::string& path, const EncoderParams& params,
                     std::uint64_t vocab_hash);
Checkpoint load_checkpoint(const std::string& path);

// Load with a vocabulary-hash check; mismatch raises ConfigError.
EncoderParams load_checkpoint_for(const std::string& path, const Vocab& vocab);

}  // namespace fcre
