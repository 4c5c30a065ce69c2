#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcre/encoder.hpp"
#include "fcre/method_config.hpp"
#include "fcre/pretrain.hpp"
#include "fcre/synth.hpp"

namespace fcre {

// Top-level experiment description, parsed from a single JSON document.
struct ExperimentConfig {
  // data: either a synthetic stream or a directory of JSONL files produced
  // by gen-data
  std::string data_kind = "synthetic";  // "synthetic" | "jsonl"
  SynthConfig synth;
  std::uint64_t data_seed = 7;
  std::size_t pretrain_corpus_per_relation = 10;
  std::string jsonl_dir;  // when data_kind == "jsonl"

  EncoderDims dims{0, 16, 32, 16, 16, 4};  // vocab filled from the data
  std::size_t vocab_cap = 0;               // 0 = unlimited (jsonl loading)
  PretrainConfig pretrain;

  std::vector<MethodConfig> methods;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "out";
};

// Parses the JSON document at `path`; `overrides` are dotted key=value pairs
// (e.g. "pretrain.epochs=5") applied after parsing. Unknown keys raise
// ConfigError.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides = {});
ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::vector<std::string>& overrides = {});

}  // namespace fcre
