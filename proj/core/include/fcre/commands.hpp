#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcre/config.hpp"
#include "fcre/tasks.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

// Data as resolved from an experiment config (synthetic generation or JSONL
// ingestion).
struct ExperimentData {
  Vocab vocab;
  TaskStream stream;
  std::vector<Instance> pretrain_corpus;
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

std::string checkpoint_path(const std::string& out_dir, std::uint64_t seed);
std::string runs_dir(const std::string& out_dir);

// Exit codes: 0 success, 2 config/usage error, 1 runtime failure. Errors are
// printed to stderr. The FCRE_OUT_ROOT environment variable overrides the
// config's out_dir.
int run_cli(const std::vector<std::string>& args);

// Individual commands (what the CLI verbs dispatch to); these throw.
void cmd_gen_data(const ExperimentConfig& cfg, const std::string& out_path);
void cmd_pretrain(const ExperimentConfig& cfg);
void cmd_run(const ExperimentConfig& cfg);
void cmd_report(const std::string& results_dir, std::string* text_out = nullptr);
void cmd_dump_embeddings(const std::string& results_dir, int task_id, const std::string& branch,
                         const std::string& method, std::uint64_t seed,
                         const std::string& out_csv);

}  // namespace fcre
