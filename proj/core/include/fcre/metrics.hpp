#pragma once

#include <string>
#include <vector>

namespace fcre {

// Outcome of one continual run: lower-triangular accuracy matrix plus the
// derived series. Accuracies are fractions in [0,1].
struct RunResult {
  std::vector<std::vector<double>> acc_matrix;  // row j has j+1 entries
  std::vector<double> acc_avg;                  // ACC_j = mean of row j
  double delta = 0.0;                           // ACC_1 - ACC_T
  std::vector<double> train_loss;               // per task, end-of-task
  std::vector<double> test_loss;                // per task, pooled over seen tasks
  std::vector<double> gap;                      // test_loss - train_loss per task
  std::vector<std::vector<double>> epoch_loss;  // per task, per epoch
};

// Fills acc_avg/delta/gap from the matrix and the logged losses; throws
// ProtocolError on an incomplete matrix.
void compute_metrics(RunResult& run);

std::string run_result_to_json(const RunResult& run);
RunResult run_result_from_json(const std::string& text);

// Seed-wise aggregation (arithmetic mean, sample standard deviation).
struct Aggregate {
  std::size_t runs = 0;
  std::vector<double> acc_avg_mean, acc_avg_std;
  double delta_mean = 0.0, delta_std = 0.0;
  std::vector<double> gap_mean, gap_std;
  // Mean generalization gap over tasks 2..T, per seed, then aggregated.
  double tail_gap_mean = 0.0, tail_gap_std = 0.0;
  double final_acc_mean = 0.0, final_acc_std = 0.0;
};

Aggregate aggregate_runs(const std::vector<RunResult>& runs);

}  // namespace fcre
