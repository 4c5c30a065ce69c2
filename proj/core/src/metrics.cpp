#include "fcre/metrics.hpp"

#include <cmath>

#include <json.hpp>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

using ordered_json = nlohmann::ordered_json;

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

void compute_metrics(RunResult& run) {
  const std::size_t T = run.acc_matrix.size();
  if (T == 0) throw ProtocolError("compute_metrics: empty accuracy matrix");
  run.acc_avg.assign(T, 0.0);
  for (std::size_t j = 0; j < T; ++j) {
    if (run.acc_matrix[j].size() != j + 1) {
      throw ProtocolError("compute_metrics: row " + std::to_string(j + 1) + " has " +
                          std::to_string(run.acc_matrix[j].size()) + " entries, expected " +
                          std::to_string(j + 1));
    }
    double sum = 0.0;
    for (double v : run.acc_matrix[j]) sum += v;
    run.acc_avg[j] = sum / static_cast<double>(j + 1);
  }
  run.delta = run.acc_avg.front() - run.acc_avg.back();
  run.gap.clear();
  if (run.train_loss.size() == T && run.test_loss.size() == T) {
    for (std::size_t j = 0; j < T; ++j) run.gap.push_back(run.test_loss[j] - run.train_loss[j]);
  }
}

std::string run_result_to_json(const RunResult& run) {
  ordered_json j;
  j["acc_matrix"] = run.acc_matrix;
  j["acc_avg"] = run.acc_avg;
  j["delta"] = run.delta;
  j["train_loss"] = run.train_loss;
  j["test_loss"] = run.test_loss;
  j["gap"] = run.gap;
  j["epoch_loss"] = run.epoch_loss;
  return j.dump(1);
}

RunResult run_result_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run_result_from_json: invalid JSON (") + e.what() + ")");
  }
  RunResult run;
  run.acc_matrix = j.at("acc_matrix").get<std::vector<std::vector<double>>>();
  run.acc_avg = j.at("acc_avg").get<std::vector<double>>();
  run.delta = j.at("delta").get<double>();
  run.train_loss = j.at("train_loss").get<std::vector<double>>();
  run.test_loss = j.at("test_loss").get<std::vector<double>>();
  run.gap = j.at("gap").get<std::vector<double>>();
  run.epoch_loss = j.at("epoch_loss").get<std::vector<std::vector<double>>>();
  return run;
}

Aggregate aggregate_runs(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw ConfigError("aggregate_runs: no runs");
  const std::size_t T = runs.front().acc_avg.size();
  for (const RunResult& r : runs) {
    if (r.acc_avg.size() != T) throw ProtocolError("aggregate_runs: task-count mismatch");
  }
  Aggregate agg;
  agg.runs = runs.size();
  for (std::size_t j = 0; j < T; ++j) {
    std::vector<double> accs, gaps;
    for (const RunResult& r : runs) {
      accs.push_back(r.acc_avg[j]);
      if (r.gap.size() == T) gaps.push_back(r.gap[j]);
    }
    auto [am, as] = mean_std(accs);
    agg.acc_avg_mean.push_back(am);
    agg.acc_avg_std.push_back(as);
    auto [gm, gs] = mean_std(gaps);
    agg.gap_mean.push_back(gm);
    agg.gap_std.push_back(gs);
  }
  std::vector<double> deltas, finals, tails;
  for (const RunResult& r : runs) {
    deltas.push_back(r.delta);
    finals.push_back(r.acc_avg.back());
    if (r.gap.size() == T && T > 1) {
      double tail = 0.0;
      for (std::size_t j = 1; j < T; ++j) tail += r.gap[j];
      tails.push_back(tail / static_cast<double>(T - 1));
    }
  }
  std::tie(agg.delta_mean, agg.delta_std) = mean_std(deltas);
  std::tie(agg.final_acc_mean, agg.final_acc_std) = mean_std(finals);
  std::tie(agg.tail_gap_mean, agg.tail_gap_std) = mean_std(tails);
  return agg;
}

}  // namespace fcre
