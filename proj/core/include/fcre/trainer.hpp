#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "fcre/adam.hpp"
#include "fcre/checkpoint.hpp"
#include "fcre/encoder.hpp"
#include "fcre/memory.hpp"
#include "fcre/method_config.hpp"
#include "fcre/metrics.hpp"
#include "fcre/synth.hpp"
#include "fcre/tasks.hpp"

namespace fcre {

// Scalar loss with gradients over the full parameter universe (encoder
// tensors plus, for trainers that have one, the linear relation classifier).
struct StepLoss {
  double value = 0.0;
  EncoderGrads enc;
  Matrix d_cls_w, d_cls_b;
};

// L = l0 + lambda * lmi, gradients summed correspondingly.
StepLoss combine(StepLoss l0, const StepLoss& lmi, double lambda);

// Linear relation classifier (SCKD); rows in relation append order.
struct LinearClassifier {
  Matrix w, b;
  std::vector<int> rels;

  std::size_t row_of(int rel) const;
  void add_relations(const std::vector<int>& new_rels, std::size_t feature_dim);
};

// Mutable state of one continual run.
struct ContinualState {
  Vocab vocab;
  MethodConfig cfg;
  EncoderParams params;
  LinearClassifier cls;
  std::optional<EncoderParams> prev_params;  // end of previous task
  std::optional<LinearClassifier> prev_cls;
  SampleMemory smem;
  PrototypeMemory pmem;
  std::vector<int> seen_rels;  // sorted
  int task_count = 0;
  RngState rng{0};

  EncodeContext ctx() const;
};

ContinualState make_state(const Vocab& vocab, const EncoderParams& pretrained,
                          const MethodConfig& cfg);

// Family-specific per-task training; returns the per-epoch mean step losses
// of the task's training phases in order.
std::vector<double> train_task(ContinualState& state, const Task& task);

// -- Per-batch objectives (the trainers are built from these; they are the
//    units the gradient oracle probes). ---------------------------------

StepLoss sckd_batch_loss(const EncoderParams& params, const LinearClassifier& cls,
                         const EncoderParams* prev_params, const LinearClassifier* prev_cls,
                         const std::vector<Instance>& batch, const MethodConfig& cfg);

StepLoss conpl_batch_loss(const EncoderParams& params, const ProtoStack& protos,
                          const ProtoStack& old_protos, const std::vector<Instance>& batch,
                          const std::vector<bool>& is_memory, const MethodConfig& cfg);

StepLoss conpl_memory_loss(const EncoderParams& params, const ProtoStack& prototype_memory,
                           const std::vector<Instance>& batch, const MethodConfig& cfg);

StepLoss cpl_batch_loss(const EncoderParams& params, const std::vector<Instance>& batch,
                        const std::vector<Instance>& memory_pool, const MethodConfig& cfg);

// -- Evaluation ---------------------------------------------------------

// Frozen view used for prediction: linear head for SCKD, cosine NCM over
// prototypes for ConPL/CPL.
struct EvalModel {
  const ContinualState* state = nullptr;
  ProtoStack protos;  // ConPL: stored memory; CPL: recomputed on demand
};

EvalModel build_eval_model(const ContinualState& state);
// Winning relation id among scored candidates; ties go to the lowest id.
int argmax_relation(const std::vector<double>& scores, const std::vector<int>& rels);
// Predicted relation id over everything seen so far; ties by lowest id.
int predict(const EvalModel& model, const Instance& inst);
// Per-sample negative log-likelihood under the family's prediction head.
double eval_nll(const EvalModel& model, const Instance& inst);

struct EvalOutcome {
  std::vector<double> acc_per_task;  // ACC_{j,i} for i <= j
  double pooled_test_loss = 0.0;
};

// All-seen-relations protocol: prediction is over every relation learned so
// far, for every test set of tasks 1..upto.
EvalOutcome evaluate(const ContinualState& state, const TaskStream& stream, std::size_t upto);

double set_accuracy(const ContinualState& state, const std::vector<Instance>& instances);
double mean_eval_loss(const ContinualState& state, const std::vector<Instance>& instances);

// -- Run drivers --------------------------------------------------------

struct TrainHooks {
  // Called after each task with the partial result (rows 1..task filled).
  std::function<void(int task, const RunResult& partial)> after_task;
};

RunResult run_single(const TaskStream& stream, const Vocab& vocab,
                     const EncoderParams& pretrained, const MethodConfig& cfg,
                     const TrainHooks& hooks = {}, ContinualState* final_state = nullptr);

struct ExperimentOutcome {
  Aggregate agg;
  std::vector<RunResult> per_seed;
};

// Full pipeline per seed: fresh pretrained parameters, sequential
// train_task + evaluate, then seed-wise aggregation. A failing seed raises
// ExperimentError naming it.
ExperimentOutcome run_experiment(
    const TaskStream& stream, const Vocab& vocab, const MethodConfig& cfg,
    const std::function<EncoderParams(std::uint64_t seed)>& pretrained_for_seed,
    const std::vector<std::uint64_t>& seeds, const TrainHooks& hooks = {});

}  // namespace fcre
