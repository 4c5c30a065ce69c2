#include <doctest.h>

#include <cmath>
#include <set>

#include "fcre/errors.hpp"
#include "fcre/pretrain.hpp"
#include "fcre/trainer.hpp"
#include "helpers.hpp"

using namespace fcre;
using namespace fcre::test;

namespace {

struct World {
  SynthConfig scfg;
  SynthOutput synth;
  EncoderParams pretrained;
  MethodConfig cfg;

  explicit World(std::size_t tasks = 2, std::size_t ways = 2, std::size_t shots = 4,
                 double noise = 0.0) {
    scfg.vocab_size = 24;
    scfg.relations = tasks * ways;
    scfg.tasks = tasks;
    scfg.ways = ways;
    scfg.shots = shots;
    scfg.test_per_relation = 6;
    scfg.noise = noise;
    synth = synth_generate(scfg, 5);

    EncoderDims dims{synth.vocab.size(), 8, 16, 8, 8, 4};
    RngState rng(40);
    RngState init_rng = rng.fork(1);
    pretrained = EncoderParams::init(dims, init_rng);
    const std::vector<Instance> corpus = synth_pretrain_corpus(scfg, 5, 6);
    PretrainConfig pcfg;
    pcfg.epochs = 8;
    pcfg.lr = 0.02;
    RngState train_rng = rng.fork(2);
    pretrain_mlm(pretrained, corpus, pcfg, train_rng);

    cfg.family = Family::kCpl;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.lr = 0.01;
    cfg.seed = 11;
  }
};

std::vector<double> all_param_grads(const StepLoss& loss, bool with_cls) {
  std::vector<const Matrix*> mats;
  for (const Matrix* g : grad_tensors(loss.enc)) mats.push_back(g);
  if (with_cls) {
    mats.push_back(&loss.d_cls_w);
    mats.push_back(&loss.d_cls_b);
  }
  return flatten(mats);
}

}  // namespace

TEST_CASE("combine adds values and gradients with the weight") {
  RngState rng(1);
  const EncoderDims dims = small_dims(rng);
  EncoderParams p = EncoderParams::init(dims, rng);

  StepLoss a;
  a.value = 1.5;
  a.enc = EncoderGrads::zeros_like(p);
  a.enc.W1(0, 0) = 2.0;
  StepLoss b;
  b.value = 0.25;
  b.enc = EncoderGrads::zeros_like(p);
  b.enc.W1(0, 0) = -4.0;

  const StepLoss zero = combine(a, b, 0.0);
  CHECK(zero.value == 1.5);
  CHECK(zero.enc.W1(0, 0) == 2.0);

  const StepLoss one = combine(a, b, 1.0);
  CHECK(one.value == doctest::Approx(1.75));
  CHECK(one.enc.W1(0, 0) == doctest::Approx(-2.0));

  const StepLoss half = combine(a, b, 0.5);
  CHECK(half.value == doctest::Approx(1.625));
  CHECK(half.enc.W1(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("sckd composed objective gradient matches finite differences") {
  RngState rng(2);
  for (bool mi : {false, true}) {
    const EncoderDims dims = small_dims(rng);
    RngState prng(50);
    EncoderParams params = EncoderParams::init(dims, prng);
    EncoderParams prev_params = EncoderParams::init(dims, prng);

    LinearClassifier cls;
    cls.add_relations({0, 1}, dims.d);
    LinearClassifier prev_cls = cls;
    cls.add_relations({2, 3}, dims.d);
    for (std::size_t i = 0; i < cls.w.size(); ++i) cls.w[i] = rng.uniform(-0.3, 0.3);
    for (std::size_t i = 0; i < prev_cls.w.size(); ++i) prev_cls.w[i] = rng.uniform(-0.3, 0.3);

    std::vector<Instance> batch;
    for (int i = 0; i < 3; ++i) {
      Instance inst = random_instance(dims.vocab, rng);
      inst.relation = static_cast<int>(rng.below(4));
      batch.push_back(inst);
    }
    MethodConfig cfg;
    cfg.family = Family::kSckd;
    cfg.mi_enabled = mi;
    cfg.mi.lambda = 0.7;
    cfg.mi.tau = 0.8;
    EncoderParams tuned = params;
    tuned.tau_mi = cfg.mi.tau;

    const StepLoss loss = sckd_batch_loss(tuned, cls, &prev_params, &prev_cls, batch, cfg);

    std::vector<Matrix*> vars = param_tensors(tuned);
    vars.push_back(&cls.w);
    vars.push_back(&cls.b);
    const std::vector<double> x0 = flatten(const_ptrs(vars));
    auto fn = [&](const std::vector<double>& x) {
      EncoderParams q = tuned;
      LinearClassifier c2 = cls;
      std::vector<Matrix*> rebuilt = param_tensors(q);
      rebuilt.push_back(&c2.w);
      rebuilt.push_back(&c2.b);
      unflatten(x, rebuilt);
      return sckd_batch_loss(q, c2, &prev_params, &prev_cls, batch, cfg).value;
    };
    CHECK(max_grad_err(fn, x0, all_param_grads(loss, true)) < 1e-4);
  }
}

TEST_CASE("conpl composed objectives gradient match finite differences") {
  RngState rng(3);
  for (bool mi : {false, true}) {
    const EncoderDims dims = small_dims(rng);
    RngState prng(60);
    EncoderParams params = EncoderParams::init(dims, prng);
    params.tau_mi = 1.2;

    ProtoStack protos;
    protos.rels = {0, 1, 2, 3};
    protos.vecs = Matrix(4, dims.d);
    for (std::size_t i = 0; i < protos.vecs.size(); ++i) {
      protos.vecs[i] = rng.uniform(-1.0, 1.0);
    }
    ProtoStack old_protos;
    old_protos.rels = {0, 1};
    old_protos.vecs = Matrix(2, dims.d);
    for (std::size_t i = 0; i < old_protos.vecs.size(); ++i) {
      old_protos.vecs[i] = rng.uniform(-1.0, 1.0);
    }

    std::vector<Instance> batch;
    std::vector<bool> is_memory;
    for (int i = 0; i < 3; ++i) {
      Instance inst = random_instance(dims.vocab, rng);
      inst.relation = static_cast<int>(rng.below(i == 0 ? 2 : 4));
      batch.push_back(inst);
      is_memory.push_back(inst.relation < 2);
    }
    MethodConfig cfg;
    cfg.family = Family::kConpl;
    cfg.mi_enabled = mi;
    cfg.mi.lambda = 0.6;
    cfg.conpl.alpha = 5.0;  // saturated: set membership stable under probes

    const StepLoss loss = conpl_batch_loss(params, protos, old_protos, batch, is_memory, cfg);
    const std::vector<double> x0 = flatten(const_ptrs(param_tensors(params)));
    auto fn = [&](const std::vector<double>& x) {
      EncoderParams q = params;
      unflatten(x, param_tensors(q));
      return conpl_batch_loss(q, protos, old_protos, batch, is_memory, cfg).value;
    };
    CHECK(max_grad_err(fn, x0, all_param_grads(loss, false)) < 1e-4);

    // memory-enhanced step
    const StepLoss mem = conpl_memory_loss(params, protos, batch, cfg);
    auto fn_mem = [&](const std::vector<double>& x) {
      EncoderParams q = params;
      unflatten(x, param_tensors(q));
      return conpl_memory_loss(q, protos, batch, cfg).value;
    };
    CHECK(max_grad_err(fn_mem, x0, all_param_grads(mem, false)) < 1e-4);
  }
}

TEST_CASE("cpl composed objective gradient matches finite differences") {
  RngState rng(4);
  for (bool mi : {false, true}) {
    const EncoderDims dims = small_dims(rng);
    RngState prng(70);
    EncoderParams params = EncoderParams::init(dims, prng);
    params.tau_mi = 0.9;

    std::vector<Instance> batch, pool;
    for (int i = 0; i < 3; ++i) {
      Instance inst = random_instance(dims.vocab, rng);
      inst.relation = static_cast<int>(rng.below(2));
      batch.push_back(inst);
    }
    for (int i = 0; i < 2; ++i) {
      Instance inst = random_instance(dims.vocab, rng);
      inst.relation = static_cast<int>(rng.below(3));
      pool.push_back(inst);
    }
    MethodConfig cfg;
    cfg.family = Family::kCpl;
    cfg.mi_enabled = mi;
    cfg.mi.lambda = 0.5;
    cfg.cpl.tau = 0.5;

    const StepLoss loss = cpl_batch_loss(params, batch, pool, cfg);
    const std::vector<double> x0 = flatten(const_ptrs(param_tensors(params)));
    auto fn = [&](const std::vector<double>& x) {
      EncoderParams q = params;
      unflatten(x, param_tensors(q));
      return cpl_batch_loss(q, batch, pool, cfg).value;
    };
    CHECK(max_grad_err(fn, x0, all_param_grads(loss, false)) < 1e-4);
  }
}

TEST_CASE("each family fits one separable task") {
  World world(1, 2, 8);
  for (Family family : {Family::kSckd, Family::kConpl, Family::kCpl}) {
    MethodConfig cfg = world.cfg;
    cfg.family = family;
    cfg.epochs = family == Family::kConpl ? 60 : 25;
    ContinualState state = make_state(world.synth.vocab, world.pretrained, cfg);
    train_task(state, world.synth.stream.tasks[0]);
    const double acc = set_accuracy(state, world.synth.stream.tasks[0].train);
    INFO("family ", family_name(family), " train accuracy ", acc);
    CHECK(acc >= 0.95);
  }
}

TEST_CASE("a zero MI weight is bit-identical to disabling MI") {
  World world;
  for (Family family : {Family::kSckd, Family::kConpl, Family::kCpl}) {
    MethodConfig off = world.cfg;
    off.family = family;
    off.epochs = 4;
    off.mi_enabled = false;
    MethodConfig zero = off;
    zero.mi_enabled = true;
    zero.mi.lambda = 0.0;

    ContinualState s_off, s_zero;
    const RunResult r_off =
        run_single(world.synth.stream, world.synth.vocab, world.pretrained, off, {}, &s_off);
    const RunResult r_zero =
        run_single(world.synth.stream, world.synth.vocab, world.pretrained, zero, {}, &s_zero);
    CHECK(run_result_to_json(r_off) == run_result_to_json(r_zero));
    auto t_off = param_tensors(s_off.params);
    auto t_zero = param_tensors(s_zero.params);
    for (std::size_t k = 0; k < t_off.size(); ++k) CHECK(*t_off[k] == *t_zero[k]);
  }
}

TEST_CASE("freeze_lm_head keeps the LM head bit-identical over a full run") {
  World world;
  for (Family family : {Family::kSckd, Family::kConpl, Family::kCpl}) {
    MethodConfig cfg = world.cfg;
    cfg.family = family;
    cfg.epochs = 3;
    cfg.mi_enabled = true;
    cfg.freeze_lm_head = true;
    ContinualState state;
    const RunResult run =
        run_single(world.synth.stream, world.synth.vocab, world.pretrained, cfg, {}, &state);
    CHECK(state.params.W_lm == world.pretrained.W_lm);
    CHECK(state.params.b_lm == world.pretrained.b_lm);
    for (double acc : run.acc_avg) CHECK(std::isfinite(acc));
    for (double g : run.gap) CHECK(std::isfinite(g));
  }
}

TEST_CASE("training a seen relation again is a protocol error") {
  World world;
  MethodConfig cfg = world.cfg;
  cfg.epochs = 2;
  ContinualState state = make_state(world.synth.vocab, world.pretrained, cfg);
  train_task(state, world.synth.stream.tasks[0]);
  CHECK_THROWS_AS(train_task(state, world.synth.stream.tasks[0]), ProtocolError);
}

TEST_CASE("evaluation covers every seen relation and matches brute force") {
  World world(2, 2, 6);
  world.scfg.test_per_relation = 13;  // >= 50 test points across both tasks
  world.synth = synth_generate(world.scfg, 5);
  for (Family family : {Family::kSckd, Family::kConpl, Family::kCpl}) {
    MethodConfig cfg = world.cfg;
    cfg.family = family;
    cfg.epochs = 6;
    ContinualState state = make_state(world.synth.vocab, world.pretrained, cfg);
    train_task(state, world.synth.stream.tasks[0]);
    train_task(state, world.synth.stream.tasks[1]);

    const EvalModel model = build_eval_model(state);
    const std::vector<int> seen = world.synth.stream.seen_relations(2);
    REQUIRE(seen.size() == 4);

    // exhaustive argmax over all seen relations, 50 random test points
    std::size_t checked = 0;
    for (const Task& task : world.synth.stream.tasks) {
      for (const Instance& inst : task.test) {
        if (checked >= 50) break;
        ++checked;
        const Matrix f = state.ctx().feature(inst);
        std::vector<double> scores;
        if (family == Family::kSckd) {
          for (std::size_t r = 0; r < state.cls.rels.size(); ++r) {
            double acc = state.cls.b[r];
            for (std::size_t c = 0; c < state.cls.w.cols(); ++c) {
              acc += state.cls.w(r, c) * f[c];
            }
            scores.push_back(acc);
          }
          CHECK(predict(model, inst) ==
                argmax_relation(scores, state.cls.rels));
        } else {
          std::vector<int> rels = model.protos.rels;
          std::set<int> rel_set(rels.begin(), rels.end());
          CHECK(rel_set == std::set<int>(seen.begin(), seen.end()));
          for (std::size_t r = 0; r < model.protos.count(); ++r) {
            scores.push_back(cosine(f, model.protos.vecs.row_copy(r)));
          }
          CHECK(predict(model, inst) == argmax_relation(scores, rels));
        }
      }
    }
    CHECK(checked == 50);

    const EvalOutcome eo = evaluate(state, world.synth.stream, 2);
    CHECK(eo.acc_per_task.size() == 2);
    for (double a : eo.acc_per_task) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
  }
}

TEST_CASE("a prototype evaluated on itself predicts its relation") {
  World world(1, 3, 6);
  MethodConfig cfg = world.cfg;
  cfg.family = Family::kConpl;
  cfg.epochs = 10;
  ContinualState state = make_state(world.synth.vocab, world.pretrained, cfg);
  train_task(state, world.synth.stream.tasks[0]);
  const EvalModel model = build_eval_model(state);
  for (int rel : state.smem.relations()) {
    // with L=1 the refreshed prototype is exactly the stored sample's feature
    CHECK(predict(model, state.smem.get(rel).front()) == rel);
  }
}

TEST_CASE("argmax is invariant under strictly monotone score transforms") {
  RngState rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> scores;
    std::vector<int> rels;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse grid so ties actually happen
      scores.push_back(static_cast<double>(rng.below(4)));
      rels.push_back(static_cast<int>(rng.below(20)));
    }
    std::vector<double> transformed;
    for (double s : scores) transformed.push_back(2.0 * s + 1.0);
    CHECK(argmax_relation(scores, rels) == argmax_relation(transformed, rels));
  }
}

TEST_CASE("metrics arithmetic") {
  RunResult run;
  run.acc_matrix = {{0.9}, {0.8, 0.6}};
  run.train_loss = {0.5, 0.4};
  run.test_loss = {0.5, 0.9};
  compute_metrics(run);
  CHECK(run.acc_avg[0] == doctest::Approx(0.9));
  CHECK(run.acc_avg[1] == doctest::Approx(0.7));
  CHECK(run.delta == doctest::Approx(0.2));
  CHECK(run.gap[0] == doctest::Approx(0.0));
  CHECK(run.gap[1] == doctest::Approx(0.5));

  RunResult bad;
  bad.acc_matrix = {{0.9}, {0.8}};
  CHECK_THROWS_AS(compute_metrics(bad), ProtocolError);
}

TEST_CASE("metrics reproduce published accuracy-drop arithmetic") {
  // SCKD row: ACC_1 = 94.75, ACC_8 = 62.98 -> delta 31.77
  RunResult run;
  run.acc_matrix.push_back({0.9475});
  for (std::size_t j = 2; j <= 8; ++j) {
    run.acc_matrix.push_back(std::vector<double>(j, j == 8 ? 0.6298 : 0.70));
  }
  compute_metrics(run);
  CHECK(std::abs(run.delta - 0.3177) <= 1e-4);

  // CPL+MI row: ACC_1 = 94.69, ACC_8 = 66.27 -> delta 28.42
  RunResult cpl;
  cpl.acc_matrix.push_back({0.9469});
  for (std::size_t j = 2; j <= 8; ++j) {
    cpl.acc_matrix.push_back(std::vector<double>(j, j == 8 ? 0.6627 : 0.70));
  }
  compute_metrics(cpl);
  CHECK(std::abs(cpl.delta - 0.2842) <= 1e-4);
}

TEST_CASE("aggregation uses the sample standard deviation") {
  RunResult a, b;
  a.acc_matrix = {{0.6}};
  b.acc_matrix = {{0.8}};
  compute_metrics(a);
  compute_metrics(b);
  const Aggregate agg = aggregate_runs({a, b});
  CHECK(agg.final_acc_mean == doctest::Approx(0.7));
  CHECK(agg.final_acc_std == doctest::Approx(0.1414).epsilon(1e-3));

  const Aggregate single = aggregate_runs({a});
  CHECK(single.final_acc_mean == doctest::Approx(0.6));
  CHECK(single.final_acc_std == 0.0);
}

TEST_CASE("run_single is deterministic and reports partial progress") {
  World world;
  MethodConfig cfg = world.cfg;
  cfg.epochs = 3;
  cfg.mi_enabled = true;

  std::vector<std::size_t> rows_seen;
  TrainHooks hooks;
  hooks.after_task = [&](int, const RunResult& partial) {
    rows_seen.push_back(partial.acc_matrix.size());
  };
  const RunResult r1 =
      run_single(world.synth.stream, world.synth.vocab, world.pretrained, cfg, hooks);
  CHECK(rows_seen == std::vector<std::size_t>{1, 2});

  const RunResult r2 = run_single(world.synth.stream, world.synth.vocab, world.pretrained, cfg);
  CHECK(run_result_to_json(r1) == run_result_to_json(r2));
}

TEST_CASE("run_experiment aggregates per seed and names failing seeds") {
  World world;
  MethodConfig cfg = world.cfg;
  cfg.epochs = 2;
  auto provider = [&](std::uint64_t) { return world.pretrained; };

  const ExperimentOutcome out =
      run_experiment(world.synth.stream, world.synth.vocab, cfg, provider, {1, 2});
  CHECK(out.per_seed.size() == 2);
  CHECK(out.agg.runs == 2);
  const double want =
      (out.per_seed[0].acc_avg.back() + out.per_seed[1].acc_avg.back()) / 2.0;
  CHECK(out.agg.final_acc_mean == doctest::Approx(want));

  const ExperimentOutcome rerun =
      run_experiment(world.synth.stream, world.synth.vocab, cfg, provider, {1, 2});
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(run_result_to_json(out.per_seed[s]) == run_result_to_json(rerun.per_seed[s]));
  }

  auto bad_provider = [&](std::uint64_t seed) -> EncoderParams {
    if (seed == 3) throw ConfigError("boom");
    return world.pretrained;
  };
  CHECK_THROWS_WITH_AS(
      run_experiment(world.synth.stream, world.synth.vocab, cfg, bad_provider, {1, 3}),
      doctest::Contains("seed 3"), ExperimentError);
}
