#include "fcre/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "fcre/errors.hpp"
#include "fcre/grad_check.hpp"

namespace fcre {

namespace {

// Stream ids for forked generators; everything below is keyed off the run
// seed only, so consumers never perturb each other.
constexpr std::uint64_t kShuffleStream = 21;
constexpr std::uint64_t kSelectStream = 22;

struct BatchForward {
  std::vector<ForwardCache> caches;
  Matrix features;  // n x d
  std::vector<std::size_t> labels_rows;
};

BatchForward forward_batch(const EncoderParams& params, const MethodConfig& cfg,
                           const std::vector<Instance>& batch) {
  EncodeContext ctx{&params, cfg.template_mode, cfg.use_prompt()};
  BatchForward out;
  out.caches.resize(batch.size());
  out.features = Matrix(batch.size(), params.dims.d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.features.set_row(i, ctx.feature(batch[i], out.caches[i]));
  }
  return out;
}

// Adds lambda * L_MI over the batch to an existing step loss: g_phi rows and
// LM-head rows are built from the cached trunk features, the critic grads go
// to W_mi and everything else flows back through both branches.
void add_mi_term(const EncoderParams& params, const BatchForward& fwd, double lambda,
                 StepLoss& loss) {
  const std::size_t B = fwd.caches.size();
  Matrix gphi(B, params.dims.d_phi);
  Matrix glm(B, params.dims.vocab);
  std::vector<GPhiCache> gcaches(B);
  for (std::size_t i = 0; i < B; ++i) {
    const Matrix f = fwd.features.row_copy(i);
    gphi.set_row(i, g_phi(params, f, &gcaches[i]));
    glm.set_row(i, lm_head(params, f));
  }
  const InfoNceResult mi = mi_loss(gphi, glm, params.W_mi, params.tau_mi);
  loss.value += lambda * mi.value;
  axpy(loss.enc.W_mi, lambda, mi.d_w);
  for (std::size_t i = 0; i < B; ++i) {
    Matrix df(1, params.dims.d);
    const Matrix dg = lambda * mi.d_gphi.row_copy(i);
    g_phi_backward(params, gcaches[i], dg, loss.enc, df);
    const Matrix dl = lambda * mi.d_glm.row_copy(i);
    lm_head_backward(params, fwd.features.row_copy(i), dl, loss.enc, df);
    encode_backward(params, fwd.caches[i], df, loss.enc);
  }
}

// Normalization with exact backward: u = f/|f|; df += (du - u (u.du)) / |f|.
Matrix unit_with_backward(const Matrix& f, double* out_norm) {
  const double n = norm(f);
  if (n == 0.0) throw DegenerateInputError("feature normalization: zero-norm vector");
  *out_norm = n;
  return (1.0 / n) * f;
}

void unit_backward(const Matrix& u, double n, const Matrix& du, Matrix& df) {
  const double udot = dot(u, du);
  for (std::size_t c = 0; c < u.size(); ++c) df[c] += (du[c] - u[c] * udot) / n;
}

}  // namespace

StepLoss combine(StepLoss l0, const StepLoss& lmi, double lambda) {
  l0.value += lambda * lmi.value;
  l0.enc.add(lmi.enc, lambda);
  if (lmi.d_cls_w.size() > 0) {
    if (l0.d_cls_w.size() == 0) l0.d_cls_w = Matrix(lmi.d_cls_w.rows(), lmi.d_cls_w.cols());
    axpy(l0.d_cls_w, lambda, lmi.d_cls_w);
  }
  if (lmi.d_cls_b.size() > 0) {
    if (l0.d_cls_b.size() == 0) l0.d_cls_b = Matrix(lmi.d_cls_b.rows(), lmi.d_cls_b.cols());
    axpy(l0.d_cls_b, lambda, lmi.d_cls_b);
  }
  return l0;
}

std::size_t LinearClassifier::row_of(int rel) const {
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (rels[i] == rel) return i;
  }
  throw ProtocolError("LinearClassifier: unknown relation " + std::to_string(rel));
}

void LinearClassifier::add_relations(const std::vector<int>& new_rels, std::size_t feature_dim) {
  Matrix nw(rels.size() + new_rels.size(), feature_dim);
  Matrix nb(1, rels.size() + new_rels.size());
  for (std::size_t r = 0; r < rels.size(); ++r) {
    for (std::size_t c = 0; c < feature_dim; ++c) nw(r, c) = w(r, c);
    nb[r] = b[r];
  }
  w = std::move(nw);
  b = std::move(nb);
  rels.insert(rels.end(), new_rels.begin(), new_rels.end());
}

EncodeContext ContinualState::ctx() const {
  return EncodeContext{&params, cfg.template_mode, cfg.use_prompt()};
}

ContinualState make_state(const Vocab& vocab, const EncoderParams& pretrained,
                          const MethodConfig& cfg) {
  cfg.validate();
  if (pretrained.dims.vocab != vocab.size()) {
    throw ConfigError("make_state: vocabulary size does not match the checkpoint");
  }
  ContinualState state;
  state.vocab = vocab;
  state.cfg = cfg;
  state.params = pretrained;
  state.params.tau_mi = cfg.mi.tau;
  state.params.tau_mcl = cfg.cpl.tau;
  state.rng = RngState(cfg.seed);
  return state;
}

// ---------------------------------------------------------------------------
// Per-batch objectives.

StepLoss sckd_batch_loss(const EncoderParams& params, const LinearClassifier& cls,
                         const EncoderParams* prev_params, const LinearClassifier* prev_cls,
                         const std::vector<Instance>& batch, const MethodConfig& cfg) {
  if (batch.empty()) throw ShapeError("sckd_batch_loss: empty batch");
  StepLoss loss;
  loss.enc = EncoderGrads::zeros_like(params);
  loss.d_cls_w = Matrix(cls.w.rows(), cls.w.cols());
  loss.d_cls_b = Matrix(1, cls.b.size());

  BatchForward fwd = forward_batch(params, cfg, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  // Classification.
  std::vector<Matrix> dfs(batch.size(), Matrix(1, params.dims.d));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix h = fwd.features.row_copy(i);
    const LinearCeResult ce = ce_linear(h, cls.w, cls.b, cls.row_of(batch[i].relation));
    loss.value += inv_b * ce.value;
    axpy(loss.d_cls_w, inv_b, ce.d_w);
    axpy(loss.d_cls_b, inv_b, ce.d_b);
    axpy(dfs[i], inv_b, ce.d_h);
  }

  // Distillation against the frozen previous-task model.
  if (prev_params != nullptr && prev_cls != nullptr && prev_cls->rels.size() > 0) {
    EncodeContext old_ctx{prev_params, cfg.template_mode, cfg.use_prompt()};
    Matrix old_unit(batch.size(), params.dims.d);
    Matrix new_unit(batch.size(), params.dims.d);
    std::vector<double> new_norms(batch.size());
    std::vector<Matrix> new_units(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      old_unit.set_row(i, normalized(old_ctx.feature(batch[i])));
      new_units[i] = unit_with_backward(fwd.features.row_copy(i), &new_norms[i]);
      new_unit.set_row(i, new_units[i]);
    }
    const FdLossResult fd = loss_fd(old_unit, new_unit);
    loss.value += cfg.sckd.w_fd * fd.value;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      unit_backward(new_units[i], new_norms[i], cfg.sckd.w_fd * fd.d_new.row_copy(i), dfs[i]);
    }

    // Prediction distillation on the old-relation columns (the previous
    // classifier's rows are a prefix of the current one).
    Matrix logits_old(batch.size(), prev_cls->rels.size());
    Matrix logits_new(batch.size(), cls.rels.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Matrix h_old = old_ctx.feature(batch[i]);
      for (std::size_t r = 0; r < prev_cls->rels.size(); ++r) {
        double acc = prev_cls->b[r];
        for (std::size_t c = 0; c < prev_cls->w.cols(); ++c) acc += prev_cls->w(r, c) * h_old[c];
        logits_old(i, r) = acc;
      }
      const Matrix h = fwd.features.row_copy(i);
      for (std::size_t r = 0; r < cls.rels.size(); ++r) {
        double acc = cls.b[r];
        for (std::size_t c = 0; c < cls.w.cols(); ++c) acc += cls.w(r, c) * h[c];
        logits_new(i, r) = acc;
      }
    }
    std::vector<std::size_t> old_cols(prev_cls->rels.size());
    for (std::size_t k = 0; k < old_cols.size(); ++k) old_cols[k] = k;
    const PdLossResult pd = loss_pd(logits_old, logits_new, old_cols, cfg.sckd.distill_temp);
    loss.value += cfg.sckd.w_pd * pd.value;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Matrix h = fwd.features.row_copy(i);
      for (std::size_t r = 0; r < cls.rels.size(); ++r) {
        const double g = cfg.sckd.w_pd * pd.d_new(i, r);
        if (g == 0.0) continue;
        loss.d_cls_b[r] += g;
        for (std::size_t c = 0; c < cls.w.cols(); ++c) {
          loss.d_cls_w(r, c) += g * h[c];
          dfs[i][c] += g * cls.w(r, c);
        }
      }
    }
  }

  for (std::size_t i = 0; i < batch.size(); ++i) {
    encode_backward(params, fwd.caches[i], dfs[i], loss.enc);
  }
  if (cfg.mi_active()) add_mi_term(params, fwd, cfg.mi.lambda, loss);
  return loss;
}

StepLoss conpl_batch_loss(const EncoderParams& params, const ProtoStack& protos,
                          const ProtoStack& old_protos, const std::vector<Instance>& batch,
                          const std::vector<bool>& is_memory, const MethodConfig& cfg) {
  if (batch.empty()) throw ShapeError("conpl_batch_loss: empty batch");
  if (is_memory.size() != batch.size()) {
    throw ShapeError("conpl_batch_loss: memory-flag count mismatch");
  }
  StepLoss loss;
  loss.enc = EncoderGrads::zeros_like(params);
  BatchForward fwd = forward_batch(params, cfg, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Matrix f = fwd.features.row_copy(i);
    Matrix df(1, params.dims.d);
    const std::size_t label = protos.index_of(batch[i].relation);
    if (cfg.conpl.w_ce > 0.0) {
      const ProtoLossResult ce = ce_proto(f, protos.vecs, label);
      loss.value += inv_b * cfg.conpl.w_ce * ce.value;
      axpy(df, inv_b * cfg.conpl.w_ce, ce.d_f);
    }
    if (cfg.conpl.w_fc > 0.0) {
      const ProtoLossResult fc = loss_fc(f, protos.vecs, label, cfg.conpl.alpha);
      loss.value += inv_b * cfg.conpl.w_fc * fc.value;
      axpy(df, inv_b * cfg.conpl.w_fc, fc.d_f);
    }
    if (is_memory[i] && cfg.conpl.w_cc > 0.0) {
      Matrix fr(1, f.size());
      Matrix pr(1, f.size());
      fr.set_row(0, f);
      pr.set_row(0, old_protos.vecs.row_copy(old_protos.index_of(batch[i].relation)));
      const PairLossResult cc = loss_cc(fr, pr);
      loss.value += inv_b * cfg.conpl.w_cc * cc.value;
      axpy(df, inv_b * cfg.conpl.w_cc, cc.d_features.row_copy(0));
    }
    encode_backward(params, fwd.caches[i], df, loss.enc);
  }
  if (cfg.mi_active()) add_mi_term(params, fwd, cfg.mi.lambda, loss);
  return loss;
}

StepLoss conpl_memory_loss(const EncoderParams& params, const ProtoStack& prototype_memory,
                           const std::vector<Instance>& batch, const MethodConfig& cfg) {
  if (batch.empty()) throw ShapeError("conpl_memory_loss: empty batch");
  StepLoss loss;
  loss.enc = EncoderGrads::zeros_like(params);
  BatchForward fwd = forward_batch(params, cfg, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<int> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = batch[i].relation;
  const DcLossResult dc = loss_dc(fwd.features, labels, prototype_memory);
  loss.value += inv_b * cfg.conpl.w_dc * dc.value;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Matrix df = (inv_b * cfg.conpl.w_dc) * dc.d_features.row_copy(i);
    encode_backward(params, fwd.caches[i], df, loss.enc);
  }
  if (cfg.mi_active()) add_mi_term(params, fwd, cfg.mi.lambda, loss);
  return loss;
}

StepLoss cpl_batch_loss(const EncoderParams& params, const std::vector<Instance>& batch,
                        const std::vector<Instance>& memory_pool, const MethodConfig& cfg) {
  if (batch.empty()) throw ShapeError("cpl_batch_loss: empty batch");
  StepLoss loss;
  loss.enc = EncoderGrads::zeros_like(params);

  std::vector<Instance> pool = batch;
  pool.insert(pool.end(), memory_pool.begin(), memory_pool.end());
  BatchForward fwd = forward_batch(params, cfg, pool);

  const std::size_t n = pool.size();
  std::vector<GPhiCache> gcaches(n);
  Matrix z(n, params.dims.d_phi);
  for (std::size_t i = 0; i < n; ++i) {
    z.set_row(i, g_phi(params, fwd.features.row_copy(i), &gcaches[i]));
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Matrix dz(n, params.dims.d_phi);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      (pool[j].relation == pool[i].relation ? pos : neg).push_back(j);
    }
    if (pos.empty()) continue;  // no positive pair: contributes nothing
    Matrix positives(pos.size(), params.dims.d_phi);
    Matrix negatives(neg.size(), params.dims.d_phi);
    for (std::size_t k = 0; k < pos.size(); ++k) positives.set_row(k, z.row_copy(pos[k]));
    for (std::size_t k = 0; k < neg.size(); ++k) negatives.set_row(k, z.row_copy(neg[k]));
    const MclResult m = mcl(z.row_copy(i), positives, negatives, cfg.cpl);
    loss.value += inv_b * m.value;
    dz.add_row(i, m.d_z, inv_b);
    for (std::size_t k = 0; k < pos.size(); ++k) dz.add_row(pos[k], m.d_pos.row_copy(k), inv_b);
    for (std::size_t k = 0; k < neg.size(); ++k) dz.add_row(neg[k], m.d_neg.row_copy(k), inv_b);
  }

  for (std::size_t i = 0; i < n; ++i) {
    Matrix df(1, params.dims.d);
    g_phi_backward(params, gcaches[i], dz.row_copy(i), loss.enc, df);
    encode_backward(params, fwd.caches[i], df, loss.enc);
  }
  if (cfg.mi_active()) {
    BatchForward batch_only;
    batch_only.caches.assign(fwd.caches.begin(), fwd.caches.begin() + batch.size());
    batch_only.features = Matrix(batch.size(), params.dims.d);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch_only.features.set_row(i, fwd.features.row_copy(i));
    }
    add_mi_term(params, batch_only, cfg.mi.lambda, loss);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Task training.

namespace {

std::vector<std::vector<Instance>> make_batches(const std::vector<Instance>& data,
                                                std::size_t batch_size, RngState& rng,
                                                std::vector<std::vector<bool>>* memory_flags,
                                                const std::set<std::size_t>* memory_set) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<Instance>> batches;
  if (memory_flags) memory_flags->clear();
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    std::vector<Instance> batch;
    std::vector<bool> flags;
    for (std::size_t k = start; k < stop; ++k) {
      batch.push_back(data[order[k]]);
      if (memory_flags) flags.push_back(memory_set->count(order[k]) > 0);
    }
    batches.push_back(std::move(batch));
    if (memory_flags) memory_flags->push_back(std::move(flags));
  }
  return batches;
}

struct TaskOptimizer {
  AdamState adam;
  FreezeMask mask;
  bool has_cls = false;

  explicit TaskOptimizer(const MethodConfig& cfg, bool with_cls)
      : adam(AdamConfig{.lr = cfg.lr}), has_cls(with_cls) {
    mask.lm_head = cfg.freeze_lm_head;
  }

  void apply(ContinualState& state, StepLoss& loss) {
    apply_freeze(mask, loss.enc);
    std::vector<Matrix*> params = param_tensors(state.params);
    std::vector<const Matrix*> grads;
    for (const Matrix* g : grad_tensors(loss.enc)) grads.push_back(g);
    if (has_cls) {
      params.push_back(&state.cls.w);
      params.push_back(&state.cls.b);
      grads.push_back(&loss.d_cls_w);
      grads.push_back(&loss.d_cls_b);
    }
    adam.step(params, grads);
  }
};

std::map<int, std::vector<Instance>> group_by_relation(const std::vector<Instance>& data) {
  std::map<int, std::vector<Instance>> out;
  for (const Instance& inst : data) out[inst.relation].push_back(inst);
  return out;
}

void check_new_relations(const ContinualState& state, const Task& task) {
  for (int rel : task.relations) {
    if (std::binary_search(state.seen_rels.begin(), state.seen_rels.end(), rel)) {
      throw ProtocolError("train_task: relation " + std::to_string(rel) +
                          " already seen in an earlier task");
    }
  }
}

void note_seen(ContinualState& state, const Task& task) {
  state.seen_rels.insert(state.seen_rels.end(), task.relations.begin(), task.relations.end());
  std::sort(state.seen_rels.begin(), state.seen_rels.end());
}

std::vector<double> train_task_sckd(ContinualState& state, const Task& task) {
  const MethodConfig& cfg = state.cfg;
  state.cls.add_relations(task.relations, state.params.dims.d);
  TaskOptimizer opt(cfg, true);
  RngState shuffle_rng =
      state.rng.fork(kShuffleStream).fork(static_cast<std::uint64_t>(task.id));
  std::vector<double> epoch_losses;

  const EncoderParams* prev_p = state.prev_params ? &*state.prev_params : nullptr;
  const LinearClassifier* prev_c = state.prev_cls ? &*state.prev_cls : nullptr;

  auto run_phase = [&](const std::vector<Instance>& data, std::uint64_t phase, bool distill) {
    if (data.empty()) return;
    RngState phase_rng = shuffle_rng.fork(phase);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      RngState epoch_rng = phase_rng.fork(epoch);
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& batch : make_batches(data, cfg.batch_size, epoch_rng, nullptr, nullptr)) {
        StepLoss loss = sckd_batch_loss(state.params, state.cls, distill ? prev_p : nullptr,
                                        distill ? prev_c : nullptr, batch, cfg);
        opt.apply(state, loss);
        sum += loss.value;
        ++count;
      }
      epoch_losses.push_back(count ? sum / static_cast<double>(count) : 0.0);
    }
  };

  // (1) adapt on the raw task data
  run_phase(task.train, 1, false);

  // (2) typical-sample selection into memory
  auto grouped = group_by_relation(task.train);
  for (int rel : task.relations) {
    RngState sel_rng = state.rng.fork(kSelectStream)
                           .fork(static_cast<std::uint64_t>(task.id))
                           .fork(static_cast<std::uint64_t>(rel));
    state.smem.store(rel, select_typical(grouped[rel], state.ctx(), cfg.memory_size, sel_rng));
  }

  // (3) bidirectional entity-swap augmentation
  const std::vector<Instance> d_aug =
      entity_swap_augment(task.train, state.params, cfg.sckd.tau_sim);
  const std::vector<Instance> m_aug =
      entity_swap_augment(state.smem.all(), state.params, cfg.sckd.tau_sim);

  // (4) re-train on the augmented task data with distillation
  run_phase(d_aug, 2, true);
  // (5) memory replay on the augmented memory
  run_phase(m_aug, 3, true);

  note_seen(state, task);
  state.prev_params = state.params;
  state.prev_cls = state.cls;
  return epoch_losses;
}

std::vector<double> train_task_conpl(ContinualState& state, const Task& task) {
  const MethodConfig& cfg = state.cfg;
  TaskOptimizer opt(cfg, false);
  RngState shuffle_rng =
      state.rng.fork(kShuffleStream).fork(static_cast<std::uint64_t>(task.id));
  std::vector<double> epoch_losses;

  // (1) temporary prototypes of the new relations under the current encoder
  auto grouped = group_by_relation(task.train);
  ProtoStack old_protos = state.pmem.stack();
  PrototypeMemory working = state.pmem;
  for (int rel : task.relations) {
    working.store(rel, compute_prototype(grouped[rel], state.ctx()), task.id);
  }
  const ProtoStack all_protos = working.stack();

  // (2) experience replay over current data plus sample memory
  std::vector<Instance> replay = task.train;
  const std::vector<Instance> memory_items = state.smem.all();
  std::set<std::size_t> memory_idx;
  for (std::size_t k = 0; k < memory_items.size(); ++k) {
    memory_idx.insert(replay.size());
    replay.push_back(memory_items[k]);
  }
  RngState phase_rng = shuffle_rng.fork(1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngState epoch_rng = phase_rng.fork(epoch);
    std::vector<std::vector<bool>> flags;
    double sum = 0.0;
    std::size_t count = 0;
    const auto batches = make_batches(replay, cfg.batch_size, epoch_rng, &flags, &memory_idx);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      StepLoss loss = conpl_batch_loss(state.params, all_protos, old_protos, batches[b],
                                       flags[b], cfg);
      opt.apply(state, loss);
      sum += loss.value;
      ++count;
    }
    epoch_losses.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }

  // (4, pulled before the memory step so S-hat^k and P-hat^k exist) store one
  // typical sample per new relation and refresh prototypes from memory
  for (int rel : task.relations) {
    RngState sel_rng = state.rng.fork(kSelectStream)
                           .fork(static_cast<std::uint64_t>(task.id))
                           .fork(static_cast<std::uint64_t>(rel));
    state.smem.store(rel, select_typical(grouped[rel], state.ctx(), 1, sel_rng));
  }
  state.pmem = refresh_prototypes(state.smem, state.ctx(), task.id);

  // (3) memory-enhanced step on the updated memory
  const std::vector<Instance> memory_all = state.smem.all();
  const ProtoStack pm_stack = state.pmem.stack();
  RngState mem_rng = shuffle_rng.fork(2);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngState epoch_rng = mem_rng.fork(epoch);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch :
         make_batches(memory_all, cfg.batch_size, epoch_rng, nullptr, nullptr)) {
      StepLoss loss = conpl_memory_loss(state.params, pm_stack, batch, cfg);
      opt.apply(state, loss);
      sum += loss.value;
      ++count;
    }
    epoch_losses.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }

  // final refresh: prototype memory holds features under the trained encoder
  state.pmem = refresh_prototypes(state.smem, state.ctx(), task.id);
  note_seen(state, task);
  return epoch_losses;
}

std::vector<double> train_task_cpl(ContinualState& state, const Task& task) {
  const MethodConfig& cfg = state.cfg;
  TaskOptimizer opt(cfg, false);
  RngState shuffle_rng =
      state.rng.fork(kShuffleStream).fork(static_cast<std::uint64_t>(task.id));
  std::vector<double> epoch_losses;

  const std::vector<Instance> memory_pool = state.smem.all();
  RngState phase_rng = shuffle_rng.fork(1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngState epoch_rng = phase_rng.fork(epoch);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch :
         make_batches(task.train, cfg.batch_size, epoch_rng, nullptr, nullptr)) {
      StepLoss loss = cpl_batch_loss(state.params, batch, memory_pool, cfg);
      opt.apply(state, loss);
      sum += loss.value;
      ++count;
    }
    epoch_losses.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }

  // store typical samples, then replay over the (entity-swap augmented) memory
  auto grouped = group_by_relation(task.train);
  for (int rel : task.relations) {
    RngState sel_rng = state.rng.fork(kSelectStream)
                           .fork(static_cast<std::uint64_t>(task.id))
                           .fork(static_cast<std::uint64_t>(rel));
    state.smem.store(rel, select_typical(grouped[rel], state.ctx(), cfg.memory_size, sel_rng));
  }
  const std::vector<Instance> replay =
      entity_swap_augment(state.smem.all(), state.params, cfg.sckd.tau_sim);
  RngState mem_rng = shuffle_rng.fork(2);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    RngState epoch_rng = mem_rng.fork(epoch);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& batch : make_batches(replay, cfg.batch_size, epoch_rng, nullptr, nullptr)) {
      StepLoss loss = cpl_batch_loss(state.params, batch, {}, cfg);
      opt.apply(state, loss);
      sum += loss.value;
      ++count;
    }
    epoch_losses.push_back(count ? sum / static_cast<double>(count) : 0.0);
  }

  note_seen(state, task);
  return epoch_losses;
}

}  // namespace

std::vector<double> train_task(ContinualState& state, const Task& task) {
  check_new_relations(state, task);
  std::vector<double> losses;
  switch (state.cfg.family) {
    case Family::kSckd:
      losses = train_task_sckd(state, task);
      break;
    case Family::kConpl:
      losses = train_task_conpl(state, task);
      break;
    case Family::kCpl:
      losses = train_task_cpl(state, task);
      break;
  }
  ++state.task_count;
  return losses;
}

// ---------------------------------------------------------------------------
// Evaluation.

EvalModel build_eval_model(const ContinualState& state) {
  EvalModel model;
  model.state = &state;
  switch (state.cfg.family) {
    case Family::kSckd:
      break;  // linear head lives in the state
    case Family::kConpl:
      model.protos = state.pmem.stack(state.seen_rels);
      break;
    case Family::kCpl: {
      const PrototypeMemory fresh =
          refresh_prototypes(state.smem, state.ctx(), state.task_count);
      model.protos = fresh.stack(state.seen_rels);
      break;
    }
  }
  return model;
}

int argmax_relation(const std::vector<double>& scores, const std::vector<int>& rels) {
  if (scores.empty() || scores.size() != rels.size()) {
    throw ShapeError("argmax_relation: bad score/relation lists");
  }
  int best_rel = rels.front();
  double best = scores.front();
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > best || (scores[i] == best && rels[i] < best_rel)) {
      best = scores[i];
      best_rel = rels[i];
    }
  }
  return best_rel;
}

namespace {

std::vector<double> model_scores(const EvalModel& model, const Matrix& f,
                                 std::vector<int>* rels) {
  const ContinualState& state = *model.state;
  std::vector<double> scores;
  if (state.cfg.family == Family::kSckd) {
    *rels = state.cls.rels;
    for (std::size_t r = 0; r < state.cls.rels.size(); ++r) {
      double acc = state.cls.b[r];
      for (std::size_t c = 0; c < state.cls.w.cols(); ++c) acc += state.cls.w(r, c) * f[c];
      scores.push_back(acc);
    }
  } else {
    *rels = model.protos.rels;
    for (std::size_t r = 0; r < model.protos.count(); ++r) {
      scores.push_back(cosine(f, model.protos.vecs.row_copy(r)));
    }
  }
  return scores;
}

}  // namespace

int predict(const EvalModel& model, const Instance& inst) {
  const ContinualState& state = *model.state;
  const Matrix f = state.ctx().feature(inst);
  std::vector<int> rels;
  const std::vector<double> scores = model_scores(model, f, &rels);
  if (scores.empty()) throw ProtocolError("predict: nothing learned yet");
  return argmax_relation(scores, rels);
}

double eval_nll(const EvalModel& model, const Instance& inst) {
  const ContinualState& state = *model.state;
  const Matrix f = state.ctx().feature(inst);
  std::vector<int> rels;
  const std::vector<double> scores = model_scores(model, f, &rels);
  std::size_t label = rels.size();
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (rels[i] == inst.relation) label = i;
  }
  if (label == rels.size()) {
    throw ProtocolError("eval_nll: relation " + std::to_string(inst.relation) + " never seen");
  }
  return log_sum_exp(scores) - scores[label];
}

EvalOutcome evaluate(const ContinualState& state, const TaskStream& stream, std::size_t upto) {
  if (upto == 0 || upto > stream.tasks.size()) throw ProtocolError("evaluate: bad task index");
  if (static_cast<std::size_t>(state.task_count) < upto) {
    throw ProtocolError("evaluate: tasks not trained yet");
  }
  for (int rel : stream.seen_relations(upto)) {
    if (state.cfg.family == Family::kSckd) {
      state.cls.row_of(rel);  // throws when missing
    }
  }
  const EvalModel model = build_eval_model(state);
  if (state.cfg.family != Family::kSckd) {
    for (int rel : stream.seen_relations(upto)) model.protos.index_of(rel);
  }

  EvalOutcome out;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t i = 0; i < upto; ++i) {
    const Task& task = stream.tasks[i];
    std::size_t correct = 0;
    for (const Instance& inst : task.test) {
      if (predict(model, inst) == inst.relation) ++correct;
      loss_sum += eval_nll(model, inst);
      ++loss_count;
    }
    out.acc_per_task.push_back(task.test.empty()
                                   ? 0.0
                                   : static_cast<double>(correct) /
                                         static_cast<double>(task.test.size()));
  }
  out.pooled_test_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
  return out;
}

double set_accuracy(const ContinualState& state, const std::vector<Instance>& instances) {
  if (instances.empty()) return 0.0;
  const EvalModel model = build_eval_model(state);
  std::size_t correct = 0;
  for (const Instance& inst : instances) {
    if (predict(model, inst) == inst.relation) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

double mean_eval_loss(const ContinualState& state, const std::vector<Instance>& instances) {
  if (instances.empty()) return 0.0;
  const EvalModel model = build_eval_model(state);
  double sum = 0.0;
  for (const Instance& inst : instances) sum += eval_nll(model, inst);
  return sum / static_cast<double>(instances.size());
}

// ---------------------------------------------------------------------------
// Run drivers.

RunResult run_single(const TaskStream& stream, const Vocab& vocab,
                     const EncoderParams& pretrained, const MethodConfig& cfg,
                     const TrainHooks& hooks, ContinualState* final_state) {
  ContinualState state = make_state(vocab, pretrained, cfg);
  RunResult run;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    const Task& task = stream.tasks[t];
    run.epoch_loss.push_back(train_task(state, task));
    const EvalOutcome eo = evaluate(state, stream, t + 1);
    run.acc_matrix.push_back(eo.acc_per_task);
    run.test_loss.push_back(eo.pooled_test_loss);
    run.train_loss.push_back(mean_eval_loss(state, task.train));
    compute_metrics(run);
    if (hooks.after_task) hooks.after_task(task.id, run);
  }
  if (final_state) *final_state = std::move(state);
  return run;
}

ExperimentOutcome run_experiment(
    const TaskStream& stream, const Vocab& vocab, const MethodConfig& cfg,
    const std::function<EncoderParams(std::uint64_t seed)>& pretrained_for_seed,
    const std::vector<std::uint64_t>& seeds, const TrainHooks& hooks) {
  if (seeds.empty()) throw ConfigError("run_experiment: empty seed list");
  ExperimentOutcome out;
  for (std::uint64_t seed : seeds) {
    try {
      MethodConfig run_cfg = cfg;
      run_cfg.seed = seed;
      const EncoderParams pretrained = pretrained_for_seed(seed);
      out.per_seed.push_back(run_single(stream, vocab, pretrained, run_cfg, hooks));
    } catch (const Error& e) {
      throw ExperimentError("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  out.agg = aggregate_runs(out.per_seed);
  return out;
}

}  // namespace fcre
