#include "fcre/pretrain.hpp"

#include <cmath>

#include "fcre/errors.hpp"
#include "fcre/losses.hpp"
#include "fcre/vocab.hpp"

namespace fcre {

PretrainLog pretrain_mlm(EncoderParams& params, const std::vector<Instance>& corpus,
                         const PretrainConfig& cfg, RngState& rng) {
  if (corpus.empty()) throw ConfigError("pretrain_mlm: empty corpus");
  if (cfg.mask_prob <= 0.0 || cfg.mask_prob > 1.0) {
    throw ConfigError("pretrain_mlm: mask_prob must lie in (0, 1]");
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0) {
    throw ConfigError("pretrain_mlm: epochs and batch_size must be positive");
  }

  AdamState adam(AdamConfig{.lr = cfg.lr});
  RngState mask_rng = rng.fork(1);
  RngState order_rng = rng.fork(2);

  PretrainLog log;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t loss_count = 0;
    std::size_t hits = 0;
    std::size_t mask_count = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      EncoderGrads grads = EncoderGrads::zeros_like(params);
      std::size_t contributing = 0;

      for (std::size_t b = start; b < stop; ++b) {
        const Instance& inst = corpus[order[b]];
        std::vector<std::size_t> positions;
        for (std::size_t pos = 0; pos < inst.tokens.size(); ++pos) {
          if (inst.tokens[pos] >= Vocab::kReservedCount && mask_rng.uniform() < cfg.mask_prob) {
            positions.push_back(pos);
          }
        }
        if (positions.empty()) continue;

        // One forward per masked position, pooled at that mask.
        double inst_loss = 0.0;
        const double inv_pos = 1.0 / static_cast<double>(positions.size());
        for (std::size_t pos : positions) {
          std::vector<int> masked = inst.tokens;
          masked[pos] = Vocab::kMask;
          ForwardCache cache;
          const Matrix f = encode(params, masked, inst.head, inst.tail, pos, {}, false, &cache);
          const Matrix logits = lm_head(params, f);
          const double lse = log_sum_exp(logits.flat());
          const auto target = static_cast<std::size_t>(inst.tokens[pos]);
          inst_loss += (lse - logits[target]) * inv_pos;

          Matrix dlogits(1, logits.size());
          for (std::size_t v = 0; v < logits.size(); ++v) {
            dlogits[v] = (std::exp(logits[v] - lse) - (v == target ? 1.0 : 0.0)) * inv_pos;
          }
          std::size_t best = 0;
          for (std::size_t v = 1; v < logits.size(); ++v) {
            if (logits[v] > logits[best]) best = v;
          }
          hits += best == target ? 1 : 0;
          ++mask_count;

          Matrix df(1, params.dims.d);
          lm_head_backward(params, f, dlogits, grads, df);
          encode_backward(params, cache, df, grads);
        }
        epoch_loss += inst_loss;
        ++loss_count;
        ++contributing;
      }

      if (contributing == 0) continue;
      grads.scale(1.0 / static_cast<double>(contributing));
      auto tensors = param_tensors(params);
      auto gtensors = grad_tensors(grads);
      std::vector<const Matrix*> gv(gtensors.begin(), gtensors.end());
      adam.step(tensors, gv);
    }

    log.loss.push_back(loss_count == 0 ? 0.0 : epoch_loss / static_cast<double>(loss_count));
    log.accuracy.push_back(mask_count == 0 ? 0.0
                                           : static_cast<double>(hits) /
                                                 static_cast<double>(mask_count));
  }
  return log;
}

}  // namespace fcre
