#include "fcre/synth.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fcre/errors.hpp"
#include "fcre/rng.hpp"

namespace fcre {

namespace {

constexpr std::uint64_t kTriggerStream = 11;
constexpr std::uint64_t kAssignStream = 12;
constexpr std::uint64_t kInstanceStream = 13;
constexpr std::uint64_t kPretrainStream = 14;

struct Generator {
  SynthConfig cfg;
  Vocab vocab;
  std::vector<int> content;
  std::vector<std::pair<int, int>> triggers;  // per relation

  explicit Generator(const SynthConfig& c, std::uint64_t seed) : cfg(c) {
    if (cfg.vocab_size < 4) throw ConfigError("synth: vocab_size must be at least 4");
    if (cfg.ways == 0 || cfg.shots == 0 || cfg.tasks == 0) {
      throw ConfigError("synth: ways, shots and tasks must be positive");
    }
    if (cfg.noise < 0.0 || cfg.noise >= 1.0) {
      throw ConfigError("synth: noise must lie in [0, 1)");
    }
    const std::size_t first_rels =
        cfg.first_task_relations == 0 ? cfg.ways : cfg.first_task_relations;
    const std::size_t needed = first_rels + cfg.ways * (cfg.tasks - 1);
    if (cfg.relations < needed) {
      throw ConfigError("synth: relations (" + std::to_string(cfg.relations) +
                        ") < required by task layout (" + std::to_string(needed) + ")");
    }
    const std::size_t max_pairs = cfg.vocab_size * (cfg.vocab_size - 1) / 2;
    if (cfg.relations > max_pairs) {
      throw ConfigError("synth: not enough vocabulary for " + std::to_string(cfg.relations) +
                        " distinct trigger pairs");
    }

    for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
      content.push_back(vocab.add("w" + std::to_string(i)));
    }
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(max_pairs);
    for (std::size_t i = 0; i < content.size(); ++i) {
      for (std::size_t j = i + 1; j < content.size(); ++j) {
        pairs.emplace_back(content[i], content[j]);
      }
    }
    RngState trig_rng = RngState(seed).fork(kTriggerStream);
    trig_rng.shuffle(pairs);
    triggers.assign(pairs.begin(), pairs.begin() + cfg.relations);
  }

  int random_content(RngState& rng) const { return content[rng.below(content.size())]; }

  Instance make_instance(int relation, RngState& rng) const {
    Instance inst;
    inst.relation = relation;
    const std::size_t prefix = rng.below(3);
    const std::size_t head_len = 1 + rng.below(2);
    const std::size_t tail_len = 1 + rng.below(2);
    const std::size_t suffix = rng.below(3);
    for (std::size_t i = 0; i < prefix; ++i) inst.tokens.push_back(random_content(rng));
    inst.head.start = inst.tokens.size();
    for (std::size_t i = 0; i < head_len; ++i) inst.tokens.push_back(random_content(rng));
    inst.head.end = inst.tokens.size();
    const bool noisy = rng.uniform() < cfg.noise;
    if (noisy) {
      inst.tokens.push_back(random_content(rng));
      inst.tokens.push_back(random_content(rng));
    } else {
      inst.tokens.push_back(triggers[static_cast<std::size_t>(relation)].first);
      inst.tokens.push_back(triggers[static_cast<std::size_t>(relation)].second);
    }
    inst.tail.start = inst.tokens.size();
    for (std::size_t i = 0; i < tail_len; ++i) inst.tokens.push_back(random_content(rng));
    inst.tail.end = inst.tokens.size();
    for (std::size_t i = 0; i < suffix; ++i) inst.tokens.push_back(random_content(rng));
    return inst;
  }

  // Value-distinct instances so train and test never share content.
  std::vector<Instance> make_distinct(int relation, std::size_t count, RngState& rng) const {
    std::vector<Instance> out;
    std::set<std::vector<int>> seen;
    std::size_t attempts = 0;
    while (out.size() < count) {
      if (++attempts > count * 100 + 1000) {
        throw ConfigError("synth: cannot draw enough distinct instances for relation " +
                          std::to_string(relation));
      }
      Instance inst = make_instance(relation, rng);
      if (seen.insert(inst.tokens).second) out.push_back(std::move(inst));
    }
    return out;
  }
};

}  // namespace

std::vector<std::string> synth_relation_names(std::size_t relations) {
  std::vector<std::string> names;
  names.reserve(relations);
  for (std::size_t r = 0; r < relations; ++r) names.push_back("R" + std::to_string(r));
  return names;
}

SynthOutput synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  Generator gen(cfg, seed);
  const std::size_t first_rels =
      cfg.first_task_relations == 0 ? cfg.ways : cfg.first_task_relations;
  const std::size_t first_shots =
      cfg.first_task_train_per_relation == 0 ? cfg.shots : cfg.first_task_train_per_relation;

  std::vector<int> rel_ids(cfg.relations);
  for (std::size_t r = 0; r < cfg.relations; ++r) rel_ids[r] = static_cast<int>(r);
  RngState assign_rng = RngState(seed).fork(kAssignStream);
  assign_rng.shuffle(rel_ids);

  SynthOutput out;
  out.vocab = gen.vocab;
  out.stream.relation_names = synth_relation_names(cfg.relations);

  std::size_t cursor = 0;
  for (std::size_t t = 0; t < cfg.tasks; ++t) {
    const std::size_t n_rels = t == 0 ? first_rels : cfg.ways;
    const std::size_t n_train = t == 0 ? first_shots : cfg.shots;
    Task task;
    task.id = static_cast<int>(t + 1);
    task.relations.assign(rel_ids.begin() + cursor, rel_ids.begin() + cursor + n_rels);
    cursor += n_rels;
    std::sort(task.relations.begin(), task.relations.end());
    for (int rel : task.relations) {
      RngState rel_rng = RngState(seed).fork(kInstanceStream).fork(static_cast<std::uint64_t>(rel));
      std::vector<Instance> drawn =
          gen.make_distinct(rel, n_train + cfg.test_per_relation, rel_rng);
      for (std::size_t i = 0; i < drawn.size(); ++i) {
        (i < n_train ? task.train : task.test).push_back(std::move(drawn[i]));
      }
    }
    out.stream.tasks.push_back(std::move(task));
  }
  return out;
}

std::vector<Instance> synth_pretrain_corpus(const SynthConfig& cfg, std::uint64_t seed,
                                            std::size_t per_relation) {
  Generator gen(cfg, seed);
  std::vector<Instance> corpus;
  for (std::size_t r = 0; r < cfg.relations; ++r) {
    RngState rng = RngState(seed).fork(kPretrainStream).fork(r);
    for (std::size_t i = 0; i < per_relation; ++i) {
      corpus.push_back(gen.make_instance(static_cast<int>(r), rng));
    }
  }
  return corpus;
}

}  // namespace fcre
