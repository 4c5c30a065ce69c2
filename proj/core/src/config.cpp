#include "fcre/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("config: unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

void apply_override(json& root, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override \"" + spec + "\" is not of the form key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }
  json* node = &root;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override \"" + spec + "\": empty key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (node->is_array()) {
      const std::size_t idx = std::stoul(parts[i]);
      if (idx >= node->size()) throw ConfigError("override: index " + parts[i] + " out of range");
      node = &(*node)[idx];
    } else {
      node = &(*node)[parts[i]];
    }
  }
  if (node->is_array()) {
    const std::size_t idx = std::stoul(parts.back());
    if (idx >= node->size()) throw ConfigError("override: index " + parts.back() + " out of range");
    (*node)[idx] = value;
  } else {
    (*node)[parts.back()] = value;
  }
}

SynthConfig parse_synth(const json& j) {
  check_keys(j, {"kind", "seed", "jsonl_dir", "pretrain_per_relation", "vocab_size", "relations",
                 "tasks", "ways", "shots", "test_per_relation", "first_task_relations",
                 "first_task_train_per_relation", "noise"},
             "data");
  SynthConfig s;
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.relations = j.value("relations", s.relations);
  s.tasks = j.value("tasks", s.tasks);
  s.ways = j.value("ways", s.ways);
  s.shots = j.value("shots", s.shots);
  s.test_per_relation = j.value("test_per_relation", s.test_per_relation);
  s.first_task_relations = j.value("first_task_relations", s.first_task_relations);
  s.first_task_train_per_relation =
      j.value("first_task_train_per_relation", s.first_task_train_per_relation);
  s.noise = j.value("noise", s.noise);
  return s;
}

MethodConfig parse_method(const json& j) {
  check_keys(j, {"family", "mi", "freeze_lm_head", "template", "epochs", "batch_size", "lr",
                 "mi_tau", "mi_lambda", "conpl", "cpl", "sckd", "memory_size"},
             "methods[]");
  MethodConfig m;
  m.family = family_from_name(j.at("family").get<std::string>());
  m.mi_enabled = j.value("mi", false);
  m.freeze_lm_head = j.value("freeze_lm_head", false);
  const std::string tmpl = j.value("template", std::string("mask"));
  if (tmpl == "mask") {
    m.template_mode = TemplateMode::kMask;
  } else if (tmpl == "autoregressive" || tmpl == "ar") {
    m.template_mode = TemplateMode::kAutoregressive;
  } else {
    throw ConfigError("config: template must be \"mask\" or \"autoregressive\"");
  }
  m.epochs = j.value("epochs", m.epochs);
  m.batch_size = j.value("batch_size", m.batch_size);
  m.lr = j.value("lr", m.lr);
  m.mi.tau = j.value("mi_tau", m.mi.tau);
  m.mi.lambda = j.value("mi_lambda", m.mi.lambda);
  if (j.contains("conpl")) {
    const json& c = j["conpl"];
    check_keys(c, {"alpha", "w_ce", "w_cc", "w_fc", "w_dc"}, "methods[].conpl");
    m.conpl.alpha = c.value("alpha", m.conpl.alpha);
    m.conpl.w_ce = c.value("w_ce", m.conpl.w_ce);
    m.conpl.w_cc = c.value("w_cc", m.conpl.w_cc);
    m.conpl.w_fc = c.value("w_fc", m.conpl.w_fc);
    m.conpl.w_dc = c.value("w_dc", m.conpl.w_dc);
  }
  if (j.contains("cpl")) {
    const json& c = j["cpl"];
    check_keys(c, {"margin", "k", "tau"}, "methods[].cpl");
    m.cpl.margin = c.value("margin", m.cpl.margin);
    m.cpl.k = c.value("k", m.cpl.k);
    m.cpl.tau = c.value("tau", m.cpl.tau);
  }
  if (j.contains("sckd")) {
    const json& c = j["sckd"];
    check_keys(c, {"w_fd", "w_pd", "tau_sim", "distill_temp"}, "methods[].sckd");
    m.sckd.w_fd = c.value("w_fd", m.sckd.w_fd);
    m.sckd.w_pd = c.value("w_pd", m.sckd.w_pd);
    m.sckd.tau_sim = c.value("tau_sim", m.sckd.tau_sim);
    m.sckd.distill_temp = c.value("distill_temp", m.sckd.distill_temp);
  }
  m.memory_size = j.value("memory_size", m.memory_size);
  m.validate();
  return m;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text,
                                         const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: invalid JSON (") + e.what() + ")");
  }
  for (const std::string& o : overrides) apply_override(j, o);

  check_keys(j, {"data", "model", "pretrain", "methods", "seeds", "out_dir"}, "top level");
  ExperimentConfig cfg;
  if (j.contains("data")) {
    const json& d = j["data"];
    cfg.data_kind = d.value("kind", cfg.data_kind);
    if (cfg.data_kind != "synthetic" && cfg.data_kind != "jsonl") {
      throw ConfigError("config: data.kind must be \"synthetic\" or \"jsonl\"");
    }
    cfg.synth = parse_synth(d);
    cfg.data_seed = d.value("seed", cfg.data_seed);
    cfg.pretrain_corpus_per_relation =
        d.value("pretrain_per_relation", cfg.pretrain_corpus_per_relation);
    cfg.jsonl_dir = d.value("jsonl_dir", cfg.jsonl_dir);
    if (cfg.data_kind == "jsonl" && cfg.jsonl_dir.empty()) {
      throw ConfigError("config: data.kind=jsonl requires data.jsonl_dir");
    }
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    check_keys(m, {"d_e", "d_h", "d", "d_phi", "n_prompt", "vocab_cap"}, "model");
    cfg.dims.d_e = m.value("d_e", cfg.dims.d_e);
    cfg.dims.d_h = m.value("d_h", cfg.dims.d_h);
    cfg.dims.d = m.value("d", cfg.dims.d);
    cfg.dims.d_phi = m.value("d_phi", cfg.dims.d_phi);
    cfg.dims.n_prompt = m.value("n_prompt", cfg.dims.n_prompt);
    cfg.vocab_cap = m.value("vocab_cap", std::size_t{0});
  }
  if (j.contains("pretrain")) {
    const json& p = j["pretrain"];
    check_keys(p, {"mask_prob", "epochs", "batch_size", "lr"}, "pretrain");
    cfg.pretrain.mask_prob = p.value("mask_prob", cfg.pretrain.mask_prob);
    cfg.pretrain.epochs = p.value("epochs", cfg.pretrain.epochs);
    cfg.pretrain.batch_size = p.value("batch_size", cfg.pretrain.batch_size);
    cfg.pretrain.lr = p.value("lr", cfg.pretrain.lr);
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const json& m : j["methods"]) cfg.methods.push_back(parse_method(m));
  }
  if (j.contains("seeds")) {
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  }
  if (cfg.seeds.empty()) throw ConfigError("config: seeds must be nonempty");
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), overrides);
}

}  // namespace fcre
