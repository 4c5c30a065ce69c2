#include "fcre/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fcre/errors.hpp"
#include "fcre/jsonl.hpp"
#include "fcre/pretrain.hpp"
#include "fcre/trainer.hpp"

namespace fcre {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string two_digit(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d", n);
  return buf;
}

ordered_json method_to_json(const MethodConfig& m) {
  ordered_json j;
  j["family"] = family_name(m.family);
  j["mi"] = m.mi_enabled;
  j["freeze_lm_head"] = m.freeze_lm_head;
  j["template"] = m.template_mode == TemplateMode::kMask ? "mask" : "autoregressive";
  j["epochs"] = m.epochs;
  j["batch_size"] = m.batch_size;
  j["lr"] = m.lr;
  j["mi_tau"] = m.mi.tau;
  j["mi_lambda"] = m.mi.lambda;
  j["conpl"] = {{"alpha", m.conpl.alpha}, {"w_ce", m.conpl.w_ce}, {"w_cc", m.conpl.w_cc},
                {"w_fc", m.conpl.w_fc},   {"w_dc", m.conpl.w_dc}};
  j["cpl"] = {{"margin", m.cpl.margin}, {"k", m.cpl.k}, {"tau", m.cpl.tau}};
  j["sckd"] = {{"w_fd", m.sckd.w_fd}, {"w_pd", m.sckd.w_pd}, {"tau_sim", m.sckd.tau_sim},
               {"distill_temp", m.sckd.distill_temp}};
  j["memory_size"] = m.memory_size;
  return j;
}

ordered_json experiment_config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["data"] = {{"kind", cfg.data_kind},
               {"seed", cfg.data_seed},
               {"vocab_size", cfg.synth.vocab_size},
               {"relations", cfg.synth.relations},
               {"tasks", cfg.synth.tasks},
               {"ways", cfg.synth.ways},
               {"shots", cfg.synth.shots},
               {"test_per_relation", cfg.synth.test_per_relation},
               {"first_task_relations", cfg.synth.first_task_relations},
               {"first_task_train_per_relation", cfg.synth.first_task_train_per_relation},
               {"noise", cfg.synth.noise},
               {"pretrain_per_relation", cfg.pretrain_corpus_per_relation}};
  if (!cfg.jsonl_dir.empty()) j["data"]["jsonl_dir"] = cfg.jsonl_dir;
  j["model"] = {{"d_e", cfg.dims.d_e},
                {"d_h", cfg.dims.d_h},
                {"d", cfg.dims.d},
                {"d_phi", cfg.dims.d_phi},
                {"n_prompt", cfg.dims.n_prompt},
                {"vocab_cap", cfg.vocab_cap}};
  j["pretrain"] = {{"mask_prob", cfg.pretrain.mask_prob},
                   {"epochs", cfg.pretrain.epochs},
                   {"batch_size", cfg.pretrain.batch_size},
                   {"lr", cfg.pretrain.lr}};
  j["methods"] = ordered_json::array();
  for (const MethodConfig& m : cfg.methods) j["methods"].push_back(method_to_json(m));
  j["seeds"] = cfg.seeds;
  j["out_dir"] = cfg.out_dir;
  return j;
}

// Unique file-safe names for the method grid (duplicates get _2, _3, ...).
std::vector<std::string> method_names(const std::vector<MethodConfig>& methods) {
  std::vector<std::string> names;
  std::map<std::string, int> used;
  for (const MethodConfig& m : methods) {
    std::string base = m.name();
    const int n = ++used[base];
    names.push_back(n == 1 ? base : base + "_" + std::to_string(n));
  }
  return names;
}

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++n;
  }
  return n;
}

}  // namespace

std::string checkpoint_path(const std::string& out_dir, std::uint64_t seed) {
  return out_dir + "/checkpoints/ckpt_seed" + std::to_string(seed) + ".json";
}

std::string runs_dir(const std::string& out_dir) { return out_dir + "/runs"; }

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  if (cfg.data_kind == "synthetic") {
    SynthOutput synth = synth_generate(cfg.synth, cfg.data_seed);
    data.vocab = std::move(synth.vocab);
    data.stream = std::move(synth.stream);
    data.pretrain_corpus =
        synth_pretrain_corpus(cfg.synth, cfg.data_seed, cfg.pretrain_corpus_per_relation);
    return data;
  }

  // JSONL ingestion driven by the gen-data manifest.
  const std::string manifest_path = cfg.jsonl_dir + "/manifest.json";
  if (!fs::exists(manifest_path)) {
    throw ConfigError("load_experiment_data: missing manifest " + manifest_path);
  }
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest: invalid JSON (" + std::string(e.what()) + ")");
  }
  Vocab vocab;
  RelationRegistry rels;
  for (const auto& tj : manifest.at("tasks")) {
    Task task;
    task.id = tj.at("id").get<int>();
    for (const std::string file : {tj.at("train_file").get<std::string>(),
                                   tj.at("test_file").get<std::string>()}) {
      LoadedCorpus corpus = load_jsonl(cfg.jsonl_dir + "/" + file, VocabPolicy::kExtend,
                                       std::move(vocab), std::move(rels), cfg.vocab_cap);
      vocab = std::move(corpus.vocab);
      rels = std::move(corpus.relations);
      auto& dst = file.find("train") != std::string::npos ? task.train : task.test;
      dst = std::move(corpus.instances);
    }
    std::set<int> task_rels;
    for (const Instance& inst : task.train) task_rels.insert(inst.relation);
    task.relations.assign(task_rels.begin(), task_rels.end());
    data.stream.tasks.push_back(std::move(task));
  }
  if (manifest.contains("pretrain_file")) {
    LoadedCorpus corpus =
        load_jsonl(cfg.jsonl_dir + "/" + manifest.at("pretrain_file").get<std::string>(),
                   VocabPolicy::kExtend, std::move(vocab), std::move(rels), cfg.vocab_cap);
    vocab = std::move(corpus.vocab);
    rels = std::move(corpus.relations);
    data.pretrain_corpus = std::move(corpus.instances);
  } else {
    for (const Task& t : data.stream.tasks) {
      data.pretrain_corpus.insert(data.pretrain_corpus.end(), t.train.begin(), t.train.end());
    }
  }
  data.vocab = std::move(vocab);
  data.stream.relation_names = rels.names;
  return data;
}

void cmd_gen_data(const ExperimentConfig& cfg, const std::string& out_path) {
  if (cfg.data_kind != "synthetic") {
    throw ConfigError("gen-data: config must use data.kind=synthetic");
  }
  const SynthOutput synth = synth_generate(cfg.synth, cfg.data_seed);
  const std::vector<Instance> pretrain =
      synth_pretrain_corpus(cfg.synth, cfg.data_seed, cfg.pretrain_corpus_per_relation);
  fs::create_directories(out_path);

  RelationRegistry rels;
  for (const std::string& name : synth.stream.relation_names) rels.add_or_get(name);

  ordered_json manifest;
  manifest["seed"] = cfg.data_seed;
  manifest["tasks"] = ordered_json::array();
  for (const Task& task : synth.stream.tasks) {
    const std::string train_file = "task" + two_digit(task.id) + "_train.jsonl";
    const std::string test_file = "task" + two_digit(task.id) + "_test.jsonl";
    save_jsonl(out_path + "/" + train_file, task.train, synth.vocab, rels);
    save_jsonl(out_path + "/" + test_file, task.test, synth.vocab, rels);
    ordered_json tj;
    tj["id"] = task.id;
    tj["relations"] = ordered_json::array();
    for (int r : task.relations) tj["relations"].push_back(synth.stream.relation_names[r]);
    tj["train_file"] = train_file;
    tj["test_file"] = test_file;
    tj["train_count"] = task.train.size();
    tj["test_count"] = task.test.size();
    manifest["tasks"].push_back(std::move(tj));
  }
  save_jsonl(out_path + "/pretrain.jsonl", pretrain, synth.vocab, rels);
  manifest["pretrain_file"] = "pretrain.jsonl";
  manifest["pretrain_count"] = pretrain.size();
  write_text(out_path + "/manifest.json", manifest.dump(1) + "\n");
}

void cmd_pretrain(const ExperimentConfig& cfg) {
  const ExperimentData data = load_experiment_data(cfg);
  fs::create_directories(cfg.out_dir + "/checkpoints");
  EncoderDims dims = cfg.dims;
  dims.vocab = data.vocab.size();
  for (std::uint64_t seed : cfg.seeds) {
    RngState rng(seed);
    RngState init_rng = rng.fork(1);
    EncoderParams params = EncoderParams::init(dims, init_rng);
    RngState train_rng = rng.fork(2);
    const PretrainLog log = pretrain_mlm(params, data.pretrain_corpus, cfg.pretrain, train_rng);
    save_checkpoint(checkpoint_path(cfg.out_dir, seed), params, data.vocab.hash());

    std::ostringstream csv;
    csv << "epoch,loss,masked_accuracy\n";
    for (std::size_t e = 0; e < log.loss.size(); ++e) {
      csv << (e + 1) << "," << fmt_double(log.loss[e]) << "," << fmt_double(log.accuracy[e])
          << "\n";
    }
    write_text(cfg.out_dir + "/checkpoints/pretrain_seed" + std::to_string(seed) + ".csv",
               csv.str());
  }
}

void cmd_run(const ExperimentConfig& cfg) {
  if (cfg.methods.empty()) throw ConfigError("run: config has no methods");
  const ExperimentData data = load_experiment_data(cfg);
  const std::string rdir = runs_dir(cfg.out_dir);
  fs::create_directories(rdir);
  const std::string failed_marker = rdir + "/FAILED";
  if (fs::exists(failed_marker)) fs::remove(failed_marker);
  write_text(rdir + "/config.json", experiment_config_to_json(cfg).dump(1) + "\n");

  const std::vector<std::string> names = method_names(cfg.methods);
  try {
    ordered_json aggregate;
    aggregate["seeds"] = cfg.seeds;
    aggregate["methods"] = ordered_json::array();
    std::ostringstream csv;
    csv << "seed,method,task,acc_avg\n";

    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      std::vector<RunResult> per_seed;
      for (std::uint64_t seed : cfg.seeds) {
        const std::string ckpt_file = checkpoint_path(cfg.out_dir, seed);
        if (!fs::exists(ckpt_file)) {
          throw ConfigError("run: missing checkpoint " + ckpt_file + " (run pretrain first)");
        }
        const EncoderParams pretrained = load_checkpoint_for(ckpt_file, data.vocab);
        MethodConfig mcfg = cfg.methods[mi];
        mcfg.seed = seed;
        const std::string run_base = rdir + "/" + names[mi] + "_seed" + std::to_string(seed);
        TrainHooks hooks;
        hooks.after_task = [&run_base](int, const RunResult& partial) {
          write_text(run_base + ".json", run_result_to_json(partial) + "\n");
        };
        ContinualState final_state;
        const RunResult run =
            run_single(data.stream, data.vocab, pretrained, mcfg, hooks, &final_state);
        write_text(run_base + ".json", run_result_to_json(run) + "\n");
        save_checkpoint(run_base + "_model.json", final_state.params, data.vocab.hash());

        ordered_json mem;
        for (int rel : final_state.smem.relations()) {
          ordered_json items = ordered_json::array();
          for (const Instance& inst : final_state.smem.get(rel)) {
            items.push_back({{"tokens", inst.tokens},
                             {"head", {inst.head.start, inst.head.end}},
                             {"tail", {inst.tail.start, inst.tail.end}}});
          }
          mem[std::to_string(rel)] = std::move(items);
        }
        write_text(run_base + "_memory.json", mem.dump(1) + "\n");

        for (std::size_t t = 0; t < run.acc_avg.size(); ++t) {
          csv << seed << "," << names[mi] << "," << (t + 1) << "," << fmt_double(run.acc_avg[t])
              << "\n";
        }
        per_seed.push_back(run);
      }
      const Aggregate agg = aggregate_runs(per_seed);
      ordered_json aj;
      aj["name"] = names[mi];
      aj["runs"] = agg.runs;
      aj["acc_avg_mean"] = agg.acc_avg_mean;
      aj["acc_avg_std"] = agg.acc_avg_std;
      aj["delta_mean"] = agg.delta_mean;
      aj["delta_std"] = agg.delta_std;
      aj["gap_mean"] = agg.gap_mean;
      aj["gap_std"] = agg.gap_std;
      aj["tail_gap_mean"] = agg.tail_gap_mean;
      aj["tail_gap_std"] = agg.tail_gap_std;
      aj["final_acc_mean"] = agg.final_acc_mean;
      aj["final_acc_std"] = agg.final_acc_std;
      aggregate["methods"].push_back(std::move(aj));
    }
    write_text(rdir + "/aggregate.json", aggregate.dump(1) + "\n");
    write_text(rdir + "/results.csv", csv.str());
  } catch (const std::exception& e) {
    write_text(failed_marker, std::string(e.what()) + "\n");
    throw;
  }
}

void cmd_report(const std::string& results_dir, std::string* text_out) {
  // Rebuild aggregates from the per-run files themselves.
  std::vector<std::pair<std::string, std::vector<RunResult>>> groups;
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(results_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.find("_seed") == std::string::npos || name.find(".json") == std::string::npos) {
      continue;
    }
    if (name.find("_model.json") != std::string::npos ||
        name.find("_memory.json") != std::string::npos) {
      continue;
    }
    files.push_back(name);
  }
  std::sort(files.begin(), files.end());
  for (const std::string& name : files) {
    const std::string method = name.substr(0, name.find("_seed"));
    const RunResult run = run_result_from_json(read_text(results_dir + "/" + name));
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first == method; });
    if (it == groups.end()) {
      groups.push_back({method, {run}});
    } else {
      it->second.push_back(run);
    }
  }
  if (groups.empty()) throw ConfigError("report: no run files in " + results_dir);

  std::size_t tasks = 0;
  for (const auto& [_, runs] : groups) tasks = std::max(tasks, runs.front().acc_avg.size());

  std::ostringstream text, csv, gaps_csv;
  text << "Accuracy (%) after each task\n";
  text << "method";
  csv << "method";
  for (std::size_t t = 1; t <= tasks; ++t) {
    text << "\tT" << t;
    csv << ",T" << t;
  }
  text << "\tdelta\n";
  csv << ",delta\n";
  gaps_csv << "method";
  for (std::size_t t = 1; t <= tasks; ++t) gaps_csv << ",T" << t;
  gaps_csv << "\n";

  std::ostringstream gap_text;
  gap_text << "\nGeneralization gap (test loss - train loss) after each task\n";
  gap_text << "method";
  for (std::size_t t = 1; t <= tasks; ++t) gap_text << "\tT" << t;
  gap_text << "\n";

  for (const auto& [method, runs] : groups) {
    const Aggregate agg = aggregate_runs(runs);
    text << method;
    csv << method;
    for (double acc : agg.acc_avg_mean) {
      text << "\t" << fmt_pct(acc);
      csv << "," << fmt_pct(acc);
    }
    text << "\t" << fmt_pct(agg.delta_mean) << "\n";
    csv << "," << fmt_pct(agg.delta_mean) << "\n";
    gap_text << method;
    gaps_csv << method;
    for (double g : agg.gap_mean) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", g);
      gap_text << "\t" << buf;
      gaps_csv << "," << buf;
    }
    gap_text << "\n";
    gaps_csv << "\n";
  }
  const std::string report = text.str() + gap_text.str();
  write_text(results_dir + "/report.txt", report);
  write_text(results_dir + "/report.csv", csv.str());
  write_text(results_dir + "/report_gaps.csv", gaps_csv.str());
  if (text_out) *text_out = report;
}

void cmd_dump_embeddings(const std::string& results_dir, int task_id, const std::string& branch,
                         const std::string& method, std::uint64_t seed,
                         const std::string& out_csv) {
  if (branch != "classifier" && branch != "lm_head") {
    throw ConfigError("dump-embeddings: branch must be classifier or lm_head");
  }
  const std::string config_path = results_dir + "/config.json";
  if (!fs::exists(config_path)) {
    throw ConfigError("dump-embeddings: missing " + config_path);
  }
  const ExperimentConfig cfg = parse_experiment_config(read_text(config_path));
  const ExperimentData data = load_experiment_data(cfg);
  if (task_id < 1 || static_cast<std::size_t>(task_id) > data.stream.tasks.size()) {
    throw ConfigError("dump-embeddings: unknown task " + std::to_string(task_id));
  }
  const std::vector<std::string> names = method_names(cfg.methods);
  std::size_t mi = names.size();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == method) mi = i;
  }
  if (mi == names.size()) {
    throw ConfigError("dump-embeddings: method \"" + method + "\" not in config");
  }
  const std::string model_path =
      results_dir + "/" + method + "_seed" + std::to_string(seed) + "_model.json";
  if (!fs::exists(model_path)) {
    throw ConfigError("dump-embeddings: missing model checkpoint " + model_path);
  }
  const EncoderParams params = load_checkpoint_for(model_path, data.vocab);
  const MethodConfig& mcfg = cfg.methods[mi];
  EncodeContext ctx{&params, mcfg.template_mode, mcfg.use_prompt()};

  std::ostringstream csv;
  csv << "instance,relation";
  const std::size_t width = branch == "classifier" ? params.dims.d_phi : params.dims.vocab;
  for (std::size_t c = 0; c < width; ++c) csv << ",v" << c;
  csv << "\n";
  const Task& task = data.stream.tasks[static_cast<std::size_t>(task_id - 1)];
  for (std::size_t i = 0; i < task.test.size(); ++i) {
    const Instance& inst = task.test[i];
    const Matrix f = ctx.feature(inst);
    const Matrix vec = branch == "classifier" ? g_phi(params, f) : lm_head(params, f);
    csv << i << "," << data.stream.relation_names[static_cast<std::size_t>(inst.relation)];
    for (std::size_t c = 0; c < vec.size(); ++c) csv << "," << fmt_double(vec[c]);
    csv << "\n";
  }
  write_text(out_csv, csv.str());
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"few-shot continual relation extraction workbench"};
  app.require_subcommand(1);

  std::string config_path, out_path, results_path, branch = "classifier", method;
  std::string dump_out = "embeddings.csv";
  std::vector<std::string> overrides;
  int task_id = 1;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--set", overrides, "override config entries (dotted.key=value)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write per-task JSONL files plus a manifest");
  add_config(gen);
  gen->add_option("--out", out_path, "output directory (default: <out_dir>/data)");

  CLI::App* pre = app.add_subcommand("pretrain", "masked-token pretraining per seed");
  add_config(pre);

  CLI::App* run = app.add_subcommand("run", "run the full method x seed grid");
  add_config(run);

  CLI::App* rep = app.add_subcommand("report", "tabulate results (text + CSV)");
  rep->add_option("--results", results_path, "runs directory")->required();

  CLI::App* dump = app.add_subcommand("dump-embeddings", "dump branch features to CSV");
  dump->add_option("--results", results_path, "runs directory")->required();
  dump->add_option("--task", task_id, "1-based task id")->required();
  dump->add_option("--branch", branch, "classifier | lm_head");
  dump->add_option("--method", method, "method name (default: first in config)");
  dump->add_option("--seed", seed, "seed (default: first in config)")
      ->each([&](const std::string&) { seed_given = true; });
  dump->add_option("--out", dump_out, "output CSV path");

  try {
    std::vector<std::string> argv = args;
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    auto load_cfg = [&]() {
      ExperimentConfig cfg = load_experiment_config(config_path, overrides);
      if (const char* root = std::getenv("FCRE_OUT_ROOT")) cfg.out_dir = root;
      return cfg;
    };
    if (gen->parsed()) {
      const ExperimentConfig cfg = load_cfg();
      cmd_gen_data(cfg, out_path.empty() ? cfg.out_dir + "/data" : out_path);
    } else if (pre->parsed()) {
      cmd_pretrain(load_cfg());
    } else if (run->parsed()) {
      cmd_run(load_cfg());
    } else if (rep->parsed()) {
      std::string text;
      cmd_report(results_path, &text);
      std::cout << text;
    } else if (dump->parsed()) {
      const ExperimentConfig cfg = parse_experiment_config(read_text(results_path + "/config.json"));
      const std::vector<std::string> names = method_names(cfg.methods);
      if (method.empty()) method = names.empty() ? "" : names.front();
      if (!seed_given) seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
      cmd_dump_embeddings(results_path, task_id, branch, method, seed, dump_out);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fcre
