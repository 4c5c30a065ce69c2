#include "fcre/jsonl.hpp"

#include <fstream>

#include <json.hpp>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

using nlohmann::json;

Span parse_span(const json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 ||
      !j[key][0].is_number_integer() || !j[key][1].is_number_integer()) {
    throw ParseError("line " + std::to_string(line_no) + ": \"" + key +
                     "\" must be a two-element integer array");
  }
  const long long s = j[key][0].get<long long>();
  const long long e = j[key][1].get<long long>();
  if (s < 0 || e < 0) {
    throw ParseError("line " + std::to_string(line_no) + ": \"" + key + "\" is negative");
  }
  return Span{static_cast<std::size_t>(s), static_cast<std::size_t>(e)};
}

}  // namespace

LoadedCorpus load_jsonl(const std::string& path, VocabPolicy policy, Vocab vocab,
                        RelationRegistry relations, std::size_t vocab_cap) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_jsonl: cannot open " + path);
  LoadedCorpus out;
  out.vocab = std::move(vocab);
  out.relations = std::move(relations);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array() ||
        !j.contains("relation") || !j["relation"].is_string()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": object with \"tokens\" array and \"relation\" string required");
    }
    Instance inst;
    for (const auto& tok : j["tokens"]) {
      if (!tok.is_string()) {
        throw ParseError("line " + std::to_string(line_no) + ": tokens must be strings");
      }
      const std::string s = tok.get<std::string>();
      const bool capped = vocab_cap > 0 && out.vocab.size() >= vocab_cap;
      inst.tokens.push_back(policy == VocabPolicy::kExtend && (!capped || out.vocab.find(s) >= 0)
                                ? out.vocab.add(s)
                                : out.vocab.id_or_unk(s));
    }
    if (inst.tokens.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": empty token list");
    }
    inst.head = parse_span(j, "head", line_no);
    inst.tail = parse_span(j, "tail", line_no);
    inst.relation = out.relations.add_or_get(j["relation"].get<std::string>());
    const std::string problem = instance_problem(inst);
    if (!problem.empty()) {
      throw ParseError("line " + std::to_string(line_no) + ": " + problem);
    }
    out.instances.push_back(std::move(inst));
  }
  return out;
}

void save_jsonl(const std::string& path, const std::vector<Instance>& instances,
                const Vocab& vocab, const RelationRegistry& relations) {
  std::ofstream outf(path);
  if (!outf) throw ConfigError("save_jsonl: cannot open " + path + " for writing");
  for (const Instance& inst : instances) {
    nlohmann::ordered_json j;
    j["tokens"] = nlohmann::ordered_json::array();
    for (int id : inst.tokens) j["tokens"].push_back(vocab.token(id));
    j["head"] = {inst.head.start, inst.head.end};
    j["tail"] = {inst.tail.start, inst.tail.end};
    if (inst.relation < 0 || inst.relation >= static_cast<int>(relations.names.size())) {
      throw IndexError("save_jsonl: relation id out of registry range");
    }
    j["relation"] = relations.names[static_cast<std::size_t>(inst.relation)];
    outf << j.dump() << "\n";
  }
}

}  // namespace fcre
