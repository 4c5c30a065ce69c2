#include "fcre/tasks.hpp"

#include <algorithm>

#include "fcre/errors.hpp"
#include "fcre/rng.hpp"

namespace fcre {

int RelationRegistry::add_or_get(const std::string& name) {
  auto it = ids.find(name);
  if (it != ids.end()) return it->second;
  const int id = static_cast<int>(names.size());
  names.push_back(name);
  ids.emplace(name, id);
  return id;
}

int RelationRegistry::find(const std::string& name) const {
  auto it = ids.find(name);
  return it == ids.end() ? -1 : it->second;
}

std::vector<int> TaskStream::seen_relations(std::size_t upto) const {
  std::vector<int> out;
  for (std::size_t t = 0; t < upto && t < tasks.size(); ++t) {
    out.insert(out.end(), tasks[t].relations.begin(), tasks[t].relations.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TaskStream split_tasks(const std::vector<Instance>& instances,
                       const std::vector<std::string>& relation_names, std::size_t ways,
                       std::size_t shots, std::size_t tasks, FirstTaskConfig first,
                       std::uint64_t seed) {
  if (ways == 0 || shots == 0 || tasks == 0) {
    throw ConfigError("split_tasks: ways, shots and tasks must be positive");
  }
  const std::size_t first_rels = first.relations == 0 ? ways : first.relations;
  const std::size_t first_shots = first.train_per_relation == 0 ? shots : first.train_per_relation;

  std::map<int, std::vector<std::size_t>> by_relation;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    by_relation[instances[i].relation].push_back(i);
  }
  const std::size_t needed = first_rels + ways * (tasks - 1);
  if (by_relation.size() < needed) {
    throw ConfigError("split_tasks: need " + std::to_string(needed) + " relations, corpus has " +
                      std::to_string(by_relation.size()));
  }

  std::vector<int> rels;
  for (const auto& [rel, _] : by_relation) rels.push_back(rel);
  RngState rng(seed);
  RngState split_rng = rng.fork(1);
  split_rng.shuffle(rels);

  TaskStream stream;
  stream.relation_names = relation_names;
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t n_rels = t == 0 ? first_rels : ways;
    const std::size_t n_train = t == 0 ? first_shots : shots;
    Task task;
    task.id = static_cast<int>(t + 1);
    task.relations.assign(rels.begin() + cursor, rels.begin() + cursor + n_rels);
    cursor += n_rels;
    std::sort(task.relations.begin(), task.relations.end());
    for (int rel : task.relations) {
      std::vector<std::size_t> idx = by_relation[rel];
      if (idx.size() < n_train + 1) {
        throw ConfigError("split_tasks: relation " + std::to_string(rel) + " has " +
                          std::to_string(idx.size()) + " samples, needs more than " +
                          std::to_string(n_train));
      }
      RngState rel_rng = rng.fork(1000 + static_cast<std::uint64_t>(rel));
      rel_rng.shuffle(idx);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < n_train ? task.train : task.test).push_back(instances[idx[i]]);
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

}  // namespace fcre
