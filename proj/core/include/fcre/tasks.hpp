#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fcre/instance.hpp"

namespace fcre {

// Relation name <-> id registry; ids are assigned in first-seen order.
struct RelationRegistry {
  std::vector<std::string> names;
  std::map<std::string, int> ids;

  int add_or_get(const std::string& name);
  int find(const std::string& name) const;
};

struct Task {
  int id = 0;  // 1-based position in the stream
  std::vector<int> relations;
  std::vector<Instance> train;
  std::vector<Instance> test;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<std::string> relation_names;

  // R-tilde up to and including task index `upto` (1-based).
  std::vector<int> seen_relations(std::size_t upto) const;
};

struct FirstTaskConfig {
  std::size_t relations = 0;           // 0 -> same as ways
  std::size_t train_per_relation = 0;  // 0 -> same as shots
};

// Partitions the relations present in `instances` into T disjoint tasks with
// N relations and K train shots each (the first task may be larger), using
// the remaining samples of each relation as its test set.
TaskStream split_tasks(const std::vector<Instance>& instances,
                       const std::vector<std::string>& relation_names, std::size_t ways,
                       std::size_t shots, std::size_t tasks, FirstTaskConfig first,
                       std::uint64_t seed);

}  // namespace fcre
