// Labeled examples, datasets and task streams.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hesit/common.hpp"

namespace hesit {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "trn";
    case Split::val: return "val";
    case Split::test: return "tst";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "trn") return Split::train;
  if (s == "val") return Split::val;
  if (s == "tst") return Split::test;
  throw std::invalid_argument("unknown split tag: " + s);
}

// One labeled training point z_i = (x_i, y_i). noise_flag marks labels that
// were deliberately corrupted by the data generator.
struct Example {
  ExampleId id = 0;
  std::vector<double> features;
  int label = 0;
  int task_id = 0;
  bool noise_flag = false;
  Split split = Split::train;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  const Example& operator[](std::size_t i) const { return examples[i]; }

  // Checks id uniqueness, label range and feature dimensions.
  void validate() const {
    std::unordered_set<ExampleId> seen;
    for (const Example& e : examples) {
      if (e.features.size() != dim)
        throw std::invalid_argument("dataset: feature dimension mismatch for id " +
                                    std::to_string(e.id));
      if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes)
        throw std::invalid_argument("dataset: label out of range for id " +
                                    std::to_string(e.id));
      if (!seen.insert(e.id).second)
        throw std::invalid_argument("dataset: duplicate id " + std::to_string(e.id));
    }
  }

  // Copy without the given example; used by leave-one-out retraining.
  Dataset without(ExampleId id) const {
    Dataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.examples.reserve(examples.size() > 0 ? examples.size() - 1 : 0);
    bool found = false;
    for (const Example& e : examples) {
      if (e.id == id && !found) {
        found = true;
        continue;
      }
      out.examples.push_back(e);
    }
    if (!found) throw std::invalid_argument("dataset: no example with id " + std::to_string(id));
    return out;
  }

  const Example* find(ExampleId id) const {
    for (const Example& e : examples)
      if (e.id == id) return &e;
    return nullptr;
  }
};

// One curriculum task with its three splits.
struct Task {
  int task_id = 0;
  Dataset train;
  Dataset val;
  Dataset test;
};

// Sequenced curriculum D_1 .. D_T over a shared feature/class space.
struct TaskStream {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<Task> tasks;

  std::size_t size() const { return tasks.size(); }
};

// Merge several datasets into one (training set union with a replay buffer).
inline Dataset concat(const Dataset& a, const std::vector<Example>& extra) {
  Dataset out = a;
  out.examples.insert(out.examples.end(), extra.begin(), extra.end());
  return out;
}

}  // namespace hesit
