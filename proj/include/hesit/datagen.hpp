// Deterministic synthetic task streams: Gaussian-mixture classification with
// controllable imbalance, inter-task shift and label noise, plus dataset CSV
// I/O. The master seed fully determines every byte of every split.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"

namespace hesit {

enum class ShiftMode { class_split, mean_shift, rotation };

inline const char* shift_mode_name(ShiftMode m) {
  switch (m) {
    case ShiftMode::class_split: return "class_split";
    case ShiftMode::mean_shift: return "mean_shift";
    case ShiftMode::rotation: return "rotation";
  }
  return "?";
}

inline ShiftMode shift_mode_from_name(const std::string& s) {
  if (s == "class_split") return ShiftMode::class_split;
  if (s == "mean_shift") return ShiftMode::mean_shift;
  if (s == "rotation") return ShiftMode::rotation;
  throw std::invalid_argument("unknown shift mode: " + s);
}

struct StreamSpec {
  std::size_t tasks = 1;
  std::size_t dim = 2;
  std::size_t classes = 2;
  std::vector<std::size_t> task_sizes;  // total examples per task (may be imbalanced)
  double separation = 4.0;              // distance scale between class means
  ShiftMode shift = ShiftMode::class_split;
  double noise_fraction = 0.0;          // fraction of train labels flipped per task
  double train_ratio = 0.6, val_ratio = 0.2, test_ratio = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (tasks == 0 || dim == 0 || classes == 0)
      throw std::invalid_argument("StreamSpec: tasks, dim and classes must be positive");
    if (task_sizes.size() != tasks)
      throw std::invalid_argument("StreamSpec: need one size per task");
    for (std::size_t s : task_sizes)
      if (s < classes)
        throw std::invalid_argument("StreamSpec: task sizes must be >= class count");
    if (noise_fraction < 0.0 || noise_fraction >= 0.5)
      throw std::invalid_argument("StreamSpec: noise_fraction must be in [0, 0.5)");
    const double rsum = train_ratio + val_ratio + test_ratio;
    if (std::abs(rsum - 1.0) > 1e-9)
      throw std::invalid_argument("StreamSpec: split ratios must sum to 1");
    if (train_ratio <= 0.0 || val_ratio < 0.0 || test_ratio < 0.0)
      throw std::invalid_argument("StreamSpec: split ratios must be nonnegative");
    if (shift == ShiftMode::class_split && classes < tasks)
      throw std::invalid_argument("StreamSpec: class_split needs classes >= tasks");
    if (shift == ShiftMode::rotation && dim < 2)
      throw std::invalid_argument("StreamSpec: rotation needs dim >= 2");
  }
};

namespace detail {

// Circle slot for class c: even indices fill the first half-circle in order,
// odd indices the second half. Consecutive class indices therefore sit far
// apart, which keeps class_split tasks (contiguous index ranges) internally
// balanced instead of pairing adjacent blobs.
inline std::size_t circle_slot(std::size_t c, std::size_t classes) {
  return c % 2 == 0 ? c / 2 : (classes + 1) / 2 + (c - 1) / 2;
}

// Base class means on a seeded circle (first two dims) scaled by the
// separation; for dim == 1 the means sit evenly spaced on the line.
inline std::vector<std::vector<double>> base_means(const StreamSpec& spec, Rng& rng) {
  std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
  if (spec.classes == 1) return means;
  if (spec.dim == 1) {
    const double half = static_cast<double>(spec.classes - 1) / 2.0;
    for (std::size_t c = 0; c < spec.classes; ++c)
      means[c][0] = (static_cast<double>(c) - half) * spec.separation;
    return means;
  }
  const double offset = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double radius = spec.separation / 2.0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const double a = offset + 2.0 * 3.14159265358979323846 *
                                  static_cast<double>(circle_slot(c, spec.classes)) /
                                  static_cast<double>(spec.classes);
    means[c][0] = radius * std::cos(a);
    means[c][1] = radius * std::sin(a);
  }
  return means;
}

inline void rotate_first_two(std::vector<double>& x, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double x0 = x[0], x1 = x[1];
  x[0] = c * x0 - s * x1;
  x[1] = s * x0 + c * x1;
}

}  // namespace detail

inline TaskStream gen_task_stream(const StreamSpec& spec) {
  spec.validate();
  TaskStream stream;
  stream.dim = spec.dim;
  stream.num_classes = spec.classes;

  Rng layout_rng(derive_seed(spec.seed, 0));
  const std::vector<std::vector<double>> base = detail::base_means(spec, layout_rng);

  // class groups per task
  std::vector<std::vector<int>> task_classes(spec.tasks);
  if (spec.shift == ShiftMode::class_split) {
    for (std::size_t c = 0; c < spec.classes; ++c)
      task_classes[c * spec.tasks / spec.classes].push_back(static_cast<int>(c));
  } else {
    for (std::size_t t = 0; t < spec.tasks; ++t)
      for (std::size_t c = 0; c < spec.classes; ++c)
        task_classes[t].push_back(static_cast<int>(c));
  }

  ExampleId next_id = 0;
  for (std::size_t t = 0; t < spec.tasks; ++t) {
    Rng rng(derive_seed(spec.seed, 1 + t));
    std::vector<std::vector<double>> means = base;
    if (spec.shift == ShiftMode::mean_shift && t > 0) {
      std::vector<double> dir(spec.dim);
      double nrm = 0.0;
      for (double& d : dir) {
        d = rng.normal();
        nrm += d * d;
      }
      nrm = std::sqrt(std::max(nrm, 1e-300));
      const double mag = 0.5 * spec.separation * static_cast<double>(t);
      for (auto& m : means)
        for (std::size_t i = 0; i < spec.dim; ++i) m[i] += dir[i] / nrm * mag;
    } else if (spec.shift == ShiftMode::rotation && t > 0) {
      const double angle =
          3.14159265358979323846 * static_cast<double>(t) / static_cast<double>(spec.tasks);
      for (auto& m : means) detail::rotate_first_two(m, angle);
    }

    const std::vector<int>& classes = task_classes[t];
    const std::size_t n = spec.task_sizes[t];
    std::vector<Example> points;
    points.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      Example e;
      e.label = classes[j % classes.size()];
      e.task_id = static_cast<int>(t);
      e.features.resize(spec.dim);
      for (std::size_t i = 0; i < spec.dim; ++i)
        e.features[i] = means[static_cast<std::size_t>(e.label)][i] + rng.normal();
      points.push_back(std::move(e));
    }
    rng.shuffle(points);
    for (Example& e : points) e.id = next_id++;

    const std::size_t n_trn = static_cast<std::size_t>(
        std::floor(spec.train_ratio * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(spec.val_ratio * static_cast<double>(n)));
    if (n_trn == 0 || n_trn + n_val >= n)
      throw std::invalid_argument("StreamSpec: task " + std::to_string(t) +
                                  " too small for the requested split ratios");
    for (std::size_t j = 0; j < n; ++j)
      points[j].split = j < n_trn ? Split::train : (j < n_trn + n_val ? Split::val : Split::test);

    // flip exactly floor(noise_fraction * n_trn) training labels
    const std::size_t flips =
        static_cast<std::size_t>(std::floor(spec.noise_fraction * static_cast<double>(n_trn)));
    if (flips > 0) {
      if (classes.size() < 2)
        throw std::invalid_argument("StreamSpec: label noise needs >= 2 classes in task " +
                                    std::to_string(t));
      const std::vector<std::size_t> victims = rng.sample_without_replacement(n_trn, flips);
      for (std::size_t j : victims) {
        Example& e = points[j];
        const std::size_t shift_by = 1 + static_cast<std::size_t>(rng.below(classes.size() - 1));
        std::size_t pos = 0;
        while (classes[pos] != e.label) ++pos;
        e.label = classes[(pos + shift_by) % classes.size()];
        e.noise_flag = true;
      }
    }

    Task task;
    task.task_id = static_cast<int>(t);
    for (Dataset* d : {&task.train, &task.val, &task.test}) {
      d->dim = spec.dim;
      d->num_classes = spec.classes;
    }
    for (Example& e : points) {
      if (e.split == Split::train)
        task.train.examples.push_back(std::move(e));
      else if (e.split == Split::val)
        task.val.examples.push_back(std::move(e));
      else
        task.test.examples.push_back(std::move(e));
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

// One flat Gaussian-blob dataset with exactly n examples; used by fixtures
// and the timing harness, where exact pool sizes matter.
inline Dataset make_blob_dataset(std::size_t dim, std::size_t classes, std::size_t n,
                                 double separation, std::uint64_t seed, ExampleId first_id = 0) {
  StreamSpec spec;
  spec.tasks = 1;
  spec.dim = dim;
  spec.classes = classes;
  spec.task_sizes = {std::max(n, classes)};
  spec.separation = separation;
  spec.seed = seed;
  spec.validate();
  Rng layout_rng(derive_seed(seed, 0));
  const std::vector<std::vector<double>> means = detail::base_means(spec, layout_rng);
  Rng rng(derive_seed(seed, 1));
  Dataset out;
  out.dim = dim;
  out.num_classes = classes;
  for (std::size_t j = 0; j < n; ++j) {
    Example e;
    e.id = first_id + j;
    e.label = static_cast<int>(j % classes);
    e.features.resize(dim);
    for (std::size_t i = 0; i < dim; ++i)
      e.features[i] = means[static_cast<std::size_t>(e.label)][i] + rng.normal();
    out.examples.push_back(std::move(e));
  }
  rng.shuffle(out.examples);
  return out;
}

// Convenience: uniform task sizes.
inline StreamSpec make_stream_spec(std::size_t tasks, std::size_t dim, std::size_t classes,
                                   std::size_t size_per_task, double separation, ShiftMode shift,
                                   double noise_fraction, std::uint64_t seed) {
  StreamSpec spec;
  spec.tasks = tasks;
  spec.dim = dim;
  spec.classes = classes;
  spec.task_sizes.assign(tasks, size_per_task);
  spec.separation = separation;
  spec.shift = shift;
  spec.noise_fraction = noise_fraction;
  spec.seed = seed;
  return spec;
}

// ---------------------------------------------------------------------------
// Dataset file: CSV with header id,f0,...,f{d-1},label,task_id,noise_flag,split
// and features serialized with 17 significant digits.

inline Dataset flatten(const TaskStream& stream) {
  Dataset all;
  all.dim = stream.dim;
  all.num_classes = stream.num_classes;
  for (const Task& t : stream.tasks)
    for (const Dataset* d : {&t.train, &t.val, &t.test})
      all.examples.insert(all.examples.end(), d->examples.begin(), d->examples.end());
  return all;
}

inline TaskStream group_into_stream(const Dataset& data) {
  TaskStream stream;
  stream.dim = data.dim;
  stream.num_classes = data.num_classes;
  std::map<int, Task> tasks;
  for (const Example& e : data.examples) {
    Task& t = tasks[e.task_id];
    t.task_id = e.task_id;
    Dataset& d = e.split == Split::train ? t.train : (e.split == Split::val ? t.val : t.test);
    d.examples.push_back(e);
  }
  for (auto& [tid, task] : tasks) {
    for (Dataset* d : {&task.train, &task.val, &task.test}) {
      d->dim = data.dim;
      d->num_classes = data.num_classes;
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path + " for writing");
  os << "id";
  for (std::size_t i = 0; i < data.dim; ++i) os << ",f" << i;
  os << ",label,task_id,noise_flag,split\n";
  char buf[64];
  for (const Example& e : data.examples) {
    os << e.id;
    for (double f : e.features) {
      std::snprintf(buf, sizeof(buf), "%.17g", f);
      os << ',' << buf;
    }
    os << ',' << e.label << ',' << e.task_id << ',' << (e.noise_flag ? 1 : 0) << ','
       << split_name(e.split) << '\n';
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline void save_stream(const TaskStream& stream, const std::string& path) {
  save_dataset(flatten(stream), path);
}

// Loads a dataset file. When num_classes > 0 labels are validated against it;
// otherwise the class count is inferred as max label + 1.
inline Dataset load_dataset(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_dataset: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  if (cols.size() < 6 || cols[0] != "id" || cols[cols.size() - 4] != "label" ||
      cols[cols.size() - 3] != "task_id" || cols[cols.size() - 2] != "noise_flag" ||
      cols[cols.size() - 1] != "split")
    throw std::runtime_error("load_dataset: malformed header in " + path);
  const std::size_t dim = cols.size() - 5;
  for (std::size_t i = 0; i < dim; ++i)
    if (cols[1 + i] != "f" + std::to_string(i))
      throw std::runtime_error("load_dataset: malformed header in " + path);

  Dataset data;
  data.dim = dim;
  std::unordered_set<ExampleId> seen;
  int max_label = -1;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (fields.size() != dim + 5)
      throw std::runtime_error("load_dataset: dimension mismatch at row " + std::to_string(row));
    Example e;
    try {
      e.id = std::stoull(fields[0]);
      e.features.resize(dim);
      for (std::size_t i = 0; i < dim; ++i) e.features[i] = std::stod(fields[1 + i]);
      e.label = std::stoi(fields[1 + dim]);
      e.task_id = std::stoi(fields[2 + dim]);
      e.noise_flag = fields[3 + dim] == "1";
      e.split = split_from_name(fields[4 + dim]);
    } catch (const std::exception&) {
      throw std::runtime_error("load_dataset: unparsable fields at row " + std::to_string(row));
    }
    for (double f : e.features)
      if (!std::isfinite(f))
        throw std::runtime_error("load_dataset: non-finite feature at row " + std::to_string(row));
    if (e.label < 0 || (num_classes > 0 && static_cast<std::size_t>(e.label) >= num_classes))
      throw std::runtime_error("load_dataset: label out of range at row " + std::to_string(row));
    if (!seen.insert(e.id).second)
      throw std::runtime_error("load_dataset: duplicate id at row " + std::to_string(row));
    max_label = std::max(max_label, e.label);
    data.examples.push_back(std::move(e));
  }
  if (data.examples.empty()) throw std::runtime_error("load_dataset: empty dataset");
  data.num_classes = num_classes > 0 ? num_classes : static_cast<std::size_t>(max_label + 1);
  return data;
}

}  // namespace hesit
