// Exemplar selection policies: map a candidate pool (plus model or score
// context) to K exemplars per task. All ties break by the lower example id.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"
#include "hesit/influence.hpp"
#include "hesit/model.hpp"

namespace hesit {

// Uniform sample of K candidate ids without replacement, deterministic per seed.
inline std::vector<ExampleId> select_random(std::span<const Example> candidates, std::size_t k,
                                            std::uint64_t seed) {
  if (k > candidates.size()) throw std::invalid_argument("select_random: k exceeds pool size");
  Rng rng(seed);
  const std::vector<std::size_t> picks = rng.sample_without_replacement(candidates.size(), k);
  std::vector<ExampleId> out;
  out.reserve(k);
  for (std::size_t i : picks) out.push_back(candidates[i].id);
  return out;
}

// Round-robin over label groups in ascending label order, taking one
// seeded-random unpicked member per visit until K ids are selected.
inline std::vector<ExampleId> select_uniform_by_label(std::span<const Example> candidates,
                                                      std::size_t k, std::uint64_t seed) {
  if (k > candidates.size())
    throw std::invalid_argument("select_uniform_by_label: k exceeds pool size");
  std::map<int, std::vector<ExampleId>> groups;
  for (const Example& e : candidates) groups[e.label].push_back(e.id);
  Rng rng(seed);
  for (auto& [label, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
  }
  std::vector<ExampleId> out;
  out.reserve(k);
  while (out.size() < k) {
    for (auto& [label, ids] : groups) {
      if (out.size() == k) break;
      if (ids.empty()) continue;
      out.push_back(ids.back());
      ids.pop_back();
    }
  }
  return out;
}

// Classic reservoir sampling over a single streaming pass: keep the first K,
// then item n > K replaces a uniformly random slot with probability K/n.
inline std::vector<ExampleId> select_reservoir(std::span<const Example> stream, std::size_t k,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ExampleId> buffer;
  buffer.reserve(k);
  std::size_t seen = 0;
  for (const Example& e : stream) {
    ++seen;
    if (buffer.size() < k) {
      buffer.push_back(e.id);
      continue;
    }
    const std::uint64_t slot = rng.below(seen);
    if (slot < k) buffer[static_cast<std::size_t>(slot)] = e.id;
  }
  return buffer;
}

namespace detail {

// Cosine similarity with zero-gradient vectors treated as similarity 0.
inline double safe_cosine(const ParamVector& a, const ParamVector& b, double na, double nb) {
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace detail

// Gradient-dispersion greedy selection: start from the candidate with the
// largest gradient norm, then repeatedly add the candidate minimizing the
// maximum cosine similarity to gradients already in the buffer. Gradients are
// taken at the trained parameters.
template <ModelLike M>
std::vector<ExampleId> select_gss(const M& model, const ParamVector& params,
                                  std::span<const Example> candidates, std::size_t k) {
  if (k > candidates.size()) throw std::invalid_argument("select_gss: k exceeds pool size");
  const std::size_t n = candidates.size();
  std::vector<ParamVector> grads(n);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    model.grad_example(params, candidates[i], grads[i]);
    norms[i] = norm2(grads[i]);
  }

  std::vector<bool> taken(n, false);
  std::vector<ExampleId> out;
  out.reserve(k);
  if (k == 0) return out;

  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (norms[i] > norms[first] ||
        (norms[i] == norms[first] && candidates[i].id < candidates[first].id))
      first = i;
  }
  taken[first] = true;
  out.push_back(candidates[first].id);

  // max cosine similarity of each remaining candidate to the buffer so far
  std::vector<double> max_sim(n, -2.0);
  std::size_t last = first;
  while (out.size() < k) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      max_sim[i] = std::max(max_sim[i],
                            detail::safe_cosine(grads[i], grads[last], norms[i], norms[last]));
      if (best == n || max_sim[i] < max_sim[best] ||
          (max_sim[i] == max_sim[best] && candidates[i].id < candidates[best].id))
        best = i;
    }
    taken[best] = true;
    out.push_back(candidates[best].id);
    last = best;
  }
  return out;
}

// The K candidates with the lowest per-example loss at the trained params.
template <ModelLike M>
std::vector<ExampleId> select_loss_based(const M& model, const ParamVector& params,
                                         std::span<const Example> candidates, std::size_t k) {
  if (k > candidates.size()) throw std::invalid_argument("select_loss_based: k exceeds pool size");
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> losses(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    losses[i] = model.loss(params, candidates[i]);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (losses[a] != losses[b]) return losses[a] < losses[b];
    return candidates[a].id < candidates[b].id;
  });
  std::vector<ExampleId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(candidates[order[i]].id);
  return out;
}

enum class HesitSelectMode { signed_desc, magnitude_desc };

inline const char* hesit_select_mode_name(HesitSelectMode m) {
  return m == HesitSelectMode::signed_desc ? "signed_desc" : "magnitude_desc";
}

inline HesitSelectMode hesit_select_mode_from_name(const std::string& s) {
  if (s == "signed_desc") return HesitSelectMode::signed_desc;
  if (s == "magnitude_desc") return HesitSelectMode::magnitude_desc;
  throw std::invalid_argument("unknown hesit selection mode: " + s);
}

// Top-K by influence score: highest raw scores (most beneficial) in
// signed_desc mode, highest |raw| in magnitude_desc mode.
inline std::vector<ExampleId> select_hesit(std::span<const Example> candidates,
                                           std::span<const InfluenceRecord> records,
                                           std::size_t k,
                                           HesitSelectMode mode = HesitSelectMode::signed_desc) {
  if (k > candidates.size()) throw std::invalid_argument("select_hesit: k exceeds pool size");
  std::unordered_map<ExampleId, double> score;
  score.reserve(records.size());
  for (const InfluenceRecord& r : records) score[r.example_id] = r.raw;
  std::vector<std::pair<double, ExampleId>> keyed;
  keyed.reserve(candidates.size());
  for (const Example& e : candidates) {
    const auto it = score.find(e.id);
    if (it == score.end())
      throw std::invalid_argument("select_hesit: missing influence record for id " +
                                  std::to_string(e.id));
    const double key = mode == HesitSelectMode::signed_desc ? it->second : std::abs(it->second);
    keyed.emplace_back(key, e.id);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<ExampleId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(keyed[i].second);
  return out;
}

}  // namespace hesit
