// Training-data influence estimators: hyper-gradient tracing over a second
// identical training pass, TracIn checkpoint scoring, LISSA and CG inverse
// Hessian-vector products, and the brute-force leave-one-out and
// epsilon-perturbation oracles that ground-truth them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/data.hpp"
#include "hesit/model.hpp"
#include "hesit/train.hpp"

namespace hesit {

enum class InfluenceMethod { hesit, tracin, lissa, cg, loo, eps_fd };

inline const char* method_name(InfluenceMethod m) {
  switch (m) {
    case InfluenceMethod::hesit: return "hesit";
    case InfluenceMethod::tracin: return "tracin";
    case InfluenceMethod::lissa: return "lissa";
    case InfluenceMethod::cg: return "cg";
    case InfluenceMethod::loo: return "loo";
    case InfluenceMethod::eps_fd: return "eps_fd";
  }
  return "?";
}

inline InfluenceMethod method_from_name(const std::string& s) {
  if (s == "hesit") return InfluenceMethod::hesit;
  if (s == "tracin") return InfluenceMethod::tracin;
  if (s == "lissa") return InfluenceMethod::lissa;
  if (s == "cg") return InfluenceMethod::cg;
  if (s == "loo") return InfluenceMethod::loo;
  if (s == "eps_fd") return InfluenceMethod::eps_fd;
  throw std::invalid_argument("unknown influence method: " + s);
}

struct InfluenceRecord {
  ExampleId example_id = 0;
  InfluenceMethod method = InfluenceMethod::hesit;
  double raw = 0.0;
  double normalized = 0.0;  // raw / max_j |raw_j| over the traced set
};

// Re-normalize scores to [-1, 1]; all-zero sets stay zero.
inline void normalize_scores(std::vector<InfluenceRecord>& records) {
  double mx = 0.0;
  for (const InfluenceRecord& r : records) mx = std::max(mx, std::abs(r.raw));
  for (InfluenceRecord& r : records) r.normalized = mx > 0.0 ? r.raw / mx : 0.0;
}

// Rank 1 = highest raw score; ties broken by the lower example id. Returns
// indices into `records` in rank order.
inline std::vector<std::size_t> rank_order(const std::vector<InfluenceRecord>& records) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].raw != records[b].raw) return records[a].raw > records[b].raw;
    return records[a].example_id < records[b].example_id;
  });
  return order;
}

// Mean validation gradient at theta_hat; the v of the tracing recursion.
template <ModelLike M>
ParamVector validation_gradient(const M& model, const ParamVector& params, const Dataset& val) {
  if (val.empty()) throw std::invalid_argument("validation_gradient: empty validation set");
  ParamVector v(model.param_count(), 0.0);
  ParamVector g;
  for (const Example& e : val.examples) {
    model.grad_example(params, e, g);
    axpy(1.0, g, v);
  }
  scale(v, 1.0 / static_cast<double>(val.size()));
  if (!all_finite(v)) throw std::runtime_error("validation_gradient: non-finite gradient");
  return v;
}

// Two recursion conventions are shipped. `eq6` multiplies the learning rate
// into the increment only, which is the form that matches the
// epsilon-derivative oracle on fixtures; `algo1_literal` additionally decays
// the accumulator by gamma(t) on every step.
enum class HesitVariant { eq6, algo1_literal };

inline const char* hesit_variant_name(HesitVariant v) {
  return v == HesitVariant::eq6 ? "eq6" : "algo1_literal";
}

inline HesitVariant hesit_variant_from_name(const std::string& s) {
  if (s == "eq6") return HesitVariant::eq6;
  if (s == "algo1_literal") return HesitVariant::algo1_literal;
  throw std::invalid_argument("unknown hesit variant: " + s);
}

struct HesitConfig {
  HesitVariant variant = HesitVariant::eq6;
  std::size_t trace_steps = 0;  // 0 -> trace the whole run
  std::vector<ExampleId> traced_ids;
};

struct TraceStats {
  std::size_t steps_traced = 0;
  std::size_t steps_total = 0;
  ParamVector final_params;
};

// Hyper-gradient influence tracing. Pass 1 trains to theta_hat and computes
// the validation gradient v; pass 2 retrains identically and accumulates one
// scalar v . grad(z_i) per traced example whenever z_i is sampled into the
// current batch, within the first `trace_steps` steps. Storage stays O(|Z|).
template <ModelLike M>
std::vector<InfluenceRecord> hesit_trace(const M& model, const TrainConfig& cfg,
                                         const Dataset& train_set, const Dataset& val_set,
                                         const HesitConfig& hcfg,
                                         const ParamVector* init = nullptr,
                                         TraceStats* stats = nullptr) {
  if (hcfg.traced_ids.empty()) throw std::invalid_argument("hesit_trace: empty traced set");
  const ParamVector init_vec = init ? *init : model.init_params(cfg.seed);

  const TrainResult first = train(model, cfg, train_set, val_set, nullptr, &init_vec);
  const ParamVector v = validation_gradient(model, first.final_params, val_set);

  const std::size_t window = hcfg.trace_steps == 0
                                 ? first.steps_taken
                                 : std::min(hcfg.trace_steps, first.steps_taken);
  const double n = static_cast<double>(train_set.size());

  std::unordered_map<ExampleId, std::size_t> slot;
  slot.reserve(hcfg.traced_ids.size());
  for (std::size_t i = 0; i < hcfg.traced_ids.size(); ++i) {
    if (!slot.emplace(hcfg.traced_ids[i], i).second)
      throw std::invalid_argument("hesit_trace: duplicate traced id " +
                                  std::to_string(hcfg.traced_ids[i]));
  }
  std::vector<double> acc(hcfg.traced_ids.size(), 0.0);

  ParamVector g;
  TrajectoryHook hook = [&](const StepInfo& info) {
    if (info.step > window) return;
    const double inv_b = 1.0 / static_cast<double>(info.batch_ids.size());
    if (hcfg.variant == HesitVariant::algo1_literal)
      for (double& a : acc) a *= info.lr;
    for (std::size_t k = 0; k < info.batch_ids.size(); ++k) {
      const auto it = slot.find(info.batch_ids[k]);
      if (it == slot.end()) continue;
      model.grad_example(info.params, train_set[info.batch_indices[k]], g);
      const double vg = dot(v, g);
      double& a = acc[it->second];
      if (hcfg.variant == HesitVariant::eq6)
        a -= info.lr * inv_b * vg;
      else
        a -= n * inv_b * vg;
      if (!std::isfinite(a))
        throw std::runtime_error("hesit_trace: non-finite accumulator at step " +
                                 std::to_string(info.step));
    }
  };

  const TrainResult second = retrain_identically(model, cfg, train_set, val_set,
                                                 first.schedule_digest, hook, &init_vec);
  if (stats) {
    stats->steps_traced = window;
    stats->steps_total = second.steps_taken;
    stats->final_params = second.final_params;
  }

  std::vector<InfluenceRecord> records;
  records.reserve(hcfg.traced_ids.size());
  for (std::size_t i = 0; i < hcfg.traced_ids.size(); ++i) {
    InfluenceRecord r;
    r.example_id = hcfg.traced_ids[i];
    r.method = InfluenceMethod::hesit;
    r.raw = hcfg.variant == HesitVariant::eq6 ? -acc[i] : -acc[i] / n;
    records.push_back(r);
  }
  normalize_scores(records);
  return records;
}

// Ground-truth estimate of the epsilon-derivative of the validation loss:
// train twice with the target's per-batch loss contribution up-weighted by
// (1 +/- eps) under identical schedules and difference the results.
template <ModelLike M>
double eps_fd_oracle(const M& model, const TrainConfig& cfg, const Dataset& train_set,
                     const Dataset& val_set, ExampleId target, double eps_step,
                     const ParamVector* init = nullptr) {
  if (eps_step <= 0.0) throw std::invalid_argument("eps_fd_oracle: eps_step must be positive");
  if (!train_set.find(target))
    throw std::invalid_argument("eps_fd_oracle: no example with id " + std::to_string(target));
  const ParamVector init_vec = init ? *init : model.init_params(cfg.seed);

  const auto run = [&](double w) {
    return detail::train_impl(
        model, cfg, train_set, val_set, nullptr, &init_vec,
        [&](const Example& e) { return e.id == target ? w : 1.0; });
  };
  const TrainResult plus = run(1.0 + eps_step);
  const TrainResult minus = run(1.0 - eps_step);
  if (plus.schedule_digest != minus.schedule_digest)
    throw std::runtime_error("eps_fd_oracle: schedule divergence between perturbed runs");

  const double lp = evaluate(model, plus.final_params, val_set).mean_loss;
  const double lm = evaluate(model, minus.final_params, val_set).mean_loss;
  return -(lp - lm) / (2.0 * eps_step * static_cast<double>(train_set.size()));
}

// Brute-force leave-one-out: retrain from the same init with the example
// removed (schedule rebuilt for N-1) and report the validation loss
// difference. Positive scores mark beneficial examples.
template <ModelLike M>
std::map<ExampleId, double> loo_oracle(const M& model, const TrainConfig& cfg,
                                       const Dataset& train_set, const Dataset& val_set,
                                       std::span<const ExampleId> ids,
                                       const ParamVector* init = nullptr, std::size_t jobs = 1) {
  if (train_set.size() < 2) throw std::invalid_argument("loo_oracle: need at least two examples");
  const ParamVector init_vec = init ? *init : model.init_params(cfg.seed);
  const TrainResult full = train(model, cfg, train_set, val_set, nullptr, &init_vec);
  const double full_loss = evaluate(model, full.final_params, val_set).mean_loss;

  std::vector<double> scores(ids.size(), 0.0);
  const auto score_one = [&](std::size_t k) {
    const Dataset reduced = train_set.without(ids[k]);
    const TrainResult res = train(model, cfg, reduced, val_set, nullptr, &init_vec);
    scores[k] = evaluate(model, res.final_params, val_set).mean_loss - full_loss;
  };

  if (jobs <= 1) {
    for (std::size_t k = 0; k < ids.size(); ++k) score_one(k);
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t chunk = 0; chunk < jobs; ++chunk) {
      futures.push_back(std::async(std::launch::async, [&, chunk] {
        for (std::size_t k = chunk; k < ids.size(); k += jobs) score_one(k);
      }));
    }
    for (auto& f : futures) f.get();
  }

  std::map<ExampleId, double> out;
  for (std::size_t k = 0; k < ids.size(); ++k) out[ids[k]] = scores[k];
  return out;
}

// ---------------------------------------------------------------------------
// TracIn: checkpoint-averaged learning-rate-weighted gradient dot products.

struct TracinCheckpoint {
  ParamVector params;
  double lr = 0.0;
  std::uint64_t step = 0;  // last executed optimization step
};

template <ModelLike M>
double tracin_score(const M& model, std::span<const TracinCheckpoint> checkpoints,
                    const Example& z, const Example& zprime) {
  if (checkpoints.empty()) throw std::invalid_argument("tracin_score: need >= 1 checkpoint");
  double s = 0.0;
  ParamVector gz, gp;
  for (const TracinCheckpoint& ck : checkpoints) {
    model.grad_example(ck.params, z, gz);
    model.grad_example(ck.params, zprime, gp);
    s += ck.lr * dot(gz, gp);
  }
  return s / static_cast<double>(checkpoints.size());
}

// TracIn influence of each traced training example on a validation set,
// using the mean validation gradient at every checkpoint.
template <ModelLike M>
std::vector<InfluenceRecord> tracin_influence(const M& model,
                                              std::span<const TracinCheckpoint> checkpoints,
                                              const Dataset& train_set, const Dataset& val_set,
                                              std::span<const ExampleId> ids) {
  if (checkpoints.empty()) throw std::invalid_argument("tracin_influence: need >= 1 checkpoint");
  std::vector<ParamVector> vs;
  vs.reserve(checkpoints.size());
  for (const TracinCheckpoint& ck : checkpoints)
    vs.push_back(validation_gradient(model, ck.params, val_set));

  std::vector<InfluenceRecord> records;
  records.reserve(ids.size());
  ParamVector g;
  for (ExampleId id : ids) {
    const Example* e = train_set.find(id);
    if (!e) throw std::invalid_argument("tracin_influence: no example with id " + std::to_string(id));
    double s = 0.0;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      model.grad_example(checkpoints[c].params, *e, g);
      s += checkpoints[c].lr * dot(g, vs[c]);
    }
    InfluenceRecord r;
    r.example_id = id;
    r.method = InfluenceMethod::tracin;
    r.raw = s / static_cast<double>(checkpoints.size());
    records.push_back(r);
  }
  normalize_scores(records);
  return records;
}

// Collects per-epoch checkpoints (params at each epoch boundary with the
// learning rate in force at the end of that epoch) from a training run.
template <ModelLike M>
std::vector<TracinCheckpoint> harvest_checkpoints(const M& model, const TrainConfig& cfg,
                                                  const Dataset& train_set, const Dataset& val_set,
                                                  const ParamVector* init = nullptr) {
  const std::size_t spe = steps_per_epoch(train_set.size(), cfg.batch_size);
  std::vector<TracinCheckpoint> out;
  // The hook fires before the update, so the params seen at the first step of
  // epoch k+1 are the end-of-epoch-k checkpoint.
  TrajectoryHook hook = [&](const StepInfo& info) {
    if (info.step > 1 && (info.step - 1) % spe == 0)
      out.push_back({info.params, info.lr, info.step});
  };
  const TrainResult res = train(model, cfg, train_set, val_set, hook, init);
  out.push_back({res.final_params, lr_at(cfg, res.steps_taken), res.steps_taken});
  return out;
}

// ---------------------------------------------------------------------------
// Inverse Hessian-vector products for the influence-function baselines.

// Stochastic Neumann-series estimator. Each of `repeat` independent runs
// performs `depth` iterations of
//   est <- v + est - (H_batch est + damping est) / scale
// with H_batch taken on one randomly sampled example batch, then the
// scale-corrected estimates are averaged.
template <ModelLike M>
ParamVector lissa_inverse_hvp(const M& model, const ParamVector& params, const Dataset& train_set,
                              const ParamVector& v, std::size_t depth, std::size_t repeat,
                              double damping, double scale, std::uint64_t seed,
                              std::size_t batch_size = 1) {
  if (depth == 0 || repeat == 0)
    throw std::invalid_argument("lissa_inverse_hvp: depth and repeat must be >= 1");
  if (scale <= 0.0) throw std::invalid_argument("lissa_inverse_hvp: scale must be positive");
  if (train_set.empty()) throw std::invalid_argument("lissa_inverse_hvp: empty training set");
  batch_size = std::min(std::max<std::size_t>(batch_size, 1), train_set.size());

  const double vnorm = std::max(norm2(v), 1e-300);
  ParamVector avg(params.size(), 0.0);
  for (std::size_t rep = 0; rep < repeat; ++rep) {
    Rng rng(derive_seed(seed, rep));
    ParamVector est = v;
    BatchRef batch(batch_size);
    for (std::size_t it = 0; it < depth; ++it) {
      for (std::size_t b = 0; b < batch_size; ++b)
        batch[b] = &train_set[static_cast<std::size_t>(rng.below(train_set.size()))];
      ParamVector h = hvp(model, params, batch, est);
      for (std::size_t i = 0; i < est.size(); ++i)
        est[i] = v[i] + est[i] - (h[i] + damping * est[i]) / scale;
      if (norm2(est) > 1e6 * vnorm)
        throw std::runtime_error(
            "lissa_inverse_hvp: estimate diverged; increase scale (current " +
            std::to_string(scale) + ") or damping (current " + std::to_string(damping) + ")");
    }
    axpy(1.0 / scale, est, avg);
  }
  for (double& x : avg) x /= static_cast<double>(repeat);
  return avg;
}

// Conjugate-gradient solve of (H + damping I) x = v with the full-batch HVP.
template <ModelLike M>
ParamVector cg_inverse_hvp(const M& model, const ParamVector& params, const Dataset& train_set,
                           const ParamVector& v, std::size_t max_iter, double tol,
                           double damping) {
  if (train_set.empty()) throw std::invalid_argument("cg_inverse_hvp: empty training set");
  const BatchRef full = make_batch_ref(std::span<const Example>(train_set.examples));
  const auto apply = [&](const ParamVector& x) {
    ParamVector hx = hvp(model, params, full, x);
    axpy(damping, x, hx);
    return hx;
  };

  ParamVector x(v.size(), 0.0);
  ParamVector r = v;
  ParamVector p = r;
  double rs = dot(r, r);
  const double stop = tol * std::max(norm2(v), 1e-300);
  if (std::sqrt(rs) <= stop) return x;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const ParamVector ap = apply(p);
    const double denom = dot(p, ap);
    if (denom == 0.0) break;
    const double alpha = rs / denom;
    axpy(alpha, p, x);
    axpy(-alpha, ap, r);
    if (!all_finite(x)) throw std::runtime_error("cg_inverse_hvp: non-finite iterate");
    const double rs_new = dot(r, r);
    if (std::sqrt(rs_new) <= stop) break;
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return x;
}

// Influence-function score (H^{-1} v) . grad(z, theta_hat), oriented so that
// positive means beneficial (removal raises the validation loss), the same
// convention as the leave-one-out oracle and the tracing estimators. The
// up-weighting form -grad(z')^T H^{-1} grad(z) carries the opposite sign.
template <ModelLike M>
double if_influence(const M& model, const ParamVector& params, const ParamVector& inverse_hvp,
                    const Example& z) {
  ParamVector g;
  model.grad_example(params, z, g);
  return dot(inverse_hvp, g);
}

// ---------------------------------------------------------------------------
// Per-class contribution matrix (intra-class contributions on the diagonal).

// groups[b] holds the influence records of traced training examples against
// the class-b validation subset. Entry (a, b) is the mean normalized score of
// class-a training examples in groups[b].
inline std::vector<std::vector<double>> contribution_matrix(
    const std::vector<std::vector<InfluenceRecord>>& groups,
    const std::unordered_map<ExampleId, int>& train_label_of, std::size_t num_classes) {
  if (groups.size() != num_classes)
    throw std::invalid_argument("contribution_matrix: need one record group per class");
  std::vector<std::vector<double>> m(num_classes, std::vector<double>(num_classes, 0.0));
  for (std::size_t b = 0; b < num_classes; ++b) {
    std::vector<double> sum(num_classes, 0.0);
    std::vector<std::size_t> count(num_classes, 0);
    for (const InfluenceRecord& r : groups[b]) {
      const auto it = train_label_of.find(r.example_id);
      if (it == train_label_of.end())
        throw std::invalid_argument("contribution_matrix: unknown example id " +
                                    std::to_string(r.example_id));
      sum[static_cast<std::size_t>(it->second)] += r.normalized;
      ++count[static_cast<std::size_t>(it->second)];
    }
    for (std::size_t a = 0; a < num_classes; ++a) {
      if (count[a] == 0)
        throw std::invalid_argument("contribution_matrix: empty class " + std::to_string(a) +
                                    " for validation class " + std::to_string(b));
      m[a][b] = sum[a] / static_cast<double>(count[a]);
    }
  }
  return m;
}

}  // namespace hesit
