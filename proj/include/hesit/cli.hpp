// Command-line entry point: config handling, experiment orchestration and
// reporting. Exit codes: 0 success, 2 config error, 3 runtime failure.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hesit/hesit.hpp"

namespace hesit::cli {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  long long seed_override = -1;
  bool to_stdout = false;
  std::size_t jobs = 1;
};

namespace detail {

using clock = std::chrono::steady_clock;

inline double seconds_since(clock::time_point t0) {
  return std::chrono::duration<double>(clock::now() - t0).count();
}

inline std::string out_path(const CommonOpts& opts, const std::string& name) {
  return (std::filesystem::path(opts.out_dir) / name).string();
}

inline void ensure_out_dir(const CommonOpts& opts) {
  std::filesystem::create_directories(opts.out_dir);
}

inline Config load_config(const CommonOpts& opts) {
  Config cfg = Config::parse_file(opts.config_path);
  if (opts.seed_override >= 0)
    cfg.set("train.seed", std::to_string(opts.seed_override));
  return cfg;
}

inline ModelSpec model_spec_from(const Config& cfg, std::size_t dim, std::size_t classes) {
  ModelSpec spec;
  spec.input_dim = dim;
  spec.num_classes = classes;
  for (const std::string& tok : cfg.get_list("model.hidden", "")) {
    try {
      spec.hidden.push_back(static_cast<std::size_t>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw ConfigError("model.hidden", "expected a comma list of widths, got '" + tok + "'");
    }
  }
  try {
    spec.activation = activation_from_name(cfg.get_str("model.activation", "tanh"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model.activation", e.what());
  }
  spec.l2_lambda = cfg.get_double("model.l2_lambda", 0.01);
  if (spec.l2_lambda < 0.0) throw ConfigError("model.l2_lambda", "must be nonnegative");
  return spec;
}

inline TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.seed = cfg.get_u64("train.seed", 0);
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("train.batch_size", 32));
  tc.epochs = static_cast<std::size_t>(cfg.get_int("train.epochs", 10));
  tc.lr = cfg.get_double("train.lr", 0.05);
  tc.warmup_steps = static_cast<std::size_t>(cfg.get_int("train.warmup_steps", 0));
  try {
    tc.decay = lr_decay_from_name(cfg.get_str("train.decay", "constant"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("train.decay", e.what());
  }
  tc.shuffle = cfg.get_bool("train.shuffle", true);
  tc.early_stop = cfg.get_bool("train.early_stop", false);
  tc.patience = static_cast<std::size_t>(cfg.get_int("train.patience", 3));
  if (tc.batch_size == 0) throw ConfigError("train.batch_size", "must be >= 1");
  if (tc.lr <= 0.0) throw ConfigError("train.lr", "must be positive");
  return tc;
}

inline StreamSpec stream_spec_from(const Config& cfg) {
  StreamSpec spec;
  spec.tasks = static_cast<std::size_t>(cfg.get_int("data.tasks", 5));
  spec.dim = static_cast<std::size_t>(cfg.get_int("data.dim", 2));
  spec.classes = static_cast<std::size_t>(cfg.get_int("data.classes", 10));
  const std::size_t size = static_cast<std::size_t>(cfg.get_int("data.size", 200));
  const std::vector<std::string> sizes = cfg.get_list("data.task_sizes", "");
  if (sizes.empty()) {
    spec.task_sizes.assign(spec.tasks, size);
  } else {
    for (const std::string& tok : sizes) {
      try {
        spec.task_sizes.push_back(static_cast<std::size_t>(std::stoull(tok)));
      } catch (const std::exception&) {
        throw ConfigError("data.task_sizes", "expected a comma list of sizes, got '" + tok + "'");
      }
    }
  }
  spec.separation = cfg.get_double("data.separation", 8.0);
  try {
    spec.shift = shift_mode_from_name(cfg.get_str("data.shift", "class_split"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("data.shift", e.what());
  }
  spec.noise_fraction = cfg.get_double("data.noise_fraction", 0.0);
  const std::vector<std::string> ratios = cfg.get_list("data.ratios", "0.6,0.2,0.2");
  if (ratios.size() != 3) throw ConfigError("data.ratios", "expected three comma-separated ratios");
  try {
    spec.train_ratio = std::stod(ratios[0]);
    spec.val_ratio = std::stod(ratios[1]);
    spec.test_ratio = std::stod(ratios[2]);
  } catch (const std::exception&) {
    throw ConfigError("data.ratios", "unparsable ratio");
  }
  spec.seed = cfg.get_u64("data.seed", 1);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("data", e.what());
  }
  return spec;
}

// Dataset from data.file when set, otherwise generated in-process.
inline TaskStream load_or_generate_stream(const Config& cfg) {
  const std::string file = cfg.get_str("data.file", "");
  if (!file.empty()) {
    if (!std::filesystem::exists(file))
      throw ConfigError("data.file", "path does not exist: " + file);
    const std::size_t classes =
        static_cast<std::size_t>(cfg.get_int("data.classes", 0));
    return group_into_stream(load_dataset(file, classes));
  }
  return gen_task_stream(stream_spec_from(cfg));
}

inline const Task& pick_task(const TaskStream& stream, const Config& cfg) {
  const int task_id = static_cast<int>(cfg.get_int("trace.task", stream.tasks.front().task_id));
  for (const Task& t : stream.tasks)
    if (t.task_id == task_id) return t;
  throw ConfigError("trace.task", "no task with id " + std::to_string(task_id));
}

inline std::vector<ExampleId> sample_pool_ids(const Dataset& train, std::size_t pool,
                                              std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t z = std::min(pool, train.size());
  std::vector<std::size_t> picks = rng.sample_without_replacement(train.size(), z);
  std::sort(picks.begin(), picks.end());
  std::vector<ExampleId> ids;
  ids.reserve(z);
  for (std::size_t i : picks) ids.push_back(train[i].id);
  return ids;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot hash " + path);
  Fnv1a h;
  char buf[4096];
  for (;;) {
    is.read(buf, sizeof(buf));
    const std::streamsize n = is.gcount();
    if (n <= 0) break;
    h.update(buf, static_cast<std::size_t>(n));
    if (!is) break;
  }
  return h.digest();
}

// Writes one CSV artifact and binds it into the manifest by content digest.
inline void emit_csv(const CommonOpts& opts, RunManifest& man, const std::string& name,
                     const std::function<void(std::ostream&)>& writer) {
  const std::string path = out_path(opts, name);
  {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    writer(os);
  }
  man.add_artifact(name, hash_file(path));
  if (opts.to_stdout) writer(std::cout);
}

struct MethodParams {
  HesitVariant variant = HesitVariant::eq6;
  std::size_t trace_epochs = 5;
  std::size_t lissa_depth = 0;  // 0 -> pool/10
  std::size_t lissa_repeat = 10;
  double lissa_damping = 0.01;
  double lissa_scale = 25.0;
  std::size_t lissa_batch = 0;  // 0 -> train.batch_size
  std::size_t cg_max_iter = 0;  // 0 -> pool size
  double cg_tol = 1e-8;
  double cg_damping = 0.01;
  double eps_step = 1e-3;
  std::string checkpoint_dir;  // when set, TracIn round-trips checkpoints through files
};

inline MethodParams method_params_from(const Config& cfg) {
  MethodParams mp;
  try {
    mp.variant = hesit_variant_from_name(cfg.get_str("trace.variant", "eq6"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("trace.variant", e.what());
  }
  mp.trace_epochs = static_cast<std::size_t>(cfg.get_int("trace.epochs", 5));
  mp.lissa_depth = static_cast<std::size_t>(cfg.get_int("trace.lissa_depth", 0));
  mp.lissa_repeat = static_cast<std::size_t>(cfg.get_int("trace.lissa_repeat", 10));
  mp.lissa_damping = cfg.get_double("trace.lissa_damping", 0.01);
  mp.lissa_scale = cfg.get_double("trace.lissa_scale", 25.0);
  mp.lissa_batch = static_cast<std::size_t>(cfg.get_int("trace.lissa_batch", 0));
  mp.cg_max_iter = static_cast<std::size_t>(cfg.get_int("trace.cg_max_iter", 0));
  mp.cg_tol = cfg.get_double("trace.cg_tol", 1e-8);
  mp.cg_damping = cfg.get_double("trace.cg_damping", 0.01);
  mp.eps_step = cfg.get_double("trace.eps_step", 1e-3);
  mp.checkpoint_dir = cfg.get_str("trace.checkpoint_dir", "");
  return mp;
}

// Runs one influence method over the traced pool and returns normalized
// records. Covers the whole pipeline each method needs, so wall-clock
// comparisons between methods are like for like.
inline std::vector<InfluenceRecord> run_influence_method(
    InfluenceMethod method, const MlpModel& model, const TrainConfig& tc, const Dataset& train_set,
    const Dataset& val_set, const std::vector<ExampleId>& pool, const MethodParams& mp,
    std::size_t jobs = 1) {
  switch (method) {
    case InfluenceMethod::hesit: {
      HesitConfig hcfg;
      hcfg.variant = mp.variant;
      hcfg.trace_steps = mp.trace_epochs == 0
                             ? 0
                             : mp.trace_epochs * steps_per_epoch(train_set.size(), tc.batch_size);
      hcfg.traced_ids = pool;
      return hesit_trace(model, tc, train_set, val_set, hcfg);
    }
    case InfluenceMethod::tracin: {
      std::vector<TracinCheckpoint> checkpoints = harvest_checkpoints(model, tc, train_set, val_set);
      if (!mp.checkpoint_dir.empty()) {
        std::filesystem::create_directories(mp.checkpoint_dir);
        std::vector<std::string> paths;
        for (const TracinCheckpoint& ck : checkpoints) {
          char name[64];
          std::snprintf(name, sizeof(name), "checkpoint_%06llu.bin",
                        static_cast<unsigned long long>(ck.step));
          const std::string path =
              (std::filesystem::path(mp.checkpoint_dir) / name).string();
          save_checkpoint(path, ck.params, ck.step);
          paths.push_back(path);
        }
        checkpoints.clear();
        for (const std::string& path : paths) {
          const Checkpoint ck = load_checkpoint(path);
          checkpoints.push_back({ck.params, lr_at(tc, ck.step), ck.step});
        }
      }
      return tracin_influence(model, checkpoints, train_set, val_set, pool);
    }
    case InfluenceMethod::lissa:
    case InfluenceMethod::cg: {
      const TrainResult res = train(model, tc, train_set, val_set);
      const ParamVector v = validation_gradient(model, res.final_params, val_set);
      ParamVector ihvp;
      if (method == InfluenceMethod::lissa) {
        const std::size_t depth = mp.lissa_depth > 0 ? mp.lissa_depth
                                                     : std::max<std::size_t>(1, pool.size() / 10);
        const std::size_t batch = mp.lissa_batch > 0 ? mp.lissa_batch : tc.batch_size;
        ihvp = lissa_inverse_hvp(model, res.final_params, train_set, v, depth, mp.lissa_repeat,
                                 mp.lissa_damping, mp.lissa_scale, derive_seed(tc.seed, 4242),
                                 batch);
      } else {
        const std::size_t max_iter = mp.cg_max_iter > 0 ? mp.cg_max_iter : pool.size();
        ihvp = cg_inverse_hvp(model, res.final_params, train_set, v, max_iter, mp.cg_tol,
                              mp.cg_damping);
      }
      std::vector<InfluenceRecord> records;
      records.reserve(pool.size());
      for (ExampleId id : pool) {
        const Example* e = train_set.find(id);
        if (!e) throw std::runtime_error("influence pool id not found in training set");
        InfluenceRecord r;
        r.example_id = id;
        r.method = method;
        r.raw = if_influence(model, res.final_params, ihvp, *e);
        records.push_back(r);
      }
      normalize_scores(records);
      return records;
    }
    case InfluenceMethod::loo: {
      const auto loo = loo_oracle(model, tc, train_set, val_set, pool, nullptr, jobs);
      std::vector<InfluenceRecord> records;
      records.reserve(pool.size());
      for (ExampleId id : pool) {
        InfluenceRecord r;
        r.example_id = id;
        r.method = InfluenceMethod::loo;
        r.raw = loo.at(id);
        records.push_back(r);
      }
      normalize_scores(records);
      return records;
    }
    case InfluenceMethod::eps_fd: {
      std::vector<InfluenceRecord> records(pool.size());
      const auto score_one = [&](std::size_t k) {
        records[k].example_id = pool[k];
        records[k].method = InfluenceMethod::eps_fd;
        records[k].raw = eps_fd_oracle(model, tc, train_set, val_set, pool[k], mp.eps_step);
      };
      if (jobs <= 1) {
        for (std::size_t k = 0; k < pool.size(); ++k) score_one(k);
      } else {
        std::vector<std::future<void>> futures;
        for (std::size_t chunk = 0; chunk < jobs; ++chunk)
          futures.push_back(std::async(std::launch::async, [&, chunk] {
            for (std::size_t k = chunk; k < pool.size(); k += jobs) score_one(k);
          }));
        for (auto& f : futures) f.get();
      }
      normalize_scores(records);
      return records;
    }
  }
  throw std::runtime_error("unreachable influence method");
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the manifest it wants written.

inline RunManifest cmd_gen_data(const Config& cfg, const CommonOpts& opts) {
  const auto t0 = clock::now();
  const TaskStream stream = gen_task_stream(stream_spec_from(cfg));
  const std::string path = out_path(opts, "dataset.csv");
  save_stream(stream, path);
  if (opts.to_stdout) {
    std::ifstream is(path);
    std::cout << is.rdbuf();
  }
  std::cerr << "gen-data: wrote " << path << " (" << flatten(stream).size() << " examples)\n";
  RunManifest man;
  man.command = "gen-data";
  man.add_phase("gen", seconds_since(t0));
  man.add_artifact("dataset.csv", hash_file(path));
  return man;
}

inline RunManifest cmd_trace(const Config& cfg, const CommonOpts& opts) {
  RunManifest man;
  man.command = "trace";
  const TaskStream stream = load_or_generate_stream(cfg);
  const Task& task = pick_task(stream, cfg);
  const MlpModel model(model_spec_from(cfg, stream.dim, stream.num_classes));
  const TrainConfig tc = train_config_from(cfg);
  const MethodParams mp = method_params_from(cfg);
  InfluenceMethod method;
  try {
    method = method_from_name(cfg.get_str("trace.method", "hesit"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("trace.method", e.what());
  }
  const std::size_t pool_size = static_cast<std::size_t>(cfg.get_int("trace.pool", 1000));
  const std::vector<ExampleId> pool =
      sample_pool_ids(task.train, pool_size, cfg.get_u64("trace.seed", derive_seed(tc.seed, 7)));

  const auto t0 = clock::now();
  const auto records =
      run_influence_method(method, model, tc, task.train, task.val, pool, mp, opts.jobs);
  man.add_phase("trace", seconds_since(t0));

  emit_csv(opts, man, "influence.csv", [&](std::ostream& os) { write_influence_csv(os, records); });
  std::cerr << "trace: method=" << method_name(method) << " pool=" << pool.size() << " task="
            << task.task_id << " -> " << out_path(opts, "influence.csv") << "\n";
  return man;
}

inline RunManifest cmd_select(const Config& cfg, const CommonOpts& opts) {
  RunManifest man;
  man.command = "select";
  const TaskStream stream = load_or_generate_stream(cfg);
  const Task& task = pick_task(stream, cfg);
  Strategy strategy;
  try {
    strategy = strategy_from_name(cfg.get_str("select.strategy", "hesit"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("select.strategy", e.what());
  }
  const std::size_t k = static_cast<std::size_t>(cfg.get_int("select.k", 50));
  const std::uint64_t seed = cfg.get_u64("select.seed", 11);
  const std::size_t pool_size = static_cast<std::size_t>(cfg.get_int("trace.pool", 1000));
  const TrainConfig tc = train_config_from(cfg);
  const std::vector<ExampleId> pool_ids =
      sample_pool_ids(task.train, pool_size, cfg.get_u64("trace.seed", derive_seed(tc.seed, 7)));
  std::vector<Example> pool;
  pool.reserve(pool_ids.size());
  for (ExampleId id : pool_ids) pool.push_back(*task.train.find(id));
  if (k > pool.size())
    throw ConfigError("select.k", "k exceeds the candidate pool (" + std::to_string(pool.size()) +
                                      ")");

  const auto t0 = clock::now();
  std::vector<ExampleId> picked;
  switch (strategy) {
    case Strategy::vanilla:
      break;  // empty selection
    case Strategy::random:
      picked = select_random(pool, k, seed);
      break;
    case Strategy::uniform:
      picked = select_uniform_by_label(pool, k, seed);
      break;
    case Strategy::reservoir:
      picked = select_reservoir(pool, k, seed);
      break;
    case Strategy::gss:
    case Strategy::loss: {
      const MlpModel model(model_spec_from(cfg, stream.dim, stream.num_classes));
      const TrainResult res = train(model, tc, task.train, task.val);
      picked = strategy == Strategy::gss
                   ? select_gss(model, res.final_params, pool, k)
                   : select_loss_based(model, res.final_params, pool, k);
      break;
    }
    case Strategy::hesit: {
      const std::string inf = cfg.get_str("select.influence", out_path(opts, "influence.csv"));
      if (!std::filesystem::exists(inf))
        throw ConfigError("select.influence", "path does not exist: " + inf);
      const auto records = read_influence_csv(inf);
      HesitSelectMode mode;
      try {
        mode = hesit_select_mode_from_name(cfg.get_str("select.mode", "signed_desc"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("select.mode", e.what());
      }
      picked = select_hesit(pool, records, k, mode);
      break;
    }
  }
  man.add_phase("select", seconds_since(t0));

  emit_csv(opts, man, "selection.csv", [&](std::ostream& os) {
    write_selection_csv(os, task.task_id, strategy_name(strategy), picked);
  });
  std::cerr << "select: strategy=" << strategy_name(strategy) << " k=" << k << " -> "
            << out_path(opts, "selection.csv") << "\n";
  return man;
}

inline RunManifest cmd_oracle(const Config& cfg, const CommonOpts& opts,
                              const std::string& against) {
  RunManifest man;
  man.command = "oracle";
  const TaskStream stream = load_or_generate_stream(cfg);
  const Task& task = pick_task(stream, cfg);
  const MlpModel model(model_spec_from(cfg, stream.dim, stream.num_classes));
  const TrainConfig tc = train_config_from(cfg);
  MethodParams mp = method_params_from(cfg);
  const std::string method_s = cfg.get_str("oracle.method", "loo");
  if (method_s != "loo" && method_s != "eps_fd")
    throw ConfigError("oracle.method", "expected loo or eps_fd, got '" + method_s + "'");
  const InfluenceMethod method = method_from_name(method_s);
  const std::size_t pool_size = static_cast<std::size_t>(cfg.get_int("oracle.pool", 32));
  const std::vector<ExampleId> pool =
      sample_pool_ids(task.train, pool_size, cfg.get_u64("trace.seed", derive_seed(tc.seed, 7)));
  mp.eps_step = cfg.get_double("oracle.eps_step", mp.eps_step);

  const auto t0 = clock::now();
  const auto records =
      run_influence_method(method, model, tc, task.train, task.val, pool, mp, opts.jobs);
  man.add_phase("oracle", seconds_since(t0));
  emit_csv(opts, man, "oracle.csv", [&](std::ostream& os) { write_influence_csv(os, records); });
  std::cerr << "oracle: method=" << method_s << " pool=" << pool.size() << " -> "
            << out_path(opts, "oracle.csv") << "\n";

  if (!against.empty()) {
    if (!std::filesystem::exists(against))
      throw ConfigError("--against", "path does not exist: " + against);
    const auto other = read_influence_csv(against);
    std::vector<double> mine, theirs;
    for (const InfluenceRecord& r : records)
      for (const InfluenceRecord& o : other)
        if (o.example_id == r.example_id) {
          mine.push_back(r.raw);
          theirs.push_back(o.raw);
          break;
        }
    if (mine.size() < 2)
      throw std::runtime_error("oracle: fewer than two shared example ids with " + against);
    CorrelationRow row;
    row.method_a = method_s;
    row.method_b = other.empty() ? "?" : method_name(other.front().method);
    row.n = mine.size();
    row.spearman = spearman(theirs, mine);
    row.pearson = pearson(theirs, mine);
    row.sign_agreement = sign_agreement(theirs, mine);
    emit_csv(opts, man, "correlation.csv",
             [&](std::ostream& os) { write_correlation_csv(os, {row}); });
    std::cerr << "oracle: n=" << row.n << " spearman=" << row.spearman << " pearson="
              << row.pearson << " sign_agreement=" << row.sign_agreement << "\n";
  }
  return man;
}

inline CurriculumConfig curriculum_config_from(const Config& cfg) {
  CurriculumConfig ccfg;
  ccfg.exemplars_per_task = static_cast<std::size_t>(cfg.get_int("cl.k", 50));
  ccfg.trace_pool = static_cast<std::size_t>(cfg.get_int("cl.pool", 1000));
  ccfg.trace_epochs = static_cast<std::size_t>(cfg.get_int("cl.trace_epochs", 5));
  ccfg.train = train_config_from(cfg);
  try {
    ccfg.variant = hesit_variant_from_name(cfg.get_str("trace.variant", "eq6"));
    ccfg.select_mode = hesit_select_mode_from_name(cfg.get_str("select.mode", "signed_desc"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("trace.variant/select.mode", e.what());
  }
  ccfg.task_order_seed = cfg.get_u64("cl.task_order_seed", 0);
  ccfg.repeats = static_cast<std::size_t>(cfg.get_int("cl.repeats", 3));
  return ccfg;
}

inline RunManifest cmd_run_cl(const Config& cfg, const CommonOpts& opts) {
  RunManifest man;
  man.command = "run-cl";
  const TaskStream stream = load_or_generate_stream(cfg);
  const MlpModel model(model_spec_from(cfg, stream.dim, stream.num_classes));
  CurriculumConfig ccfg = curriculum_config_from(cfg);
  try {
    ccfg.strategy = strategy_from_name(cfg.get_str("cl.strategy", "hesit"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("cl.strategy", e.what());
  }

  const auto t0 = clock::now();
  const CurriculumReport report = run_curriculum(model, stream, ccfg);
  man.add_phase("run", seconds_since(t0));

  const std::string name = strategy_name(ccfg.strategy);
  emit_csv(opts, man, "curve.csv",
           [&](std::ostream& os) { write_curve_csv(os, curve_rows(name, 0, report)); });
  emit_csv(opts, man, "summary.csv",
           [&](std::ostream& os) { write_summary_csv(os, {summary_row(name, 0, report)}); });
  std::cerr << "run-cl: strategy=" << name << " final_avg_acc=" << report.final_avg << " -> "
            << out_path(opts, "summary.csv") << "\n";
  return man;
}

inline RunManifest cmd_compare(const Config& cfg, const CommonOpts& opts) {
  RunManifest man;
  man.command = "compare";
  const TaskStream stream = load_or_generate_stream(cfg);
  const MlpModel model(model_spec_from(cfg, stream.dim, stream.num_classes));
  const CurriculumConfig base = curriculum_config_from(cfg);
  std::vector<Strategy> strategies;
  for (const std::string& s : cfg.get_list("cl.strategies", "vanilla,random,hesit")) {
    try {
      strategies.push_back(strategy_from_name(s));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("cl.strategies", e.what());
    }
  }

  struct Arm {
    Strategy strategy;
    std::size_t repeat;
    CurriculumReport report;
  };
  std::vector<Arm> arms;
  for (Strategy s : strategies)
    for (std::size_t rep = 0; rep < base.repeats; ++rep) arms.push_back({s, rep, {}});

  const auto t0 = clock::now();
  const auto run_arm = [&](Arm& arm) {
    CurriculumConfig ccfg = base;
    ccfg.strategy = arm.strategy;
    ccfg.train.seed = derive_seed(base.train.seed, 10 + arm.repeat);
    if (base.task_order_seed != 0)
      ccfg.task_order_seed = derive_seed(base.task_order_seed, arm.repeat);
    arm.report = run_curriculum(model, stream, ccfg);
  };
  if (opts.jobs <= 1) {
    for (Arm& arm : arms) run_arm(arm);
  } else {
    std::vector<std::future<void>> futures;
    for (std::size_t chunk = 0; chunk < opts.jobs; ++chunk)
      futures.push_back(std::async(std::launch::async, [&, chunk] {
        for (std::size_t i = chunk; i < arms.size(); i += opts.jobs) run_arm(arms[i]);
      }));
    for (auto& f : futures) f.get();
  }
  man.add_phase("compare", seconds_since(t0));

  std::vector<CurveRow> curves;
  std::vector<SummaryRow> summaries;
  for (const Arm& arm : arms) {
    const std::string name = strategy_name(arm.strategy);
    const auto rows = curve_rows(name, arm.repeat, arm.report);
    curves.insert(curves.end(), rows.begin(), rows.end());
    summaries.push_back(summary_row(name, arm.repeat, arm.report));
    std::cerr << "compare: strategy=" << name << " repeat=" << arm.repeat << " final_avg_acc="
              << arm.report.final_avg << "\n";
  }
  emit_csv(opts, man, "curve.csv", [&](std::ostream& os) { write_curve_csv(os, curves); });
  emit_csv(opts, man, "summary.csv", [&](std::ostream& os) { write_summary_csv(os, summaries); });
  return man;
}

inline RunManifest cmd_timing(const Config& cfg, const CommonOpts& opts) {
  RunManifest man;
  man.command = "timing";
  std::vector<InfluenceMethod> methods;
  for (const std::string& s : cfg.get_list("timing.methods", "hesit,tracin,lissa,cg")) {
    try {
      methods.push_back(method_from_name(s));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("timing.methods", e.what());
    }
  }
  const std::size_t dim = static_cast<std::size_t>(cfg.get_int("timing.dim", 10));
  const std::size_t classes = static_cast<std::size_t>(cfg.get_int("timing.classes", 5));
  const double separation = cfg.get_double("timing.separation", 4.0);
  const TrainConfig tc = train_config_from(cfg);
  const MethodParams mp = method_params_from(cfg);

  const std::vector<std::pair<std::size_t, std::size_t>> pools = {{100, 10}, {1000, 100}};
  for (const auto& [t_pool, v_pool] : pools) {
    const Dataset train_set =
        make_blob_dataset(dim, classes, t_pool, separation, derive_seed(tc.seed, t_pool), 0);
    const Dataset val_set = make_blob_dataset(dim, classes, v_pool, separation,
                                              derive_seed(tc.seed, t_pool + 1), 1000000);
    const MlpModel model(model_spec_from(cfg, dim, classes));
    std::vector<ExampleId> pool;
    for (const Example& e : train_set.examples) pool.push_back(e.id);
    std::sort(pool.begin(), pool.end());
    MethodParams pool_mp = mp;
    if (pool_mp.lissa_depth == 0) pool_mp.lissa_depth = std::max<std::size_t>(1, t_pool / 10);
    if (pool_mp.cg_max_iter == 0) pool_mp.cg_max_iter = t_pool;

    for (InfluenceMethod method : methods) {
      const auto t0 = clock::now();
      const auto records =
          run_influence_method(method, model, tc, train_set, val_set, pool, pool_mp, 1);
      const double sec = seconds_since(t0);
      man.timing.push_back({method_name(method), t_pool, v_pool, sec});
      std::cerr << "timing: method=" << method_name(method) << " T=" << t_pool << " V=" << v_pool
                << " seconds=" << sec << "\n";
      (void)records;
    }
  }

  emit_csv(opts, man, "timing.csv", [&](std::ostream& os) {
    os << "method,T,V,seconds\n";
    for (const TimingRow& r : man.timing)
      os << r.method << ',' << r.train_pool << ',' << r.val_pool << ',' << fmt_double(r.seconds)
         << '\n';
  });
  return man;
}

}  // namespace detail

inline int run(int argc, char** argv) {
  CLI::App app{"HESIT workbench: hyper-gradient exemplar selection, influence baselines and "
               "continual-learning experiments"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  CommonOpts opts;
  std::string against;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "config file (INI-style)")->required();
    sub->add_option("--out", opts.out_dir, "output directory (default .)");
    sub->add_option("--seed", opts.seed_override, "override train.seed");
    sub->add_flag("--stdout", opts.to_stdout, "also write primary CSV output to stdout");
    sub->add_option("--jobs", opts.jobs, "worker threads for independent runs");
    return sub;
  };

  CLI::App* gen = add_common(app.add_subcommand("gen-data", "generate a synthetic task stream"));
  CLI::App* trace =
      add_common(app.add_subcommand("trace", "score training examples with an influence method"));
  CLI::App* select = add_common(app.add_subcommand("select", "pick exemplars with a strategy"));
  CLI::App* oracle =
      add_common(app.add_subcommand("oracle", "brute-force influence oracles and correlations"));
  oracle->add_option("--against", against, "influence CSV to correlate the oracle scores with");
  CLI::App* runcl = add_common(app.add_subcommand("run-cl", "run one continual-learning arm"));
  CLI::App* compare =
      add_common(app.add_subcommand("compare", "run strategies x repeats and join summaries"));
  CLI::App* timing =
      add_common(app.add_subcommand("timing", "wall-time comparison of influence methods"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    detail::ensure_out_dir(opts);
    const Config cfg = detail::load_config(opts);
    RunManifest man;
    if (gen->parsed())
      man = detail::cmd_gen_data(cfg, opts);
    else if (trace->parsed())
      man = detail::cmd_trace(cfg, opts);
    else if (select->parsed())
      man = detail::cmd_select(cfg, opts);
    else if (oracle->parsed())
      man = detail::cmd_oracle(cfg, opts, against);
    else if (runcl->parsed())
      man = detail::cmd_run_cl(cfg, opts);
    else if (compare->parsed())
      man = detail::cmd_compare(cfg, opts);
    else if (timing->parsed())
      man = detail::cmd_timing(cfg, opts);
    man.config_digest = cfg.digest();
    man.write(detail::out_path(opts, "manifest.txt"));
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace hesit::cli
