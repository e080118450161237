// Writers and readers for the workbench's CSV artifacts. Floating-point
// values are serialized with 17 significant digits so identical runs produce
// byte-identical files.
#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hesit/curriculum.hpp"
#include "hesit/influence.hpp"

namespace hesit {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// columns: example_id,method,raw_score,normalized_score,rank
// Rows are emitted in rank order (rank 1 = highest raw score, ties by id).
inline void write_influence_csv(std::ostream& os, const std::vector<InfluenceRecord>& records) {
  os << "example_id,method,raw_score,normalized_score,rank\n";
  const std::vector<std::size_t> order = rank_order(records);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const InfluenceRecord& rec = records[order[r]];
    os << rec.example_id << ',' << method_name(rec.method) << ',' << fmt_double(rec.raw) << ','
       << fmt_double(rec.normalized) << ',' << (r + 1) << '\n';
  }
}

inline void write_influence_csv(const std::string& path,
                                const std::vector<InfluenceRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_influence_csv(os, records);
}

inline std::vector<InfluenceRecord> read_influence_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty influence file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "example_id,method,raw_score,normalized_score,rank")
    throw std::runtime_error("malformed influence header in " + path);
  std::vector<InfluenceRecord> out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id_s, method_s, raw_s, norm_s, rank_s;
    if (!std::getline(ss, id_s, ',') || !std::getline(ss, method_s, ',') ||
        !std::getline(ss, raw_s, ',') || !std::getline(ss, norm_s, ',') ||
        !std::getline(ss, rank_s, ','))
      throw std::runtime_error("malformed influence row " + std::to_string(row) + " in " + path);
    InfluenceRecord r;
    try {
      r.example_id = std::stoull(id_s);
      r.method = method_from_name(method_s);
      r.raw = std::stod(raw_s);
      r.normalized = std::stod(norm_s);
    } catch (const std::exception&) {
      throw std::runtime_error("unparsable influence row " + std::to_string(row) + " in " + path);
    }
    out.push_back(r);
  }
  return out;
}

// columns: task_id,strategy,example_id,rank
inline void write_selection_csv(std::ostream& os, int task_id, const std::string& strategy,
                                const std::vector<ExampleId>& ids, bool header = true) {
  if (header) os << "task_id,strategy,example_id,rank\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    os << task_id << ',' << strategy << ',' << ids[i] << ',' << (i + 1) << '\n';
}

struct CurveRow {
  std::string strategy;
  std::size_t repeat = 0;
  int after_task = 0;
  int eval_task = 0;
  double accuracy = 0.0;
};

// columns: strategy,repeat,after_task,eval_task,accuracy
inline void write_curve_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
  os << "strategy,repeat,after_task,eval_task,accuracy\n";
  for (const CurveRow& r : rows)
    os << r.strategy << ',' << r.repeat << ',' << r.after_task << ',' << r.eval_task << ','
       << fmt_double(r.accuracy) << '\n';
}

struct SummaryRow {
  std::string strategy;
  std::size_t repeat = 0;
  double final_avg_acc = 0.0;
  double mean_forgetting = 0.0;
  double total_sec = 0.0;
  double trace_sec = 0.0;
};

// columns: strategy,repeat,final_avg_acc,mean_forgetting,total_sec,trace_sec
inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << "strategy,repeat,final_avg_acc,mean_forgetting,total_sec,trace_sec\n";
  for (const SummaryRow& r : rows)
    os << r.strategy << ',' << r.repeat << ',' << fmt_double(r.final_avg_acc) << ','
       << fmt_double(r.mean_forgetting) << ',' << fmt_double(r.total_sec) << ','
       << fmt_double(r.trace_sec) << '\n';
}

inline std::vector<CurveRow> curve_rows(const std::string& strategy, std::size_t repeat,
                                        const CurriculumReport& report) {
  std::vector<CurveRow> rows;
  for (std::size_t t = 0; t < report.accuracy.size(); ++t)
    for (std::size_t tp = 0; tp < report.accuracy[t].size(); ++tp)
      rows.push_back({strategy, repeat, report.task_order[t], report.task_order[tp],
                      report.accuracy[t][tp]});
  return rows;
}

inline SummaryRow summary_row(const std::string& strategy, std::size_t repeat,
                              const CurriculumReport& report) {
  double f = 0.0;
  for (double v : report.forgetting) f += v;
  return {strategy,
          repeat,
          report.final_avg,
          report.forgetting.empty() ? 0.0 : f / static_cast<double>(report.forgetting.size()),
          report.total_sec,
          report.trace_sec};
}

struct CorrelationRow {
  std::string method_a;
  std::string method_b;
  std::size_t n = 0;
  double spearman = 0.0;
  double pearson = 0.0;
  double sign_agreement = 0.0;
};

// columns: method_a,method_b,n,spearman,pearson,sign_agreement
inline void write_correlation_csv(std::ostream& os, const std::vector<CorrelationRow>& rows) {
  os << "method_a,method_b,n,spearman,pearson,sign_agreement\n";
  for (const CorrelationRow& r : rows)
    os << r.method_a << ',' << r.method_b << ',' << r.n << ',' << fmt_double(r.spearman) << ','
       << fmt_double(r.pearson) << ',' << fmt_double(r.sign_agreement) << '\n';
}

}  // namespace hesit
