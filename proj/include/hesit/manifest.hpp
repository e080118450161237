// Run manifest: config digest, tool version, per-phase wall times and the
// per-method timing rows, emitted as a structured text file next to outputs.
#pragma once

#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hesit/common.hpp"
#include "hesit/csvio.hpp"

namespace hesit {

struct TimingRow {
  std::string method;
  std::size_t train_pool = 0;  // T
  std::size_t val_pool = 0;    // V
  double seconds = 0.0;
};

struct RunManifest {
  std::string tool = kToolVersion;
  std::string command;
  std::uint64_t config_digest = 0;
  std::vector<std::pair<std::string, double>> phase_seconds;
  std::vector<std::pair<std::string, std::uint64_t>> artifacts;  // file -> content digest
  std::vector<TimingRow> timing;

  void add_phase(const std::string& name, double seconds) {
    phase_seconds.emplace_back(name, seconds);
  }

  void add_artifact(const std::string& name, std::uint64_t content_digest) {
    artifacts.emplace_back(name, content_digest);
  }

  static std::string hex64(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

  void write(std::ostream& os) const {
    os << "tool = " << tool << '\n';
    os << "command = " << command << '\n';
    os << "config_digest = " << hex64(config_digest) << '\n';
    if (!phase_seconds.empty()) {
      os << "[phase_seconds]\n";
      for (const auto& [name, sec] : phase_seconds)
        os << name << " = " << fmt_double(sec) << '\n';
    }
    if (!artifacts.empty()) {
      os << "[artifacts]\n";
      for (const auto& [name, digest] : artifacts) os << name << " = " << hex64(digest) << '\n';
    }
    if (!timing.empty()) {
      os << "[timing]\n";
      for (const TimingRow& r : timing)
        os << "method=" << r.method << " T=" << r.train_pool << " V=" << r.val_pool
           << " seconds=" << fmt_double(r.seconds) << '\n';
    }
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write(os);
  }
};

}  // namespace hesit
