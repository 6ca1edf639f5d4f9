#pragma once

// Corpus-level attack statistics and the parameter sweeps behind the
// success-rate / mean-query tables.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "umbra/attack.hpp"
#include "umbra/image.hpp"
#include "umbra/random.hpp"

namespace umbra {

struct CellStats {
  std::size_t attacked{0};
  std::size_t successes{0};
  double mean_queries{std::numeric_limits<double>::quiet_NaN()};  // over successes only

  double success_rate() const { return attacked == 0 ? 0.0 : 100.0 * successes / attacked; }
  double failure_rate() const { return attacked == 0 ? 0.0 : 100.0 - success_rate(); }
};

// Attacks every sample with per-image seeds derived from `seed`, using up to
// `jobs` threads. Results do not depend on `jobs`.
inline CellStats attack_corpus(std::span<const Sample> samples, Classifier& classifier, const AttackConfig& cfg,
                               std::uint64_t seed, std::size_t jobs = 1) {
  if (samples.empty()) throw std::invalid_argument("empty corpus");
  cfg.validate();
  std::vector<AttackReport> reports(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= samples.size() || failed.load()) return;
      try {
        AttackConfig c = cfg;
        c.swarm.seed = derive_seed(seed, 2 * i);
        reports[i] = cfg.use_eot || cfg.stabilize
            ? run_attack(samples[i].image, samples[i].label, samples[i].mask, classifier, c,
                         derive_seed(seed, 2 * i + 1))
            : attack_digital(samples[i].image, samples[i].label, samples[i].mask, classifier, c);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, samples.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  CellStats s;
  s.attacked = reports.size();
  double total = 0.0;
  for (const auto& r : reports) {
    if (!r.success) continue;
    ++s.successes;
    total += static_cast<double>(r.queries_used);
  }
  if (s.successes > 0) s.mean_queries = total / s.successes;
  return s;
}

enum class SweepParameter { K, Edges, Restarts };

inline const char* to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::K: return "k";
    case SweepParameter::Edges: return "edges";
    case SweepParameter::Restarts: return "restarts";
  }
  return "?";
}

inline AttackConfig with_value(AttackConfig cfg, SweepParameter p, double v) {
  switch (p) {
    case SweepParameter::K: cfg.k = v; break;
    case SweepParameter::Edges: cfg.edges = static_cast<std::size_t>(std::llround(v)); break;
    case SweepParameter::Restarts: cfg.swarm.restarts = static_cast<std::size_t>(std::llround(v)); break;
  }
  return cfg;
}

inline std::string format_sweep_value(SweepParameter p, double v) {
  char buf[32];
  if (p == SweepParameter::K) std::snprintf(buf, sizeof buf, "%.2f", v);
  else std::snprintf(buf, sizeof buf, "%lld", std::llround(v));
  return buf;
}

struct SweepRow {
  std::string model;
  std::vector<CellStats> cells;  // one per swept value
};

struct SweepTable {
  SweepParameter parameter{SweepParameter::K};
  std::vector<double> values;
  std::vector<SweepRow> rows;
};

inline SweepRow sweep(const std::string& model_name, std::span<const Sample> samples, Classifier& classifier,
                      const AttackConfig& base, SweepParameter p, std::span<const double> values,
                      std::uint64_t seed, std::size_t jobs = 1) {
  SweepRow row{model_name, {}};
  for (double v : values) row.cells.push_back(attack_corpus(samples, classifier, with_value(base, p, v), seed, jobs));
  return row;
}

namespace detail {

inline void write_table(std::ostream& out, const SweepTable& t, bool queries) {
  out << "model";
  for (double v : t.values) out << ',' << format_sweep_value(t.parameter, v);
  out << '\n';
  char buf[32];
  for (const auto& row : t.rows) {
    out << row.model;
    for (const auto& c : row.cells) {
      const double v = queries ? c.mean_queries : c.success_rate();
      if (std::isnan(v)) {
        out << ",NA";
        continue;
      }
      std::snprintf(buf, sizeof buf, ",%.2f", v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace detail

inline void write_success_csv(std::ostream& out, const SweepTable& t) { detail::write_table(out, t, false); }
inline void write_queries_csv(std::ostream& out, const SweepTable& t) { detail::write_table(out, t, true); }

}  // namespace umbra
