#pragma once

// Particle swarm minimization over a box, with an early-exit predicate and
// n random restarts.
//
// One iteration evaluates every particle once; the first iteration evaluates
// the initial positions. A restart runs only when the previous one ended
// without the stop predicate firing.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <exception>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "umbra/error.hpp"
#include "umbra/random.hpp"

namespace umbra {

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;

  static Bounds uniform(std::size_t dim, double lo, double hi) {
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
  }

  std::size_t dim() const noexcept { return lo.size(); }

  bool contains(std::span<const double> x) const noexcept {
    if (x.size() != dim()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
  }

  void validate() const {
    if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("bounds dimension mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(lo[i] < hi[i]))
        throw std::invalid_argument("bounds must be finite with lo < hi");
    }
  }
};

struct SwarmConfig {
  std::size_t swarm_size{40};
  double inertia_start{0.7};
  double inertia_end{0.3};
  double cognitive{1.5};
  double social{1.5};
  std::size_t max_iters{100};
  double velocity_clamp{0.25};  // fraction of bound width
  double initial_velocity{0.10};  // fraction of bound width
  std::size_t restarts{5};
  std::uint64_t seed{0};

  void validate() const {
    if (swarm_size == 0 || max_iters == 0 || restarts == 0)
      throw std::invalid_argument("swarm size, iterations and restarts must be positive");
    if (!(inertia_start > 0.0) || !(inertia_end > 0.0) || !(cognitive > 0.0) || !(social > 0.0) ||
        !(velocity_clamp > 0.0) || initial_velocity < 0.0)
      throw std::invalid_argument("swarm coefficients must be positive");
  }

  // Worst-case number of objective evaluations.
  std::size_t evaluation_budget() const noexcept { return swarm_size * max_iters * restarts; }
};

// What the objective reports for one position.
struct Evaluation {
  double cost{0.0};
  bool stop{false};
};

struct TracePoint {
  double cost{0.0};
  double best_so_far{0.0};
};

struct OptimizationResult {
  // On early exit, the position that satisfied the stop predicate.
  std::vector<double> best_position;
  double best_cost{std::numeric_limits<double>::infinity()};
  std::size_t iterations_used{0};   // summed over restarts
  std::size_t evaluations_used{0};  // summed over restarts
  bool early_exit{false};
  std::size_t restart_index{0};  // restart that produced best_position
  std::size_t restarts_used{0};
  std::vector<TracePoint> trace;  // one entry per evaluation
};

// Raised when the objective throws; carries everything consumed so far.
class OptimizationAborted : public Error {
 public:
  OptimizationAborted(OptimizationResult partial, std::exception_ptr cause, const std::string& what)
      : Error("optimization aborted: " + what), partial_(std::move(partial)), cause_(std::move(cause)) {}

  const OptimizationResult& partial() const noexcept { return partial_; }
  std::exception_ptr cause() const noexcept { return cause_; }
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  OptimizationResult partial_;
  std::exception_ptr cause_;
};

template <class F>
concept SwarmObjective = std::invocable<F&, std::span<const double>> &&
    std::convertible_to<std::invoke_result_t<F&, std::span<const double>>, Evaluation>;

template <class F>
concept RestartHook = std::invocable<F&, std::size_t>;

struct NoRestartHook {
  void operator()(std::size_t) const noexcept {}
};

// `objective` reports cost and the stop flag together; `on_restart(r)` is
// called before restart r is initialized.
template <SwarmObjective Objective, RestartHook Hook = NoRestartHook>
OptimizationResult minimize(Objective&& objective, const Bounds& bounds, const SwarmConfig& cfg,
                            Hook&& on_restart = {}) {
  bounds.validate();
  cfg.validate();
  const std::size_t dim = bounds.dim();
  const std::size_t n = cfg.swarm_size;

  std::vector<double> width(dim), vmax(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    width[d] = bounds.hi[d] - bounds.lo[d];
    vmax[d] = cfg.velocity_clamp * width[d];
  }

  OptimizationResult result;
  Rng rng(cfg.seed);

  std::vector<std::vector<double>> pos(n, std::vector<double>(dim));
  std::vector<std::vector<double>> vel(n, std::vector<double>(dim));
  std::vector<std::vector<double>> pbest(n);
  std::vector<double> pbest_cost(n);
  std::vector<double> gbest;
  double gbest_cost = std::numeric_limits<double>::infinity();
  bool have_overall = false;

  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    on_restart(restart);
    ++result.restarts_used;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t d = 0; d < dim; ++d) {
        pos[i][d] = rng.uniform(bounds.lo[d], bounds.hi[d]);
        vel[i][d] = rng.uniform(-cfg.initial_velocity, cfg.initial_velocity) * width[d];
      }
    }
    bool have_gbest = false;
    gbest_cost = std::numeric_limits<double>::infinity();

    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
      if (it > 0) {
        const double w = cfg.max_iters > 1
            ? cfg.inertia_start - (cfg.inertia_start - cfg.inertia_end) *
                  static_cast<double>(it) / static_cast<double>(cfg.max_iters - 1)
            : cfg.inertia_start;
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t d = 0; d < dim; ++d) {
            const double r1 = rng.uniform();
            const double r2 = rng.uniform();
            double v = w * vel[i][d] + cfg.cognitive * r1 * (pbest[i][d] - pos[i][d]) +
                       cfg.social * r2 * (gbest[d] - pos[i][d]);
            v = std::clamp(v, -vmax[d], vmax[d]);
            vel[i][d] = v;
            pos[i][d] = std::clamp(pos[i][d] + v, bounds.lo[d], bounds.hi[d]);
          }
        }
      }
      ++result.iterations_used;

      for (std::size_t i = 0; i < n; ++i) {
        Evaluation e;
        try {
          e = objective(std::span<const double>(pos[i]));
        } catch (const std::exception& ex) {
          throw OptimizationAborted(std::move(result), std::current_exception(), ex.what());
        }
        ++result.evaluations_used;

        if (it == 0 || e.cost < pbest_cost[i]) {
          pbest[i] = pos[i];
          pbest_cost[i] = e.cost;
        }
        if (!have_gbest || e.cost < gbest_cost) {
          gbest = pos[i];
          gbest_cost = e.cost;
          have_gbest = true;
        }
        if (!have_overall || e.cost < result.best_cost) {
          result.best_position = pos[i];
          result.best_cost = e.cost;
          result.restart_index = restart;
          have_overall = true;
        }
        result.trace.push_back({e.cost, result.best_cost});

        if (e.stop) {
          result.best_position = pos[i];
          result.best_cost = e.cost;
          result.restart_index = restart;
          result.early_exit = true;
          return result;
        }
      }
    }
  }
  return result;
}

// Separate cost and stop predicate; stop(x) is evaluated right after cost(x).
template <class Cost, class Stop>
  requires std::invocable<Cost&, std::span<const double>> &&
           std::predicate<Stop&, std::span<const double>>
OptimizationResult minimize(Cost&& cost, Stop&& stop, const Bounds& bounds, const SwarmConfig& cfg) {
  return minimize(
      [&](std::span<const double> x) {
        const double c = cost(x);
        return Evaluation{c, static_cast<bool>(stop(x))};
      },
      bounds, cfg);
}

}  // namespace umbra
