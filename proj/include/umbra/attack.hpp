#pragma once

// Shadow attacks against a black-box classifier.
//
//   attack_digital  minimize f_true(shadowed image) until the label flips
//   attack_robust   minimize the plan-mean of f_true over EOT transforms
//                   until the plan-mean argmax flips
//   stabilize       maximize the plan-mean confidence of an already induced
//                   wrong label, keeping that label the plan-mean argmax
//
// The optimizer searches polygon vertex coordinates; every evaluation
// re-renders the shadow and queries the classifier.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "umbra/classifier.hpp"
#include "umbra/error.hpp"
#include "umbra/geometry.hpp"
#include "umbra/pso.hpp"
#include "umbra/random.hpp"
#include "umbra/shadow.hpp"
#include "umbra/transforms.hpp"

namespace umbra {

struct AttackConfig {
  double k{kDefaultShadowCoefficient};
  std::size_t edges{3};
  SwarmConfig swarm{};
  bool use_eot{false};
  bool stabilize{false};
  std::optional<std::uint64_t> query_budget;
  TransformRanges transforms{};
  // Vertex bounds extend the image rectangle by this fraction per side.
  double bound_margin{0.2};

  void validate() const {
    validate_coefficient(k);
    if (edges < 3) throw std::invalid_argument("shadow polygon needs at least 3 edges");
    if (query_budget && *query_budget == 0) throw std::invalid_argument("query budget must be positive");
    if (bound_margin < 0.0) throw std::invalid_argument("bound margin must be non-negative");
    swarm.validate();
    transforms.validate();
  }
};

struct AttackReport {
  bool success{false};
  std::optional<std::size_t> original_label;
  std::optional<std::size_t> adversarial_label;
  std::optional<ShadowSpec> shadow;  // absent for the already-misclassified shortcut
  std::uint64_t queries_used{0};
  std::size_t restarts_used{0};
  std::optional<double> stabilized_confidence;
  std::optional<bool> stabilization_succeeded;
  bool budget_exhausted{false};
  std::vector<TracePoint> trace;  // (cost, best so far) per evaluation
};

inline nlohmann::json to_json(const AttackReport& r) {
  using nlohmann::json;
  json j;
  j["success"] = r.success;
  j["original_label"] = r.original_label ? json(*r.original_label) : json(nullptr);
  j["adversarial_label"] = r.adversarial_label ? json(*r.adversarial_label) : json(nullptr);
  if (r.shadow) {
    json verts = json::array();
    for (const auto& p : r.shadow->polygon.vertices()) verts.push_back({p.x, p.y});
    j["shadow"] = {{"vertices", verts}, {"k", r.shadow->k}};
  } else {
    j["shadow"] = nullptr;
  }
  j["queries_used"] = r.queries_used;
  j["restarts_used"] = r.restarts_used;
  j["stabilized_confidence"] = r.stabilized_confidence ? json(*r.stabilized_confidence) : json(nullptr);
  j["stabilization_succeeded"] = r.stabilization_succeeded ? json(*r.stabilization_succeeded) : json(nullptr);
  j["budget_exhausted"] = r.budget_exhausted;
  json trace = json::array();
  for (const auto& t : r.trace) {
    // Infeasible stabilization candidates carry +inf, which JSON cannot hold.
    trace.push_back({std::isfinite(t.cost) ? json(t.cost) : json(nullptr),
                     std::isfinite(t.best_so_far) ? json(t.best_so_far) : json(nullptr)});
  }
  j["trace"] = trace;
  return j;
}

// Forwards to another classifier while keeping its own query count, so
// concurrent attacks sharing one model each see only their own queries.
class ClassifierView final : public Classifier {
 public:
  explicit ClassifierView(Classifier& inner) : inner_(inner) {}
  std::size_t num_classes() const override { return inner_.num_classes(); }

 protected:
  ConfidenceVector query(const Image& x) override { return inner_.predict(x); }

 private:
  Classifier& inner_;
};

// Provides the frozen transform plan for each optimizer restart.
using PlanSource = std::function<TransformPlan(std::size_t restart)>;

inline PlanSource seeded_plans(std::uint64_t plan_seed, TransformRanges ranges = {}) {
  return [plan_seed, ranges = std::move(ranges)](std::size_t restart) {
    return sample_plan(derive_seed(plan_seed, restart), ranges);
  };
}

// Maps an optimizer position to the shadow polygon in image pixels.
using PolygonMap = std::function<Polygon(std::span<const double>)>;

namespace detail {

class QueryBudget {
 public:
  QueryBudget(const Classifier& c, std::optional<std::uint64_t> cap) : c_(c), start_(c.queries()), cap_(cap) {}

  void charge(std::uint64_t n) const {
    if (cap_ && used() + n > *cap_) throw BudgetExhausted();
  }
  std::uint64_t used() const { return c_.queries() - start_; }

 private:
  const Classifier& c_;
  std::uint64_t start_;
  std::optional<std::uint64_t> cap_;
};

inline ConfidenceVector checked(ConfidenceVector c, std::size_t classes) {
  if (c.size() != classes) throw QueryError("classifier returned wrong vector length");
  return c;
}

inline Bounds image_bounds(const Image& x, std::size_t edges, double margin) {
  Bounds b;
  const double mx = margin * x.width(), my = margin * x.height();
  for (std::size_t i = 0; i < edges; ++i) {
    b.lo.push_back(-mx);
    b.hi.push_back(x.width() + mx);
    b.lo.push_back(-my);
    b.hi.push_back(x.height() + my);
  }
  return b;
}

inline Polygon identity_map(std::span<const double> v) { return Polygon::from_coordinates(v); }

// Runs the optimizer, converting an aborted run into a partial result.
template <class Objective, class Hook>
std::pair<OptimizationResult, bool> run_swarm(Objective&& objective, const Bounds& bounds, const SwarmConfig& cfg,
                                              Hook&& hook) {
  try {
    return {minimize(objective, bounds, cfg, hook), false};
  } catch (const OptimizationAborted& e) {
    try {
      e.rethrow_cause();
    } catch (const BudgetExhausted&) {
      return {e.partial(), true};
    }
  }
}

}  // namespace detail

// Generic single-image attack over an arbitrary polygon parameterization.
// `plans` == nullptr gives the digital attack; otherwise each restart uses
// plans(restart) and costs are plan means.
inline AttackReport attack_parameterized(const Image& x, std::size_t y_true, const RegionMask& mask,
                                         Classifier& classifier, const AttackConfig& cfg, const Bounds& bounds,
                                         const PolygonMap& to_polygon, const PlanSource* plans) {
  cfg.validate();
  if (!mask.matches(x)) throw std::invalid_argument("mask size differs from image size");
  const std::size_t classes = classifier.num_classes();
  if (y_true >= classes) throw std::out_of_range("true label out of range");

  ClassifierView view(classifier);
  const detail::QueryBudget budget(view, cfg.query_budget);
  const ShadowCanvas canvas(x);
  AttackReport report;
  report.original_label = y_true;

  TransformPlan plan = plans ? (*plans)(0) : TransformPlan{};
  const std::uint64_t per_eval = plans ? plan.size() : 1;

  auto mean_confidences = [&](const ImageBuilder& build) {
    budget.charge(per_eval);
    if (!plans) return detail::checked(view.predict(build(1.0)), classes);
    return expected_confidences(build, plan, view);
  };

  // Already misclassified: immediate success with the unmodified image.
  try {
    const auto clean = mean_confidences([&](double) { return x; });
    const std::size_t label = argmax(clean);
    if (label != y_true) {
      report.success = true;
      report.adversarial_label = label;
      report.queries_used = budget.used();
      return report;
    }
  } catch (const BudgetExhausted&) {
    report.budget_exhausted = true;
    report.queries_used = budget.used();
    return report;
  }

  std::size_t last_label = y_true;
  auto objective = [&](std::span<const double> v) -> Evaluation {
    const Polygon poly = to_polygon(v);
    const auto conf = mean_confidences([&](double m) {
      return canvas.render(poly, std::clamp(cfg.k * m, 1e-6, 1.0), mask);
    });
    last_label = argmax(conf);
    return {conf[y_true], last_label != y_true};
  };
  auto hook = [&](std::size_t restart) {
    if (plans && restart > 0) plan = (*plans)(restart);
  };

  auto [result, exhausted] = detail::run_swarm(objective, bounds, cfg.swarm, hook);
  report.budget_exhausted = exhausted;
  report.restarts_used = result.restarts_used;
  report.trace = std::move(result.trace);
  if (!result.best_position.empty()) report.shadow = ShadowSpec{to_polygon(result.best_position), cfg.k, mask};
  if (result.early_exit) {
    report.success = true;
    report.adversarial_label = last_label;
  }
  report.queries_used = budget.used();
  return report;
}

inline AttackReport attack_digital(const Image& x, std::size_t y_true, const RegionMask& mask,
                                   Classifier& classifier, const AttackConfig& cfg) {
  cfg.validate();
  return attack_parameterized(x, y_true, mask, classifier, cfg, detail::image_bounds(x, cfg.edges, cfg.bound_margin),
                              detail::identity_map, nullptr);
}

inline AttackReport attack_robust(const Image& x, std::size_t y_true, const RegionMask& mask,
                                  Classifier& classifier, const AttackConfig& cfg, const PlanSource& plans) {
  cfg.validate();
  return attack_parameterized(x, y_true, mask, classifier, cfg, detail::image_bounds(x, cfg.edges, cfg.bound_margin),
                              detail::identity_map, &plans);
}

inline AttackReport attack_robust(const Image& x, std::size_t y_true, const RegionMask& mask,
                                  Classifier& classifier, const AttackConfig& cfg, std::uint64_t plan_seed) {
  return attack_robust(x, y_true, mask, classifier, cfg, seeded_plans(plan_seed, cfg.transforms));
}

// Maximizes the plan-mean confidence of `wrong_label` subject to it staying
// the plan-mean argmax. Infeasible candidates cost +inf. Restarts run only
// while no feasible candidate has been found.
inline AttackReport stabilize(const Image& x, const RegionMask& mask, Classifier& classifier,
                              std::size_t wrong_label, const AttackConfig& cfg, const PlanSource& plans) {
  cfg.validate();
  if (!mask.matches(x)) throw std::invalid_argument("mask size differs from image size");
  const std::size_t classes = classifier.num_classes();
  if (wrong_label >= classes) throw std::out_of_range("label out of range");

  ClassifierView view(classifier);
  const detail::QueryBudget budget(view, cfg.query_budget);
  const ShadowCanvas canvas(x);
  const Bounds bounds = detail::image_bounds(x, cfg.edges, cfg.bound_margin);
  AttackReport report;
  report.adversarial_label = wrong_label;

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_position;
  for (std::size_t restart = 0; restart < cfg.swarm.restarts; ++restart) {
    const TransformPlan plan = plans(restart);
    auto objective = [&](std::span<const double> v) -> Evaluation {
      const Polygon poly = Polygon::from_coordinates(v);
      budget.charge(plan.size());
      const auto conf = expected_confidences(
          [&](double m) { return canvas.render(poly, std::clamp(cfg.k * m, 1e-6, 1.0), mask); }, plan, view);
      if (argmax(conf) != wrong_label) return {std::numeric_limits<double>::infinity(), false};
      return {-conf[wrong_label], false};
    };
    SwarmConfig one = cfg.swarm;
    one.restarts = 1;
    one.seed = derive_seed(cfg.swarm.seed, restart);
    auto [result, exhausted] = detail::run_swarm(objective, bounds, one, NoRestartHook{});
    ++report.restarts_used;
    for (auto t : result.trace) {
      t.best_so_far = std::min(t.best_so_far, best);
      report.trace.push_back(t);
    }
    if (result.best_cost < best) {
      best = result.best_cost;
      best_position = result.best_position;
    }
    if (exhausted) {
      report.budget_exhausted = true;
      break;
    }
    if (std::isfinite(best)) break;
  }

  report.queries_used = budget.used();
  report.success = std::isfinite(best);
  report.stabilization_succeeded = report.success;
  if (report.success) {
    report.shadow = ShadowSpec{Polygon::from_coordinates(best_position), cfg.k, mask};
    report.stabilized_confidence = -best;
  }
  return report;
}

inline AttackReport stabilize(const Image& x, const RegionMask& mask, Classifier& classifier,
                              std::size_t wrong_label, const AttackConfig& cfg, std::uint64_t plan_seed) {
  return stabilize(x, mask, classifier, wrong_label, cfg, seeded_plans(plan_seed, cfg.transforms));
}

// Digital or EOT attack per cfg.use_eot, followed by stabilization when
// requested and the attack produced a shadow.
inline AttackReport run_attack(const Image& x, std::size_t y_true, const RegionMask& mask, Classifier& classifier,
                               const AttackConfig& cfg, std::uint64_t plan_seed) {
  AttackReport r = cfg.use_eot ? attack_robust(x, y_true, mask, classifier, cfg, plan_seed)
                               : attack_digital(x, y_true, mask, classifier, cfg);
  if (!cfg.stabilize || !r.success || !r.shadow || !r.adversarial_label) return r;

  AttackConfig scfg = cfg;
  if (cfg.query_budget) {
    if (r.queries_used >= *cfg.query_budget) {
      r.stabilization_succeeded = false;
      return r;
    }
    scfg.query_budget = *cfg.query_budget - r.queries_used;
  }
  const AttackReport s = stabilize(x, mask, classifier, *r.adversarial_label, scfg,
                                   derive_seed(plan_seed, 0x57ab));
  r.queries_used += s.queries_used;
  r.stabilization_succeeded = s.success;
  if (s.success) {
    r.shadow = s.shadow;
    r.stabilized_confidence = s.stabilized_confidence;
  }
  return r;
}

}  // namespace umbra
