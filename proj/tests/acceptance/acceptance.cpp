// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. `--stride N` attacks every Nth corpus image only (for
// quick local runs; the reported numbers then cover the subset).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "umbra/umbra.hpp"

using namespace umbra;
using namespace std::chrono_literals;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool ok, double elapsed, double limit, const std::string& detail) {
  const bool in_time = elapsed < limit;
  if (!(ok && in_time)) ++failures;
  std::printf("criterion %2d %s  %s (%.1f s, limit %.0f s)\n", id, ok && in_time ? "PASS" : "FAIL", detail.c_str(),
              elapsed, limit);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Image random_image(int w, int h, Rng& rng) {
  Image img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// ---------------------------------------------------------------------------

void color_round_trip() {
  const auto t0 = Clock::now();
  Rng rng(101);
  constexpr std::size_t n = 1 << 18;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = rng.below(1u << 24);
    const RgbPixel p{static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8),
                     static_cast<std::uint8_t>(v)};
    exact += lab_to_rgb(rgb_to_lab(p)) == p;
  }
  report(1, exact == n, seconds_since(t0), 5, fmt("color round trip: %zu/%zu random triples exact", exact, n));
}

// Pixels whose scaled Lab value falls outside the sRGB cube are clipped on
// the way back and cannot keep L = k L0; for those the output must be the
// per-channel clip of the exact inverse instead.
void shadow_locality() {
  const auto t0 = Clock::now();
  Rng rng(202);
  std::size_t leaked = 0, checked = 0, off = 0, clipped = 0, misclipped = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 16 + static_cast<int>(rng.below(33)), h = 16 + static_cast<int>(rng.below(33));
    const Image x = random_image(w, h, rng);
    RegionMask mask(w, h);
    for (int y = 0; y < h; ++y)
      for (int c = 0; c < w; ++c) mask.set(c, y, rng.below(5) != 0);
    std::vector<Point> v;
    const int edges = 3 + static_cast<int>(rng.below(7));
    for (int i = 0; i < edges; ++i) v.push_back({rng.uniform(-0.2 * w, 1.2 * w), rng.uniform(-0.2 * h, 1.2 * h)});
    const ShadowSpec spec{Polygon(v), rng.uniform(0.2, 0.9), mask};
    const Image out = apply_shadow(x, spec);
    const RegionMask region = rasterize(spec.polygon, mask);
    for (int y = 0; y < h; ++y) {
      for (int c = 0; c < w; ++c) {
        if (!region.at(c, y)) {
          leaked += out.at(c, y) != x.at(c, y);
          continue;
        }
        LabPixel target = rgb_to_lab(x.at(c, y));
        target.l *= spec.k;
        const auto lin = lab_to_rgb_unclipped(target);
        if (std::any_of(lin.begin(), lin.end(), [](double u) { return u < -0.5 || u > 255.5; })) {
          const auto clip = [](double u) { return static_cast<std::uint8_t>(std::clamp(std::round(u), 0.0, 255.0)); };
          misclipped += out.at(c, y) != RgbPixel{clip(lin[0]), clip(lin[1]), clip(lin[2])};
          ++clipped;
          continue;
        }
        const double err = std::abs(rgb_to_lab(out.at(c, y)).l - target.l);
        worst = std::max(worst, err);
        off += err > 1.0;
        ++checked;
      }
    }
  }
  report(2, leaked == 0 && off == 0 && misclipped == 0 && checked > 0, seconds_since(t0), 10,
         fmt("shadow locality: %zu changed pixels outside region; L error max %.3f over %zu in-gamut pixels, "
             "%zu above 1.0; %zu out-of-gamut pixels, %zu not the channel clip",
             leaked, worst, checked, off, clipped, misclipped));
}

void pso_sanity() {
  const auto t0 = Clock::now();
  const Bounds bounds = Bounds::uniform(6, -5.0, 5.0);
  auto sphere = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  int converged = 0, wins = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SwarmConfig cfg;
    cfg.seed = seed;
    const auto r = minimize(sphere, [](std::span<const double>) { return false; }, bounds, cfg);
    Rng rng(derive_seed(seed, 0xabc));
    double random_best = std::numeric_limits<double>::infinity();
    std::vector<double> x(6);
    for (std::size_t i = 0; i < r.evaluations_used; ++i) {
      for (auto& v : x) v = rng.uniform(-5.0, 5.0);
      random_best = std::min(random_best, sphere(x));
    }
    converged += r.best_cost < 1e-2;
    wins += r.best_cost < random_best;
    worst = std::max(worst, r.best_cost);
  }
  report(3, converged == 30 && wins >= 27, seconds_since(t0), 30,
         fmt("PSO sphere: %d/30 seeds below 1e-2 (worst %.2e), beats random search in %d/30", converged, worst, wins));
}

// ---------------------------------------------------------------------------

struct Benchmark {
  std::vector<Sample> corpus;
  std::vector<Sample> attacked;  // every stride-th sample
};

std::string cells(const SweepRow& row, bool queries) {
  std::string s;
  for (const auto& c : row.cells) s += fmt(queries ? " %.1f" : " %.2f%%", queries ? c.mean_queries : c.success_rate());
  return s;
}

void k_trend(const Benchmark& b, ModelClassifier& plain, double train_s, CellStats& k043) {
  const auto t0 = Clock::now();
  const std::vector<double> ks{0.20, 0.43, 0.70};
  const SweepRow row = sweep("plain", b.attacked, plain, AttackConfig{}, SweepParameter::K, ks, 1);
  const double elapsed = seconds_since(t0) + train_s;
  k043 = row.cells[1];

  bool rates_ok = true, queries_ok = true;
  for (std::size_t i = 1; i < row.cells.size(); ++i) {
    rates_ok = rates_ok && row.cells[i].success_rate() <= row.cells[i - 1].success_rate() + 2.0;
    const double prev = row.cells[i - 1].mean_queries, cur = row.cells[i].mean_queries;
    queries_ok = queries_ok && !std::isnan(prev) && !std::isnan(cur) && cur >= 0.9 * prev;
  }
  report(4, rates_ok, elapsed, 600,
         fmt("k-trend on %zu images, success at k = 0.20/0.43/0.70:%s", b.attacked.size(), cells(row, false).c_str()));
  report(5, queries_ok, elapsed, 600, fmt("query trend, mean queries at success:%s", cells(row, true).c_str()));
}

// k = 0.7 so that a fair share of attacks needs more than one restart; a
// stride of 33 cycles through all classes.
void restart_trend(const Benchmark& b, ModelClassifier& plain, std::size_t stride) {
  const auto t0 = Clock::now();
  std::vector<Sample> subset;
  for (std::size_t i = 0; i < b.corpus.size(); i += stride) subset.push_back(b.corpus[i]);
  int dominated = 0;
  double sum1 = 0.0, sum5 = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    AttackConfig one;
    one.k = 0.7;
    one.swarm.restarts = 1;
    AttackConfig five = one;
    five.swarm.restarts = 5;
    const double s1 = attack_corpus(subset, plain, one, derive_seed(0x7e57, seed)).success_rate();
    const double s5 = attack_corpus(subset, plain, five, derive_seed(0x7e57, seed)).success_rate();
    dominated += s5 >= s1;
    sum1 += s1;
    sum5 += s5;
  }
  report(6, dominated == 30, seconds_since(t0), 600,
         fmt("restart trend at k = 0.70 on %zu images x 30 seeds: success(5) >= success(1) in %d/30 seeds, "
             "mean %.2f%% vs %.2f%%",
             subset.size(), dominated, sum5 / 30, sum1 / 30));
}

void edge_trend(const Benchmark& b, ModelClassifier& plain, const CellStats& edges3) {
  const auto t0 = Clock::now();
  AttackConfig cfg;
  cfg.edges = 9;
  const CellStats edges9 = attack_corpus(b.attacked, plain, cfg, 1);
  report(7, edges9.success_rate() >= edges3.success_rate() - 2.0, seconds_since(t0), 600,
         fmt("edge trend at k = 0.43: success %.2f%% with 9 edges vs %.2f%% with 3", edges9.success_rate(),
             edges3.success_rate()));
}

void defense_trend(const Benchmark& b, const ToyModel& plain_model, const CellStats& plain_cell) {
  const auto t0 = Clock::now();
  TrainingHyper hp;
  hp.augment_shadows = true;
  const ToyModel robust = train(b.corpus, hp);
  ModelClassifier clf(robust);
  const CellStats cell = attack_corpus(b.attacked, clf, AttackConfig{}, 1);
  const double acc_plain = 100.0 * accuracy(plain_model, b.corpus);
  const double acc_robust = 100.0 * accuracy(robust, b.corpus);
  const bool fails_more = cell.failure_rate() >= 2.0 * plain_cell.failure_rate() && cell.failure_rate() > 0.0;
  const bool costs_more = !std::isnan(cell.mean_queries) && !std::isnan(plain_cell.mean_queries) &&
                          cell.mean_queries > plain_cell.mean_queries;
  const bool accurate = std::abs(acc_plain - acc_robust) <= 2.0;
  report(8, fails_more && costs_more && accurate, seconds_since(t0), 900,
         fmt("defense at k = 0.43: failure %.2f%% vs %.2f%% plain, mean queries %.1f vs %.1f, clean accuracy "
             "%.2f%% vs %.2f%%",
             cell.failure_rate(), plain_cell.failure_rate(), cell.mean_queries, plain_cell.mean_queries, acc_robust,
             acc_plain));
}

// ---------------------------------------------------------------------------

struct SpotCheck {
  const char* date;
  double lat;
  int hour;
  double elevation, azimuth;
};

// NREL SPA (geometric elevation), queried at the matching apparent solar time;
// regenerate with tests/oracles/solar_spa_oracle.py.
const SpotCheck kSpa[] = {
    {"2021-03-20", 0, 9, 44.9974, 90.0116},   {"2021-03-20", 45, 12, 45.0395, 179.9988},
    {"2021-03-20", 60, 15, 20.7867, 229.1424}, {"2021-06-21", 0, 12, 66.5621, 0.0019},
    {"2021-06-21", 45, 15, 47.7296, 254.6971}, {"2021-06-21", 60, 9, 41.9755, 119.2256},
    {"2021-09-22", 0, 15, 44.9991, 270.1024},  {"2021-09-22", 45, 9, 30.1359, 125.1504},
    {"2021-09-22", 60, 12, 30.1189, 179.9990}, {"2021-12-21", 0, 9, 40.4462, 121.5110},
    {"2021-12-21", 45, 12, 21.5603, 179.9992}, {"2021-12-21", 60, 15, -1.1526, 220.4578},
};

void solar_accuracy() {
  const auto t0 = Clock::now();
  double worst_el = 0.0, worst_az = 0.0;
  for (const auto& c : kSpa) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:00:00", c.date, c.hour);
    const auto sun = solar_position({c.lat, 0.0, parse_timestamp(buf)});
    const double daz = std::fmod(std::abs(sun.azimuth - c.azimuth), 360.0);
    worst_el = std::max(worst_el, std::abs(sun.elevation - c.elevation));
    worst_az = std::max(worst_az, std::min(daz, 360.0 - daz));
  }
  report(9, worst_el <= 0.7 && worst_az <= 1.5, seconds_since(t0), 1,
         fmt("solar position: worst error %.3f deg elevation, %.3f deg azimuth over 12 checks", worst_el, worst_az));
}

void scheduled_sweep_rows(const Sample& sign, Classifier& clf) {
  const auto t0 = Clock::now();
  SceneGeometry scene;
  scene.occluder = {{-0.1, 1.0, -0.1}, {0.1, 1.0, -0.1}, {0.1, 1.0, 0.1}, {-0.1, 1.0, 0.1}};
  const SolarContext start{45.0, 0.0, parse_timestamp("2021-03-20T08:25:00")};
  const SolarContext end{45.0, 0.0, parse_timestamp("2021-03-20T08:35:00")};
  const auto frames = scheduled_sweep(scene, start, end, 1s, sign.image, sign.mask, 0.43, clf, sign.label);
  std::vector<double> xs;
  for (const auto& f : frames)
    if (f.shadow) xs.push_back(f.shadow->centroid().x);
  const bool all_shadowed = xs.size() == frames.size();
  const bool monotone = all_shadowed && xs.front() != xs.back() &&
                        (std::is_sorted(xs.begin(), xs.end()) || std::is_sorted(xs.rbegin(), xs.rend()));
  report(10, frames.size() == 601 && monotone, seconds_since(t0), 60,
         fmt("scheduled sweep: %zu rows, centroid x %.3f -> %.3f, monotone %s", frames.size(),
             xs.empty() ? NAN : xs.front(), xs.empty() ? NAN : xs.back(), monotone ? "yes" : "no"));
}

void eot_accounting(const Sample& s) {
  const auto t0 = Clock::now();
  FunctionClassifier never(8, [&](const Image&) {
    ConfidenceVector c(8, 0.0);
    c[s.label] = 1.0;
    return c;
  });
  AttackConfig cfg;
  cfg.use_eot = true;
  cfg.swarm.swarm_size = 3;
  cfg.swarm.max_iters = 2;
  cfg.swarm.restarts = 1;
  const auto r = attack_robust(s.image, s.label, s.mask, never, cfg, 9);
  const std::size_t evaluations = r.trace.size() + 1;  // plus the clean check
  const bool exact = r.queries_used == never.queries() && r.queries_used == 11 * evaluations;
  report(11, exact && evaluations == 7, seconds_since(t0), 1,
         fmt("EOT accounting: %llu queries for %zu cost evaluations", static_cast<unsigned long long>(r.queries_used),
             evaluations));
}

void counter_exactness(ModelClassifier& clf, const Image& img) {
  const auto t0 = Clock::now();
  const auto before = clf.queries();
  {
    std::vector<std::jthread> workers;
    for (int t = 0; t < 8; ++t)
      workers.emplace_back([&] {
        for (int i = 0; i < 125; ++i) clf.predict(img);
      });
  }
  const auto delta = clf.queries() - before;
  report(12, delta == 1000, seconds_since(t0), 5,
         fmt("query counter: delta %llu after 8 workers x 125 queries", static_cast<unsigned long long>(delta)));
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t stride = 1;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--stride") == 0) stride = std::max<std::size_t>(1, std::strtoul(argv[i + 1], nullptr, 10));

  color_round_trip();
  shadow_locality();
  pso_sanity();

  Benchmark b;
  b.corpus = generate_corpus(7, 8, 100);
  for (std::size_t i = 0; i < b.corpus.size(); i += stride) b.attacked.push_back(b.corpus[i]);
  const auto t_train = Clock::now();
  const ToyModel plain_model = train(b.corpus, TrainingHyper{});
  const double train_s = seconds_since(t_train);
  ModelClassifier plain(plain_model);

  CellStats k043;
  k_trend(b, plain, train_s, k043);
  restart_trend(b, plain, 33 * stride);
  edge_trend(b, plain, k043);
  defense_trend(b, plain_model, k043);

  solar_accuracy();
  scheduled_sweep_rows(b.corpus[0], plain);
  eot_accounting(b.corpus[1]);
  counter_exactness(plain, b.corpus[2].image);

  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
