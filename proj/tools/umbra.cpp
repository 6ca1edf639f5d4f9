// umbra: shadow attacks, benchmarks, scheduled sweeps and toy-model training.
//
// Exit codes: 0 success, 2 attack failed, 1 error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "umbra/umbra.hpp"

namespace fs = std::filesystem;
using namespace umbra;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitAttackFailed = 2;

struct Common {
  std::uint64_t seed{0};
  std::string out{"."};
};

struct ModelArgs {
  std::string model;
  std::string oracle_cmd;
};

struct SwarmArgs {
  double k{kDefaultShadowCoefficient};
  std::size_t edges{3};
  std::size_t restarts{5};
  std::size_t swarm{40};
  std::size_t iters{100};
  bool eot{false};
  bool stabilize{false};
  std::uint64_t budget{0};  // 0 = unlimited

  AttackConfig config(std::uint64_t seed) const {
    AttackConfig c;
    c.k = k;
    c.edges = edges;
    c.swarm.restarts = restarts;
    c.swarm.swarm_size = swarm;
    c.swarm.max_iters = iters;
    c.swarm.seed = seed;
    c.use_eot = eot;
    c.stabilize = stabilize;
    if (budget > 0) c.query_budget = budget;
    return c;
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "root RNG seed")->envname("UMBRA_SEED")->capture_default_str();
  app->add_option("--out", c.out, "output directory")->capture_default_str();
}

void add_model(CLI::App* app, ModelArgs& m) {
  app->add_option("--model", m.model, "toy-model weights file");
  app->add_option("--oracle-cmd", m.oracle_cmd, "command speaking the JSON-lines oracle protocol");
}

void add_swarm(CLI::App* app, SwarmArgs& s) {
  app->add_option("--k", s.k, "shadow coefficient in (0, 1]")->capture_default_str();
  app->add_option("--edges", s.edges, "shadow polygon vertex count")->capture_default_str();
  app->add_option("--restarts", s.restarts, "optimizer runs before giving up")->capture_default_str();
  app->add_option("--swarm", s.swarm, "particles per swarm")->capture_default_str();
  app->add_option("--iters", s.iters, "iterations per restart")->capture_default_str();
  app->add_flag("--eot", s.eot, "optimize the mean over camera-like transforms");
  app->add_flag("--stabilize", s.stabilize, "maximize the induced wrong label afterwards");
  app->add_option("--budget", s.budget, "query budget per attack, 0 for none")->capture_default_str();
}

// Empty strings come from replayed run_config.ini files and mean "unset".
std::unique_ptr<Classifier> open_classifier(const ModelArgs& m) {
  if (!m.model.empty() && !m.oracle_cmd.empty())
    throw std::invalid_argument("--model and --oracle-cmd are mutually exclusive");
  if (!m.model.empty()) return std::make_unique<ModelClassifier>(ToyModel::load(m.model));
  if (!m.oracle_cmd.empty()) return std::make_unique<ExternalOracle>(m.oracle_cmd);
  throw std::invalid_argument("one of --model or --oracle-cmd is required");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

// Records the effective configuration so the run can be repeated with --config.
void write_run_config(const CLI::App* app, const Common& c) {
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "run_config.ini", app->config_to_str(true, false));
}

std::vector<Sample> read_corpus(const std::string& dir) {
  fs::path p(dir);
  if (fs::is_directory(p)) p /= "manifest.json";
  if (!fs::exists(p)) throw Error("corpus manifest not found: " + p.string());
  auto samples = load_samples(read_manifest(p));
  if (samples.empty()) throw Error("corpus is empty: " + p.string());
  return samples;
}

// ---- attack ---------------------------------------------------------------

struct AttackArgs {
  Common common;
  ModelArgs model;
  SwarmArgs swarm;
  std::string image;
  std::string mask{kFullMask};
  std::string measure_k;
  std::optional<std::size_t> label;
};

int cmd_attack(const CLI::App* app, const AttackArgs& a) {
  const Image x = load_image(a.image);
  const RegionMask mask = load_mask(a.mask, x.width(), x.height());
  AttackConfig cfg = a.swarm.config(a.common.seed);
  std::optional<double> measured;
  if (!a.measure_k.empty()) {
    measured = estimate_k(x, load_image(a.measure_k), mask);
    cfg.k = *measured;
  }
  auto clf = open_classifier(a.model);
  const std::size_t y = a.label ? *a.label : argmax(clf->predict(x));

  const AttackReport r = run_attack(x, y, mask, *clf, cfg, derive_seed(a.common.seed, 1));

  write_run_config(app, a.common);
  const fs::path out(a.common.out);
  nlohmann::json j = to_json(r);
  j["k"] = cfg.k;
  j["measured_k"] = measured ? nlohmann::json(*measured) : nlohmann::json(nullptr);
  write_text(out / "report.json", j.dump(2) + "\n");
  save_image(x, (out / "before.png").string());
  save_image(r.shadow ? apply_shadow(x, *r.shadow) : x, (out / "adv.png").string());

  std::cout << (r.success ? "success" : "failed") << ": label " << y;
  if (r.adversarial_label) std::cout << " -> " << *r.adversarial_label;
  std::cout << " after " << r.queries_used << " queries\n";
  return r.success ? kExitOk : kExitAttackFailed;
}

// ---- bench ----------------------------------------------------------------

struct BenchArgs {
  Common common;
  SwarmArgs swarm;
  std::string corpus;
  std::vector<std::string> models;
  std::string oracle_cmd;
  std::string sweep{"k"};
  std::vector<double> values;
  std::size_t limit{0};
  std::size_t jobs{1};
};

int cmd_bench(const CLI::App* app, const BenchArgs& a) {
  auto samples = read_corpus(a.corpus);
  if (a.limit > 0 && samples.size() > a.limit) samples.resize(a.limit);

  SweepTable table;
  if (a.sweep == "k") table.parameter = SweepParameter::K;
  else if (a.sweep == "edges") table.parameter = SweepParameter::Edges;
  else if (a.sweep == "restarts") table.parameter = SweepParameter::Restarts;
  else throw std::invalid_argument("--sweep must be k, edges or restarts");
  table.values = a.values;
  if (table.values.empty()) {
    switch (table.parameter) {
      case SweepParameter::K: table.values = {0.20, 0.43, 0.70}; break;
      case SweepParameter::Edges: table.values = {3, 4, 5, 6, 7, 8, 9}; break;
      case SweepParameter::Restarts: table.values = {1, 5}; break;
    }
  }
  const AttackConfig base = a.swarm.config(a.common.seed);
  for (double v : table.values) with_value(base, table.parameter, v).validate();

  // Rows are named by file stem unless two stems collide, then by the path as given.
  auto row_name = [&](const std::string& path) {
    const auto stem = fs::path(path).stem();
    const auto same = std::count_if(a.models.begin(), a.models.end(),
                                    [&](const std::string& o) { return fs::path(o).stem() == stem; });
    return same > 1 ? path : stem.string();
  };
  for (const auto& path : a.models) {
    if (path.empty()) continue;
    ModelClassifier clf(ToyModel::load(path));
    table.rows.push_back(
        sweep(row_name(path), samples, clf, base, table.parameter, table.values, a.common.seed, a.jobs));
  }
  if (!a.oracle_cmd.empty()) {
    ExternalOracle clf(a.oracle_cmd);
    table.rows.push_back(sweep("oracle", samples, clf, base, table.parameter, table.values, a.common.seed, a.jobs));
  }
  if (table.rows.empty()) throw std::invalid_argument("bench needs at least one --model or --oracle-cmd");

  write_run_config(app, a.common);
  const fs::path out(a.common.out);
  std::ofstream sr(out / "success_rate.csv"), mq(out / "mean_queries.csv");
  write_success_csv(sr, table);
  write_queries_csv(mq, table);
  write_success_csv(std::cout, table);
  if (!sr || !mq) throw Error("cannot write bench tables in " + out.string());
  return kExitOk;
}

// ---- schedule -------------------------------------------------------------

struct ScheduleArgs {
  Common common;
  ModelArgs model;
  SwarmArgs swarm;
  std::string image;
  std::string mask{kFullMask};
  std::optional<std::size_t> label;
  double latitude{45.0};
  double longitude{0.0};
  std::string start{"2021-03-20T08:25:00"};
  std::string end{"2021-03-20T08:35:00"};
  std::string at;  // defaults to the window midpoint
  long step{1};
  double distance{1.0};
  double sign_width{0.6};
  double sign_height{0.6};
  std::vector<double> occluder;  // x,y,z triples
  bool optimize{false};
};

int cmd_schedule(const CLI::App* app, const ScheduleArgs& a) {
  const SolarContext start{a.latitude, a.longitude, parse_timestamp(a.start)};
  const SolarContext end{a.latitude, a.longitude, parse_timestamp(a.end)};
  start.validate();
  const Timestamp at_time = a.at.empty() ? start.timestamp + (end.timestamp - start.timestamp) / 2
                                         : parse_timestamp(a.at);
  const SolarContext at{a.latitude, a.longitude, at_time};

  const Image sign = load_image(a.image);
  const RegionMask mask = load_mask(a.mask, sign.width(), sign.height());
  auto clf = open_classifier(a.model);
  const std::size_t y = a.label ? *a.label : argmax(clf->predict(sign));

  SceneGeometry scene;
  scene.sign = {-a.sign_width / 2, a.sign_width / 2, -a.sign_height / 2, a.sign_height / 2, sign.width(),
                sign.height()};
  scene.occluder_distance = a.distance;
  nlohmann::json extra;

  if (a.optimize) {
    const auto sched = scheduled_attack(scene, at, sign, y, mask, *clf, a.swarm.config(a.common.seed));
    scene = sched.scene;
    extra = to_json(sched.report);
    if (!sched.report.success || scene.occluder.empty()) {
      write_run_config(app, a.common);
      write_text(fs::path(a.common.out) / "report.json", extra.dump(2) + "\n");
      std::cout << "scheduled attack failed\n";
      return kExitAttackFailed;
    }
  } else if (!a.occluder.empty()) {
    if (a.occluder.size() % 3 != 0 || a.occluder.size() < 9)
      throw std::invalid_argument("--occluder takes at least three x,y,z triples");
    for (std::size_t i = 0; i < a.occluder.size(); i += 3)
      scene.occluder.push_back({a.occluder[i], a.occluder[i + 1], a.occluder[i + 2]});
  } else {
    // A triangle over the sign's upper-left quarter at the scheduled time.
    const double w = sign.width(), h = sign.height();
    const std::vector<Point> target{{0.15 * w, 0.15 * h}, {0.55 * w, 0.2 * h}, {0.25 * w, 0.55 * h}};
    try {
      scene.occluder = backproject(scene.sign, target, solar_position(at), a.distance);
    } catch (const NoShadow&) {
      for (const auto& p : target) {
        const Vec3 q = scene.sign.to_meters(p);
        scene.occluder.push_back({q.x, a.distance, q.z});
      }
    }
  }

  const auto frames = scheduled_sweep(scene, start, end, std::chrono::seconds(a.step), sign, mask,
                                      a.swarm.k, *clf, y);
  write_run_config(app, a.common);
  const fs::path out(a.common.out);
  std::ofstream csv(out / "timeline.csv");
  write_sweep_csv(csv, frames);
  if (!csv) throw Error("cannot write timeline in " + out.string());
  if (a.optimize) write_text(out / "report.json", extra.dump(2) + "\n");

  std::size_t flipped = 0, shadowed = 0;
  for (const auto& f : frames) {
    if (!f.shadow) continue;
    ++shadowed;
    flipped += f.label != y;
  }
  std::cout << frames.size() << " frames, " << shadowed << " shadowed, " << flipped << " misclassified\n";
  return kExitOk;
}

// ---- train / generate -----------------------------------------------------

struct TrainArgs {
  Common common;
  std::string corpus;
  TrainingHyper hp;
  std::string weights{"model.bin"};
};

int cmd_train(const CLI::App* app, TrainArgs a) {
  const auto samples = read_corpus(a.corpus);
  a.hp.seed = a.common.seed;
  std::vector<EpochStats> log;
  const ToyModel model = train(samples, a.hp, &log);

  write_run_config(app, a.common);
  const fs::path out(a.common.out);
  model.save((out / a.weights).string());
  std::ofstream csv(out / "train_log.csv");
  csv << "epoch,loss,accuracy\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f\n", e.epoch, e.loss, e.accuracy);
    csv << buf;
  }
  if (!csv) throw Error("cannot write training log in " + out.string());
  std::cout << "clean accuracy " << accuracy(model, samples) << '\n';
  return kExitOk;
}

struct GenerateArgs {
  Common common;
  std::size_t per_class{100};
};

int cmd_generate(const CLI::App* app, const GenerateArgs& a) {
  const auto samples = generate_corpus(a.common.seed, sign_class_names().size(), a.per_class);
  write_corpus(samples, sign_class_names(), a.common.out);
  write_run_config(app, a.common);
  std::cout << samples.size() << " samples written to " << a.common.out << '\n';
  return kExitOk;
}

// run_config.ini files are flat; their keys belong to the subcommand being run.
class FlatConfig : public CLI::ConfigINI {
 public:
  explicit FlatConfig(std::string section) : section_(std::move(section)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    for (auto& item : items)
      if (item.parents.empty() && !section_.empty()) item.parents.push_back(section_);
    return items;
  }

 private:
  std::string section_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shadow attacks against black-box image classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "flat key=value file, e.g. a run_config.ini; flags on the command line win");
  for (int i = 1; i < argc; ++i) {
    const std::string_view arg = argv[i];
    if (arg == "attack" || arg == "bench" || arg == "schedule" || arg == "train" || arg == "generate") {
      app.config_formatter(std::make_shared<FlatConfig>(std::string(arg)));
      break;
    }
  }

  AttackArgs attack;
  auto* a = app.add_subcommand("attack", "attack one image");
  add_common(a, attack.common);
  add_model(a, attack.model);
  add_swarm(a, attack.swarm);
  a->add_option("--image", attack.image, "input image (PNG or PPM)")->required();
  a->add_option("--mask", attack.mask, "PGM mask or 'full'")->capture_default_str();
  a->add_option("--measure-k", attack.measure_k, "shadowed photo of the same scene; sets k");
  a->add_option("--label", attack.label, "true label (default: the classifier's clean prediction)");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "success-rate and query tables over a corpus");
  add_common(b, bench.common);
  add_swarm(b, bench.swarm);
  b->add_option("--corpus", bench.corpus, "corpus directory or manifest.json")->required();
  b->add_option("--model", bench.models, "weights file, one table row each");
  b->add_option("--oracle-cmd", bench.oracle_cmd, "external oracle, one more table row");
  b->add_option("--sweep", bench.sweep, "k, edges or restarts")->capture_default_str();
  b->add_option("--values", bench.values, "swept values, comma separated")->delimiter(',');
  b->add_option("--limit", bench.limit, "attack only the first N samples");
  b->add_option("--jobs", bench.jobs, "concurrent attacks")->capture_default_str();

  ScheduleArgs sched;
  auto* s = app.add_subcommand("schedule", "sun-driven shadow timeline");
  add_common(s, sched.common);
  add_model(s, sched.model);
  add_swarm(s, sched.swarm);
  s->add_option("--image", sched.image, "sign image")->required();
  s->add_option("--mask", sched.mask, "PGM mask or 'full'")->capture_default_str();
  s->add_option("--label", sched.label, "true label (default: the classifier's clean prediction)");
  s->add_option("--lat", sched.latitude)->capture_default_str();
  s->add_option("--lon", sched.longitude)->capture_default_str();
  s->add_option("--start", sched.start, "YYYY-MM-DDTHH:MM:SS, local mean solar time")->capture_default_str();
  s->add_option("--end", sched.end)->capture_default_str();
  s->add_option("--at", sched.at, "scheduled time (default: window midpoint)");
  s->add_option("--step", sched.step, "seconds")->capture_default_str();
  s->add_option("--distance", sched.distance, "occluder distance from the sign, m")->capture_default_str();
  s->add_option("--sign-width", sched.sign_width, "m")->capture_default_str();
  s->add_option("--sign-height", sched.sign_height, "m")->capture_default_str();
  s->add_option("--occluder", sched.occluder, "x,y,z,x,y,z,... in m")->delimiter(',');
  s->add_flag("--optimize", sched.optimize, "place the occluder by attacking at --at");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train the toy classifier");
  add_common(t, tr.common);
  t->add_option("--corpus", tr.corpus, "corpus directory or manifest.json")->required();
  t->add_flag("--augment-shadows", tr.hp.augment_shadows, "random triangle shadows on every sample");
  t->add_option("--epochs", tr.hp.epochs)->capture_default_str();
  t->add_option("--lr", tr.hp.learning_rate)->capture_default_str();
  t->add_option("--batch", tr.hp.batch)->capture_default_str();
  t->add_option("--weight-decay", tr.hp.weight_decay)->capture_default_str();
  t->add_option("--weights", tr.weights, "file name inside --out")->capture_default_str();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write the synthetic sign corpus");
  add_common(g, gen.common);
  g->add_option("--per-class", gen.per_class)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (a->parsed()) return cmd_attack(a, attack);
    if (b->parsed()) return cmd_bench(b, bench);
    if (s->parsed()) return cmd_schedule(s, sched);
    if (t->parsed()) return cmd_train(t, tr);
    if (g->parsed()) return cmd_generate(g, gen);
  } catch (const std::exception& e) {
    std::cerr << "umbra: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
