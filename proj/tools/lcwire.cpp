#include "lcwire/config.hpp"
#include "lcwire/io.hpp"
#include "lcwire/labeling.hpp"
#include "lcwire/metrics.hpp"
#include "lcwire/patch.hpp"
#include "lcwire/reconstruct.hpp"
#include "lcwire/synth.hpp"
#include "lcwire/train.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace lcwire;

namespace {

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::vector<std::string> sets;
  bool force = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--jobs", jobs, "Worker threads across scenes");
    app->add_option("--set", sets, "Override one config key (key=value)");
    app->add_flag("--force", force, "Overwrite existing outputs");
  }

  RunConfig resolve() const {
    ConfigEntries flags;
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      flags.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) flags.emplace_back("seed", std::to_string(*seed));
    if (jobs) flags.emplace_back("jobs", std::to_string(*jobs));
    return resolve_config(config ? std::optional<fs::path>(*config) : std::nullopt, flags);
  }
};

/// Runs fn(0..n-1) on `jobs` threads. The exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(jobs, static_cast<int>(n)); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) throw Error(dir.string() + " is not empty (use --force to overwrite)");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void prepare_out_file(const fs::path& file, bool force) {
  if (fs::exists(file) && !force) throw Error(file.string() + " exists (use --force to overwrite)");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void echo_config(const RunConfig& cfg, const fs::path& path) { write_text(path, cfg.to_text()); }

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

std::uint64_t scene_seed(std::uint64_t seed, std::size_t i) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + i + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

LineCloud label_with(const RunConfig& cfg, const LineCloud& lc, const Wireframe& gt,
                     const std::vector<Camera>* cams) {
  return label_line_cloud(lc, gt, cams, cfg.label.tau_2d, cfg.label.tau_3d * bbox_diagonal(lc));
}

struct LabelSummary {
  std::size_t positives = 0, total = 0;
};

LabelSummary summarize(const LineCloud& lc) {
  LabelSummary s;
  s.total = lc.size();
  for (const auto& l : *lc.labels) s.positives += l.positive;
  return s;
}

std::string percent(std::size_t k, std::size_t n) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(1);
  o << (n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0) << "%";
  return o.str();
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  int count = 1;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  const RunConfig cfg = a.common.resolve();
  const fs::path out(a.out);
  prepare_out_dir(out, a.common.force);
  echo_config(cfg, out / "config.txt");
  parallel_for(static_cast<std::size_t>(a.count), cfg.jobs, [&](std::size_t i) {
    const SyntheticScene s = generate_synthetic_scene(cfg.scene, scene_seed(cfg.seed, i));
    const fs::path dir = out / scene_name(i);
    fs::create_directories(dir);
    const LineCloud lab = label_with(cfg, s.cloud, s.wireframe, s.cameras.empty() ? nullptr : &s.cameras);
    write_line_cloud(lab, dir / "cloud.txt");
    write_wireframe(s.wireframe, dir / "wireframe.obj");
    std::string prov;
    for (int p : s.provenance) prov += std::to_string(p) + "\n";
    write_text(dir / "provenance.txt", prov);
    if (!s.cameras.empty()) {
      write_cameras(s.cameras, dir / "cameras.json");
      write_supports(*s.cloud.supports, dir / "supports.txt");
    }
  });
  std::cout << "wrote " << a.count << " scenes to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// label

struct LabelArgs {
  Common common;
  std::string cloud, gt, out;
  std::optional<std::string> cameras, supports;
};

int run_label(const LabelArgs& a) {
  const RunConfig cfg = a.common.resolve();
  if (a.cameras && !a.supports) throw Error("--cameras requires --supports");
  LineCloud lc = read_line_cloud(a.cloud);
  const Wireframe gt = read_wireframe(a.gt);
  std::vector<Camera> cams;
  if (a.cameras) {
    cams = read_cameras(*a.cameras);
    lc.supports = read_supports(*a.supports, lc.size());
  } else if (a.supports) {
    lc.supports = read_supports(*a.supports, lc.size());
  }
  const LineCloud lab = label_with(cfg, lc, gt, a.cameras ? &cams : nullptr);
  prepare_out_file(a.out, a.common.force);
  write_line_cloud(lab, a.out);
  const LabelSummary s = summarize(lab);
  std::cout << "positive " << s.positives << "/" << s.total << " (" << percent(s.positives, s.total) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::string data, out;
  std::optional<std::string> resume;
};

std::vector<fs::path> scene_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(root.string() + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "cloud.txt")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw Error("no scene directories with cloud.txt under " + root.string());
  return dirs;
}

int run_train(const TrainArgs& a) {
  const RunConfig cfg = a.common.resolve();
  const TrainConfig tc = cfg.train_config();
  const std::vector<fs::path> dirs = scene_dirs(a.data);
  std::vector<TrainingSample> samples(dirs.size());
  parallel_for(dirs.size(), cfg.jobs, [&](std::size_t i) {
    const LineCloud lc = read_line_cloud(dirs[i] / "cloud.txt");
    if (!lc.labels) throw Error((dirs[i] / "cloud.txt").string() + ": cloud is not labeled");
    samples[i] = prepare_sample(lc, read_wireframe(dirs[i] / "wireframe.obj"), tc.sample);
  });

  const fs::path out(a.out);
  prepare_out_dir(out, a.common.force);
  echo_config(cfg, out / "config.txt");
  fs::create_directories(out / "checkpoints");

  Trainer trainer(tc);
  if (a.resume) trainer.resume(read_weights_file(*a.resume));
  auto save_checkpoint = [&] {
    char name[48];
    std::snprintf(name, sizeof name, "step_%08lld.lcw", static_cast<long long>(trainer.steps()));
    write_weights_file(trainer.checkpoint(), out / "checkpoints" / name);
  };
  save_checkpoint();

  std::ofstream csv(out / "loss.csv", std::ios::binary);
  write_loss_header(csv);
  int status = 0;
  try {
    trainer.run(samples, [&](const LossRow& row) {
      write_loss_row(csv, row);
      if (cfg.checkpoint_every > 0 && trainer.steps() % cfg.checkpoint_every == 0) save_checkpoint();
    });
  } catch (const TrainingAborted& e) {
    std::cerr << "lcwire: " << e.what() << "\n";
    status = 1;
  }
  csv.close();
  if (status == 0) {
    write_weights(trainer.junction(), trainer.connectivity(), out / "weights.lcw", trainer.steps());
    std::cout << "trained " << trainer.steps() << " steps, weights in " << (out / "weights.lcw").string() << "\n";
  }
  return status;
}

// ---------------------------------------------------------------------------
// infer

struct InferArgs {
  Common common;
  std::optional<std::string> cloud, out, weights, report, data, out_dir;
  bool heuristic = false;
};

Reconstruction infer_one(const RunConfig& cfg, const LoadedModels* models, const LineCloud& lc) {
  const ReconstructConfig rc = cfg.reconstruct_config();
  return models ? reconstruct(models->junction, models->connectivity, lc, rc) : reconstruct_heuristic(lc, rc);
}

int run_infer(const InferArgs& a) {
  const RunConfig cfg = a.common.resolve();
  if (a.heuristic == static_cast<bool>(a.weights)) throw Error("give exactly one of --weights and --heuristic");
  std::optional<LoadedModels> models;
  if (a.weights) models.emplace(read_weights(*a.weights));
  const LoadedModels* m = models ? &*models : nullptr;

  if (a.cloud) {
    if (!a.out) throw Error("--cloud requires --out");
    if (a.data || a.out_dir) throw Error("--cloud cannot be combined with --data");
    const Reconstruction r = infer_one(cfg, m, read_line_cloud(*a.cloud));
    prepare_out_file(*a.out, a.common.force);
    write_wireframe(r.wireframe, *a.out);
    echo_config(cfg, fs::path(*a.out).string() + ".config.txt");
    if (a.report) write_text(*a.report, r.stats.to_json() + "\n");
    std::cout << r.wireframe.vertices.size() << " vertices, " << r.wireframe.edges.size() << " edges\n";
    return 0;
  }
  if (!a.data || !a.out_dir) throw Error("give --cloud and --out, or --data and --out-dir");
  const std::vector<fs::path> dirs = scene_dirs(*a.data);
  const fs::path out(*a.out_dir);
  prepare_out_dir(out, a.common.force);
  echo_config(cfg, out / "config.txt");
  parallel_for(dirs.size(), cfg.jobs, [&](std::size_t i) {
    const Reconstruction r = infer_one(cfg, m, read_line_cloud(dirs[i] / "cloud.txt"));
    const std::string name = dirs[i].filename().string();
    write_wireframe(r.wireframe, out / (name + ".obj"));
    if (a.report) write_text(out / (name + ".report.json"), r.stats.to_json() + "\n");
  });
  std::cout << "reconstructed " << dirs.size() << " scenes into " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::optional<std::string> pred, gt, pred_dir, gt_dir, json;
};

fs::path gt_for(const fs::path& gt_dir, const fs::path& pred) {
  const fs::path direct = gt_dir / pred.filename();
  if (fs::exists(direct)) return direct;
  const fs::path nested = gt_dir / pred.stem() / "wireframe.obj";
  if (fs::exists(nested)) return nested;
  throw Error("no ground truth for " + pred.filename().string() + " under " + gt_dir.string());
}

int run_eval(const EvalArgs& a) {
  const RunConfig cfg = a.common.resolve();
  if (a.pred) {
    if (!a.gt) throw Error("--pred requires --gt");
    const MetricsReport r = evaluate(read_wireframe(*a.pred), read_wireframe(*a.gt), cfg.eval);
    std::cout << r.table();
    if (a.json) write_text(*a.json, r.to_json() + "\n");
    return 0;
  }
  if (!a.pred_dir || !a.gt_dir) throw Error("give --pred and --gt, or --pred-dir and --gt-dir");
  std::vector<fs::path> preds;
  for (const auto& e : fs::directory_iterator(*a.pred_dir))
    if (e.is_regular_file() && e.path().extension() == ".obj") preds.push_back(e.path());
  std::sort(preds.begin(), preds.end());
  if (preds.empty()) throw Error("no .obj predictions in " + *a.pred_dir);
  std::vector<fs::path> gts;
  for (const auto& p : preds) gts.push_back(gt_for(*a.gt_dir, p));
  std::vector<MetricsReport> reports(preds.size());
  parallel_for(preds.size(), cfg.jobs, [&](std::size_t i) {
    reports[i] = evaluate(read_wireframe(preds[i]), read_wireframe(gts[i]), cfg.eval);
  });
  std::vector<std::string> names;
  for (const auto& p : preds) names.push_back(p.stem().string());
  std::cout << batch_table(names, reports);
  if (a.json) write_text(*a.json, batch_json(names, reports) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// inspect-patch

struct InspectArgs {
  Common common;
  std::string cloud;
  std::vector<double> point;
  double eps = 0.0;
  int max_lines = 0;
};

int run_inspect(const InspectArgs& a) {
  const RunConfig cfg = a.common.resolve();
  if (a.point.size() != 3) throw Error("--point expects three coordinates");
  if (!(a.eps >= 0)) throw Error("--eps must be non-negative");
  const LineCloud lc = read_line_cloud(a.cloud);
  const Vec3 x(a.point[0], a.point[1], a.point[2]);
  const int cap = a.max_lines > 0 ? a.max_lines : std::max<int>(1, static_cast<int>(lc.size()));
  LinePatch patch;
  patch.x = x;
  if (a.eps > 0) {
    const SegmentIndex index(lc, a.eps);
    patch = build_patch(lc, x, a.eps, cap, &index);
  } else {
    patch.members = brute_force_members(lc, x, 0.0);
  }
  std::cout << "patch at " << format_real(x.x()) << " " << format_real(x.y()) << " " << format_real(x.z())
            << " eps " << format_real(a.eps) << "\n";
  if (patch.members.empty()) {
    std::cout << "empty patch\n";
    return 0;
  }
  const PredictedJunction h = heuristic_junction(lc, patch, cfg.infer.heuristic_angle, 1);
  std::cout << patch.valid_count() << " members, direction confidence " << format_real(h.confidence) << "\n";
  std::cout << "segment distance dx dy dz\n";
  for (int m : patch.members) {
    const LineSegment& s = lc.segments[m];
    const Vec3 d = (s.q - s.p).normalized();
    std::cout << m << " " << format_real(point_to_line_distance(x, s)) << " " << format_real(d.x()) << " "
              << format_real(d.y()) << " " << format_real(d.z()) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Building wireframe reconstruction from 3D line clouds"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate labeled synthetic scenes");
  synth.common.attach(s);
  s->add_option("--count", synth.count, "Number of scenes")->check(CLI::PositiveNumber);
  s->add_option("--out", synth.out, "Output directory")->required();

  LabelArgs label;
  auto* l = app.add_subcommand("label", "Label a line cloud against a ground-truth wireframe");
  label.common.attach(l);
  l->add_option("--cloud", label.cloud, "Line cloud")->required();
  l->add_option("--gt", label.gt, "Ground-truth wireframe (OBJ)")->required();
  l->add_option("--cameras", label.cameras, "Cameras (JSON)");
  l->add_option("--supports", label.supports, "2D supports sidecar");
  l->add_option("--out", label.out, "Labeled cloud")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train both models on a scene directory");
  train.common.attach(t);
  t->add_option("--data", train.data, "Directory of scene_* folders")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--resume", train.resume, "Checkpoint to resume from");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Reconstruct wireframes");
  infer.common.attach(i);
  i->add_option("--cloud", infer.cloud, "Line cloud");
  i->add_option("--out", infer.out, "Output wireframe (OBJ)");
  i->add_option("--data", infer.data, "Directory of scene_* folders");
  i->add_option("--out-dir", infer.out_dir, "Output directory for --data");
  i->add_option("--weights", infer.weights, "Trained weights");
  i->add_flag("--heuristic", infer.heuristic, "Use the training-free baseline");
  i->add_option("--report", infer.report, "Per-stage counts (JSON); a flag value is ignored with --data");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score predicted wireframes");
  eval.common.attach(e);
  e->add_option("--pred", eval.pred, "Predicted wireframe");
  e->add_option("--gt", eval.gt, "Ground-truth wireframe");
  e->add_option("--pred-dir", eval.pred_dir, "Directory of predicted .obj files");
  e->add_option("--gt-dir", eval.gt_dir, "Ground truth: same file names or scene_* folders");
  e->add_option("--json", eval.json, "Also write the report as JSON");

  InspectArgs inspect;
  auto* p = app.add_subcommand("inspect-patch", "Print the lines of one patch");
  inspect.common.attach(p);
  p->add_option("--cloud", inspect.cloud, "Line cloud")->required();
  p->add_option("--point", inspect.point, "Query point x y z")->expected(3)->required();
  p->add_option("--eps", inspect.eps, "Radius in cloud units")->required();
  p->add_option("--max-lines", inspect.max_lines, "Keep at most this many lines (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (*s) return run_synth(synth);
    if (*l) return run_label(label);
    if (*t) return run_train(train);
    if (*i) return run_infer(infer);
    if (*e) return run_eval(eval);
    if (*p) return run_inspect(inspect);
  } catch (const std::exception& err) {
    std::cerr << "lcwire: error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
