#include "lcwire/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lcwire {

void SampleConfig::validate() const {
  if (!(patch.epsilon > 0)) throw Error("epsilon must be positive");
  if (patch.max_lines < 1 || patch.max_pair_lines < 1) throw Error("patch capacity must be at least 1");
  if (!(junction_fraction >= 0 && junction_fraction <= 1)) throw Error("junction_fraction must lie in [0, 1]");
  if (!(eps_fp > 0)) throw Error("eps_fp must be positive");
  double sum = 0;
  for (double w : pair_mix) {
    if (!(w >= 0)) throw Error("pair_mix weights must be non-negative");
    sum += w;
  }
  if (!(sum > 0)) throw Error("pair_mix must have a positive weight");
  if (!(pair_jitter >= 0) || !(fp_margin > 0)) throw Error("pair sampling parameters out of range");
  if (!(regress_radius > 0)) throw Error("regress_radius must be positive");
}

TrainingSample prepare_sample(const LineCloud& labeled, const Wireframe& gt, const SampleConfig& cfg) {
  if (!labeled.labeled()) throw Error("prepare_sample: cloud carries no labels");
  if (gt.vertices.empty()) throw Error("prepare_sample: empty ground-truth wireframe");
  auto [cloud, sim] = normalize_cloud(labeled);
  TrainingSample s;
  s.similarity = sim;
  s.cloud = std::make_shared<const LineCloud>(std::move(cloud));
  s.index = std::make_shared<const SegmentIndex>(*s.cloud, cfg.patch.epsilon);
  s.gt = transform(gt, sim);
  s.eps_fp = sim.apply_length(cfg.eps_fp);

  const double margin = cfg.fp_margin * s.eps_fp;
  for (const Vec3& p : distinct_endpoints(*s.cloud)) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& v : s.gt.vertices) best = std::min(best, (p - v).norm());
    if (best > margin) s.fp_points.push_back(p);
  }
  return s;
}

JunctionQueries sample_training_queries(const TrainingSample& s, int num_queries, double junction_fraction,
                                        std::uint64_t seed, const PatchConfig& cfg, double regress_radius) {
  if (num_queries < 0) throw Error("sample_training_queries: negative query count");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> points;
  const int num_junction =
      s.gt.vertices.empty() ? 0 : static_cast<int>(std::lround(junction_fraction * num_queries));
  std::normal_distribution<double> jitter(0.0, cfg.epsilon / 2);
  std::uniform_int_distribution<std::size_t> pick(0, s.gt.vertices.empty() ? 0 : s.gt.vertices.size() - 1);
  for (int i = 0; i < num_junction; ++i) {
    const Vec3& v = s.gt.vertices[pick(rng)];
    points.push_back(v + Vec3(jitter(rng), jitter(rng), jitter(rng)));
  }
  const int rest = num_queries - num_junction;
  if (rest > 0 && !s.cloud->empty()) {
    const QuerySample q = sample_query_points(*s.cloud, rest, cfg.density_fraction, rng(),
                                              cfg.resolved_density_radius());
    points.insert(points.end(), q.points.begin(), q.points.end());
  }

  JunctionQueries out;
  out.num_perturbed = num_junction;
  out.offsets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t g = 0; g < points.size(); ++g) {
    LinePatch p = build_patch(*s.cloud, points[g], cfg.epsilon, cfg.max_lines, s.index.get());
    const bool positive = label_patch(p, *s.cloud);
    out.labels.push_back(positive ? 1 : 0);
    char regress = 0;
    if (positive) {
      const JunctionTarget t = junction_target(p, *s.cloud, s.gt);
      out.offsets.row(static_cast<Eigen::Index>(g)) = (t.position - p.x).transpose();
      regress = (t.position - p.x).norm() <= regress_radius * cfg.epsilon;
    }
    out.regress.push_back(regress);
    out.patches.push_back(std::move(p));
  }
  return out;
}

PairQueries sample_training_pairs(const TrainingSample& s, int num_pairs, std::uint64_t seed,
                                  const SampleConfig& cfg) {
  if (num_pairs < 0) throw Error("sample_training_pairs: negative pair count");
  const Wireframe& gt = s.gt;
  const int nv = static_cast<int>(gt.vertices.size());
  if (nv == 0) throw Error("sample_training_pairs: empty ground-truth wireframe");
  PairLabeler labeler(gt, s.eps_fp);
  const Eigen::MatrixXi& hops = labeler.hops();

  std::vector<std::pair<int, int>> by_hops[4];  // 1, 2, >2 at indices 1..3
  for (int a = 0; a < nv; ++a)
    for (int b = a + 1; b < nv; ++b) by_hops[std::min(hops(a, b), 3)].push_back({a, b});

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, s.eps_fp * cfg.pair_jitter);
  auto near = [&](int j) { return Vec3(gt.vertices[j] + Vec3(jitter(rng), jitter(rng), jitter(rng))); };
  auto uniform_index = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto far_point = [&]() -> Vec3 {
    if (!s.fp_points.empty()) return s.fp_points[uniform_index(s.fp_points.size())];
    // No far endpoints: push a junction outward along a random direction.
    Vec3 d(jitter(rng), jitter(rng), jitter(rng));
    if (d.norm() < 1e-12) d = Vec3::UnitX();
    return gt.vertices[uniform_index(nv)] + d.normalized() * (cfg.fp_margin + 1) * s.eps_fp;
  };

  std::discrete_distribution<int> mix(cfg.pair_mix.begin(), cfg.pair_mix.end());
  PairQueries out;
  while (static_cast<int>(out.patches.size()) < num_pairs) {
    int want = mix(rng);
    if (want == static_cast<int>(PairClass::D1) && by_hops[1].empty()) want = static_cast<int>(PairClass::Far);
    if (want == static_cast<int>(PairClass::D2) && by_hops[2].empty()) want = static_cast<int>(PairClass::Far);
    if (want == static_cast<int>(PairClass::Far) && by_hops[3].empty())
      want = by_hops[1].empty() ? static_cast<int>(PairClass::D0) : static_cast<int>(PairClass::D1);

    Vec3 x, y;
    switch (static_cast<PairClass>(want)) {
      case PairClass::FP: {
        x = far_point();
        y = (rng() & 1) ? far_point() : near(static_cast<int>(uniform_index(nv)));
        break;
      }
      case PairClass::D0: {
        const int j = static_cast<int>(uniform_index(nv));
        x = near(j);
        y = near(j);
        break;
      }
      default: {
        const auto& pool = by_hops[want - static_cast<int>(PairClass::D0)];
        const auto [a, b] = pool[uniform_index(pool.size())];
        x = near(a);
        y = near(b);
        break;
      }
    }
    if (rng() & 1) std::swap(x, y);
    if ((x - y).norm() < 1e-12) continue;
    out.classes.push_back(static_cast<int>(labeler(x, y)));
    out.patches.push_back(build_pair_patch(*s.cloud, x, y, cfg.patch.epsilon, cfg.patch.max_pair_lines,
                                           s.index.get()));
  }
  return out;
}

}  // namespace lcwire
