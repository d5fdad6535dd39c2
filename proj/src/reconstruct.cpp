#include "lcwire/reconstruct.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace lcwire {

void ReconstructConfig::validate() const {
  if (!(patch.epsilon > 0)) throw Error("epsilon must be positive");
  if (patch.max_lines < 1 || patch.max_pair_lines < 1) throw Error("patch capacity must be at least 1");
  if (patch.num_queries < 1) throw Error("num_queries must be at least 1");
  if (!(patch.density_fraction >= 0 && patch.density_fraction <= 1))
    throw Error("density_fraction must lie in [0, 1]");
  if (!(tau_conf >= 0)) throw Error("tau_conf must be non-negative");
  if (top_m < 2) throw Error("top_m must be at least 2");
  if (pair_budget < 0) throw Error("pair_budget must be non-negative");
  if (!(tau_edge >= 0 && tau_edge <= 1)) throw Error("tau_edge must lie in [0, 1]");
  if (!(tau_nms >= 0)) throw Error("tau_nms must be non-negative");
  if (h_max < 0) throw Error("h_max must be non-negative");
  if (refine_steps < 0 || refine_steps > 16) throw Error("refine_steps must lie in [0, 16]");
  if (!(heuristic_angle > 0 && heuristic_angle < 90)) throw Error("heuristic_angle must lie in (0, 90)");
  if (heuristic_min_cluster < 1) throw Error("heuristic_min_cluster must be at least 1");
  if (!(heuristic_coverage > 0 && heuristic_coverage <= 1)) throw Error("heuristic_coverage must lie in (0, 1]");
}

namespace {

struct NormalizedCloud {
  LineCloud cloud;
  Similarity similarity;
  SegmentIndex index;

  NormalizedCloud(const LineCloud& lc, double epsilon) {
    auto [c, s] = normalize_cloud(lc);
    cloud = std::move(c);
    similarity = s;
    index = SegmentIndex(cloud, epsilon);
  }
  NormalizedCloud(const NormalizedCloud&) = delete;
  NormalizedCloud& operator=(const NormalizedCloud&) = delete;
};

int argmax(const std::array<double, kNumPairClasses>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

bool stronger(const std::vector<PredictedJunction>& j, int a, int b) {
  if (j[a].confidence != j[b].confidence) return j[a].confidence > j[b].confidence;
  return a < b;
}

std::vector<int> by_confidence(const std::vector<PredictedJunction>& j) {
  std::vector<int> order(j.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return stronger(j, a, b); });
  return order;
}

}  // namespace

std::vector<PredictedJunction> predict_junctions(const LptModel<float>& model, const LineCloud& lc,
                                                 const ReconstructConfig& cfg) {
  if (model.kind() != ModelKind::Junction) throw Error("predict_junctions: expected the junction model");
  if (lc.empty()) return {};
  const NormalizedCloud nc(lc, cfg.patch.epsilon);
  const QuerySample q = sample_query_points(nc.cloud, cfg.patch.num_queries, cfg.patch.density_fraction, cfg.seed,
                                            cfg.patch.resolved_density_radius());
  std::vector<Vec3> points = q.points;
  std::vector<double> min_conf(points.size(), 1.0), conf(points.size(), 0.0);
  for (int pass = 0; pass <= cfg.refine_steps; ++pass) {
    std::vector<LinePatch> patches;
    patches.reserve(points.size());
    for (const Vec3& x : points)
      patches.push_back(build_patch(nc.cloud, x, cfg.patch.epsilon, cfg.patch.max_lines, &nc.index));
    const PatchBatch batch = PatchBatch::from_patches(patches);
    const HeadOutputs<float> out = model.forward(batch);
    const Matrix<float> prob = softmax_rows(out.logits);
    for (std::size_t g = 0; g < points.size(); ++g) {
      conf[g] = prob(static_cast<Eigen::Index>(g), 1);
      min_conf[g] = std::min(min_conf[g], conf[g]);
      points[g] += out.offsets.row(static_cast<Eigen::Index>(g)).transpose().cast<double>();
    }
  }

  std::vector<PredictedJunction> result;
  for (std::size_t g = 0; g < points.size(); ++g) {
    if (min_conf[g] < cfg.tau_conf) continue;
    result.push_back({nc.similarity.invert(points[g]), conf[g], static_cast<int>(g)});
  }
  return result;
}

std::vector<std::pair<int, int>> select_pairs(const std::vector<PredictedJunction>& junctions, int top_m,
                                              int budget) {
  if (junctions.size() < 2 || budget <= 0) return {};
  std::vector<int> top = by_confidence(junctions);
  if (static_cast<int>(top.size()) > top_m) top.resize(std::max(top_m, 0));
  std::sort(top.begin(), top.end());

  struct Candidate {
    double score;
    int a, b;
  };
  std::vector<Candidate> cand;
  for (std::size_t i = 0; i < top.size(); ++i)
    for (std::size_t j = i + 1; j < top.size(); ++j)
      cand.push_back({junctions[top[i]].confidence * junctions[top[j]].confidence, top[i], top[j]});
  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  if (static_cast<int>(cand.size()) > budget) cand.resize(budget);
  std::vector<std::pair<int, int>> out;
  out.reserve(cand.size());
  for (const auto& c : cand) out.emplace_back(c.a, c.b);
  return out;
}

PairProbabilities predict_connectivity(const LptModel<float>& model, const LineCloud& lc,
                                       const std::vector<PredictedJunction>& junctions,
                                       const std::vector<std::pair<int, int>>& pairs,
                                       const ReconstructConfig& cfg) {
  if (model.kind() != ModelKind::Connectivity) throw Error("predict_connectivity: expected the connectivity model");
  if (pairs.empty() || lc.empty()) return PairProbabilities(pairs.size(), {1, 0, 0, 0, 0});
  const NormalizedCloud nc(lc, cfg.patch.epsilon);
  std::vector<LinePatch> patches;
  patches.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    const Vec3 x = nc.similarity.apply(junctions.at(a).position);
    const Vec3 y = nc.similarity.apply(junctions.at(b).position);
    patches.push_back(build_pair_patch(nc.cloud, x, y, cfg.patch.epsilon, cfg.patch.max_pair_lines, &nc.index));
  }
  const PatchBatch batch = PatchBatch::from_patches(patches);
  const Matrix<float> prob = softmax_rows(model.forward(batch).logits);
  PairProbabilities out(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p)
    for (int c = 0; c < kNumPairClasses; ++c) out[p][c] = prob(static_cast<Eigen::Index>(p), c);
  return out;
}

std::string PostprocessStats::to_json() const {
  nlohmann::ordered_json j{{"junctions_in", junctions_in},
                           {"after_nms", after_nms},
                           {"edges_d1", edges_d1},
                           {"after_identity_merge", after_identity_merge},
                           {"after_adjacency_merge", after_adjacency_merge},
                           {"edges_after_dedup", edges_after_dedup},
                           {"edges_after_isolated", edges_after_isolated},
                           {"vertices_out", vertices_out},
                           {"edges_out", edges_out}};
  return j.dump(2);
}

std::vector<int> vertex_nms(const std::vector<PredictedJunction>& junctions, double tau_nms) {
  std::vector<int> kept;
  for (int i : by_confidence(junctions)) {
    bool suppressed = false;
    for (int k : kept)
      if ((junctions[i].position - junctions[k].position).norm() <= tau_nms) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

Wireframe postprocess(const std::vector<PredictedJunction>& junctions,
                      const std::vector<std::pair<int, int>>& pairs, const PairProbabilities& probs,
                      const PostprocessParams& params, PostprocessStats* stats_out) {
  if (probs.size() != pairs.size()) throw Error("postprocess: one probability vector per pair is required");
  const int n = static_cast<int>(junctions.size());
  PostprocessStats stats;
  stats.junctions_in = n;

  // (1) vertex NMS
  std::vector<char> alive(n, 0);
  for (int i : vertex_nms(junctions, params.tau_nms)) alive[i] = 1;
  stats.after_nms = static_cast<int>(std::count(alive.begin(), alive.end(), 1));

  auto valid_pair = [&](int a, int b) { return a >= 0 && b >= 0 && a < n && b < n && a != b; };

  // (2) D1 edges
  std::map<Edge, double> edges;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    if (!valid_pair(a, b) || !alive[a] || !alive[b]) continue;
    const int cls = argmax(probs[p]);
    const double p1 = probs[p][static_cast<int>(PairClass::D1)];
    if (cls != static_cast<int>(PairClass::D1) || p1 < params.tau_edge) continue;
    auto [it, inserted] = edges.emplace(Edge(a, b), p1);
    if (!inserted) it->second = std::max(it->second, p1);
  }
  stats.edges_d1 = static_cast<int>(edges.size());

  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  auto reroute = [&]() {
    std::map<Edge, double> next;
    for (const auto& [e, c] : edges) {
      const int a = find(e.a), b = find(e.b);
      if (a == b) continue;
      auto [it, inserted] = next.emplace(Edge(a, b), c);
      if (!inserted) it->second = std::max(it->second, c);
    }
    edges = std::move(next);
  };
  auto merge = [&](int a, int b) {
    const int keep = stronger(junctions, a, b) ? a : b;
    const int drop = keep == a ? b : a;
    parent[drop] = keep;
    alive[drop] = 0;
  };

  // (3) identity merge for D0 pairs, strongest first
  std::vector<std::size_t> d0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [a, b] = pairs[p];
    if (valid_pair(a, b) && alive[a] && alive[b] && argmax(probs[p]) == static_cast<int>(PairClass::D0))
      d0.push_back(p);
  }
  std::stable_sort(d0.begin(), d0.end(), [&](std::size_t x, std::size_t y) {
    return probs[x][static_cast<int>(PairClass::D0)] > probs[y][static_cast<int>(PairClass::D0)];
  });
  for (std::size_t p : d0) {
    const int a = find(pairs[p].first), b = find(pairs[p].second);
    if (a != b) merge(a, b);
  }
  reroute();
  stats.after_identity_merge = static_cast<int>(std::count(alive.begin(), alive.end(), 1));

  // (4) adjacency merge of close vertices with nearly identical neighborhoods
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<std::set<int>> adj(n);
    for (const auto& [e, c] : edges) {
      adj[e.a].insert(e.b);
      adj[e.b].insert(e.a);
    }
    struct Close {
      double d;
      int a, b;
    };
    std::vector<Close> close;
    for (int a = 0; a < n; ++a) {
      if (!alive[a]) continue;
      for (int b = a + 1; b < n; ++b) {
        if (!alive[b]) continue;
        const double d = (junctions[a].position - junctions[b].position).norm();
        if (d < params.tau_nms) close.push_back({d, a, b});
      }
    }
    std::stable_sort(close.begin(), close.end(), [](const Close& x, const Close& y) { return x.d < y.d; });
    for (const auto& c : close) {
      std::vector<int> diff;
      std::set_symmetric_difference(adj[c.a].begin(), adj[c.a].end(), adj[c.b].begin(), adj[c.b].end(),
                                    std::back_inserter(diff));
      const auto hamming =
          std::count_if(diff.begin(), diff.end(), [&](int v) { return v != c.a && v != c.b; });
      if (hamming <= params.h_max) {
        merge(c.a, c.b);
        reroute();
        changed = true;
        break;
      }
    }
  }
  stats.after_adjacency_merge = static_cast<int>(std::count(alive.begin(), alive.end(), 1));

  // (5) duplicates and self-loops are already folded by reroute()
  reroute();
  stats.edges_after_dedup = static_cast<int>(edges.size());

  // (6) drop connected components made of a single edge
  std::vector<int> degree(n, 0);
  for (const auto& [e, c] : edges) {
    ++degree[e.a];
    ++degree[e.b];
  }
  for (auto it = edges.begin(); it != edges.end();) {
    if (degree[it->first.a] == 1 && degree[it->first.b] == 1) {
      --degree[it->first.a];
      --degree[it->first.b];
      it = edges.erase(it);
    } else {
      ++it;
    }
  }
  stats.edges_after_isolated = static_cast<int>(edges.size());

  Wireframe wf;
  std::vector<int> remap(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!alive[i] || degree[i] == 0) continue;
    remap[i] = static_cast<int>(wf.vertices.size());
    wf.vertices.push_back(junctions[i].position);
    wf.vertex_confidence.push_back(junctions[i].confidence);
  }
  for (const auto& [e, c] : edges) {
    wf.edges.emplace_back(remap[e.a], remap[e.b]);
    wf.edge_confidence.push_back(c);
  }
  stats.vertices_out = static_cast<int>(wf.vertices.size());
  stats.edges_out = static_cast<int>(wf.edges.size());
  if (stats_out) *stats_out = stats;
  return wf;
}

PredictedJunction heuristic_junction(const LineCloud& lc, const LinePatch& patch, double angle_degrees,
                                     int min_cluster) {
  PredictedJunction out{patch.x, 0.0, -1};
  if (patch.members.empty()) return out;
  const double cos_tol = std::cos(angle_degrees * M_PI / 180.0);
  std::vector<Vec3> reps;
  std::vector<int> counts;
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (int m : patch.members) {
    const LineSegment& s = lc.segments[m];
    const Vec3 d = (s.q - s.p).normalized();
    bool placed = false;
    for (std::size_t c = 0; c < reps.size(); ++c)
      if (std::abs(reps[c].dot(d)) >= cos_tol) {
        ++counts[c];
        placed = true;
        break;
      }
    if (!placed) {
      reps.push_back(d);
      counts.push_back(1);
    }
    const Mat3 proj = Mat3::Identity() - d * d.transpose();
    a += proj;
    b += proj * s.p;
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
  const Vec3 lambda = eig.eigenvalues();
  const double tol = 1e-9 * std::max(1.0, lambda.maxCoeff());
  if (lambda.minCoeff() <= tol) return out;  // every line parallel
  Vec3 p = Vec3::Zero();
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = eig.eigenvectors().col(k);
    p += v * (v.dot(b) / lambda[k]);
  }
  const auto strong = std::count_if(counts.begin(), counts.end(), [&](int c) { return c >= min_cluster; });
  out.confidence = std::min(1.0, static_cast<double>(strong) / 3.0);
  out.position = p;
  return out;
}

std::vector<PredictedJunction> heuristic_junctions(const LineCloud& lc, const ReconstructConfig& cfg) {
  if (lc.empty()) return {};
  const NormalizedCloud nc(lc, cfg.patch.epsilon);
  const QuerySample q = sample_query_points(nc.cloud, cfg.patch.num_queries, cfg.patch.density_fraction, cfg.seed,
                                            cfg.patch.resolved_density_radius());
  std::vector<PredictedJunction> out;
  for (std::size_t g = 0; g < q.points.size(); ++g) {
    const LinePatch patch = build_patch(nc.cloud, q.points[g], cfg.patch.epsilon, cfg.patch.max_lines, &nc.index);
    PredictedJunction j = heuristic_junction(nc.cloud, patch, cfg.heuristic_angle, cfg.heuristic_min_cluster);
    if (j.confidence < cfg.tau_conf) continue;
    j.position = nc.similarity.invert(j.position);
    j.query = static_cast<int>(g);
    out.push_back(j);
  }
  return out;
}

PairProbabilities heuristic_connectivity(const LineCloud& lc, const std::vector<PredictedJunction>& junctions,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         const ReconstructConfig& cfg) {
  PairProbabilities out(pairs.size(), {0, 0, 0, 0, 1});
  if (pairs.empty() || lc.empty()) return out;
  const NormalizedCloud nc(lc, cfg.patch.epsilon);
  const double eps = cfg.patch.epsilon;
  const double cos_tol = std::cos(cfg.heuristic_angle * M_PI / 180.0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Vec3 x = nc.similarity.apply(junctions.at(pairs[p].first).position);
    const Vec3 y = nc.similarity.apply(junctions.at(pairs[p].second).position);
    const double len = (y - x).norm();
    if (len < cfg.tau_nms) {
      out[p] = {0, 1, 0, 0, 0};
      continue;
    }
    const Vec3 u = (y - x) / len;
    std::vector<int> members = nc.index.query(x, eps);
    const std::vector<int> more = nc.index.query(y, eps);
    members.insert(members.end(), more.begin(), more.end());
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());

    std::vector<std::pair<double, double>> spans;
    for (int m : members) {
      const LineSegment& s = nc.cloud.segments[m];
      if (std::abs((s.q - s.p).normalized().dot(u)) < cos_tol) continue;
      auto off_line = [&](const Vec3& e) { return ((e - x) - u * (e - x).dot(u)).norm(); };
      if (off_line(s.p) > eps || off_line(s.q) > eps) continue;
      double t0 = (s.p - x).dot(u) / len, t1 = (s.q - x).dot(u) / len;
      if (t0 > t1) std::swap(t0, t1);
      t0 = std::max(t0, 0.0);
      t1 = std::min(t1, 1.0);
      if (t1 > t0) spans.emplace_back(t0, t1);
    }
    std::sort(spans.begin(), spans.end());
    double covered = 0, reach = 0;
    for (const auto& [t0, t1] : spans) {
      const double start = std::max(t0, reach);
      if (t1 > start) covered += t1 - start;
      reach = std::max(reach, t1);
    }
    if (covered >= cfg.heuristic_coverage) out[p] = {0, 0, covered, 0, 1 - covered};
  }
  return out;
}

namespace {

Reconstruction finish(const LineCloud& lc, std::vector<PredictedJunction> raw, const ReconstructConfig& cfg,
                      const std::function<PairProbabilities(const std::vector<PredictedJunction>&,
                                                            const std::vector<std::pair<int, int>>&)>& classify) {
  Reconstruction r;
  const double tau_abs = lc.empty() ? 0.0 : cfg.tau_nms * bbox_diagonal(lc);
  for (int i : vertex_nms(raw, tau_abs)) r.junctions.push_back(raw[i]);
  r.pairs = select_pairs(r.junctions, cfg.top_m, cfg.pair_budget);
  r.probabilities = classify(r.junctions, r.pairs);
  r.wireframe = postprocess(r.junctions, r.pairs, r.probabilities, {tau_abs, cfg.tau_edge, cfg.h_max}, &r.stats);
  r.stats.junctions_in = static_cast<int>(raw.size());
  return r;
}

}  // namespace

Reconstruction reconstruct(const LptModel<float>& junction_model, const LptModel<float>& connectivity_model,
                           const LineCloud& lc, const ReconstructConfig& cfg) {
  cfg.validate();
  return finish(lc, predict_junctions(junction_model, lc, cfg), cfg,
                [&](const auto& j, const auto& p) { return predict_connectivity(connectivity_model, lc, j, p, cfg); });
}

Reconstruction reconstruct_heuristic(const LineCloud& lc, const ReconstructConfig& cfg) {
  cfg.validate();
  return finish(lc, heuristic_junctions(lc, cfg), cfg,
                [&](const auto& j, const auto& p) { return heuristic_connectivity(lc, j, p, cfg); });
}

}  // namespace lcwire
