#include "lcwire/reconstruct.hpp"
#include "lcwire/synth.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

using namespace lcwire;

namespace {

using Probs = std::array<double, kNumPairClasses>;

Probs one_hot(PairClass c) {
  Probs p{};
  p[static_cast<int>(c)] = 1.0;
  return p;
}

Wireframe cube() {
  Wireframe wf;
  for (int i = 0; i < 8; ++i) wf.vertices.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b)
      if (std::popcount(static_cast<unsigned>(a ^ b)) == 1) wf.edges.emplace_back(a, b);
  return wf;
}

std::vector<PredictedJunction> unit_junctions(const Wireframe& wf) {
  std::vector<PredictedJunction> j;
  for (std::size_t i = 0; i < wf.vertices.size(); ++i) j.push_back({wf.vertices[i], 1.0, static_cast<int>(i)});
  return j;
}

std::set<Edge> edge_set(const Wireframe& wf) {
  std::set<Edge> s;
  for (const Edge& e : wf.edges) s.insert(Edge(e.a, e.b));
  return s;
}

// Feed a wireframe back through post-processing with unit confidences and D1 edges.
Wireframe reprocess(const Wireframe& wf, const PostprocessParams& params) {
  std::vector<std::pair<int, int>> pairs;
  PairProbabilities probs;
  for (const Edge& e : wf.edges) {
    pairs.emplace_back(e.a, e.b);
    probs.push_back(one_hot(PairClass::D1));
  }
  return postprocess(unit_junctions(wf), pairs, probs, params);
}

LptModel<float> random_model(ModelKind kind, std::uint64_t seed) {
  LptModel<double> m(kind, LptConfig{}, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto* p : m.refs().params) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(p->value.cols(), 1)));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += scale * nd(rng);
  }
  return m.cast<float>();
}

SyntheticScene scene(std::uint64_t seed) { return generate_synthetic_scene(SceneSpec{}, seed); }

}  // namespace

TEST_CASE("junction prediction honors the confidence threshold") {
  const SyntheticScene s = scene(1);
  const LptModel<float> zero(ModelKind::Junction, LptConfig{}, 3);
  ReconstructConfig cfg;
  cfg.patch.num_queries = 32;
  cfg.tau_conf = 0.0;
  const auto all = predict_junctions(zero, s.cloud, cfg);
  CHECK(all.size() == 32);
  for (const auto& j : all) CHECK(j.confidence == doctest::Approx(0.5));
  cfg.tau_conf = 0.51;
  CHECK(predict_junctions(zero, s.cloud, cfg).empty());
  CHECK(predict_junctions(zero, LineCloud{}, cfg).empty());

  const LptModel<float> conn(ModelKind::Connectivity, LptConfig{}, 4);
  CHECK_THROWS_AS(predict_junctions(conn, s.cloud, cfg), Error);
}

TEST_CASE("raising the confidence threshold never adds junctions") {
  const SyntheticScene s = scene(2);
  const LptModel<float> model = random_model(ModelKind::Junction, 5);
  ReconstructConfig cfg;
  cfg.patch.num_queries = 64;
  std::size_t last = std::numeric_limits<std::size_t>::max();
  for (double t : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    cfg.tau_conf = t;
    const auto j = predict_junctions(model, s.cloud, cfg);
    CHECK(j.size() <= last);
    for (const auto& p : j) {
      CHECK(p.confidence >= t);
      CHECK(p.position.allFinite());
    }
    last = j.size();
  }
}

TEST_CASE("pair selection") {
  std::vector<PredictedJunction> two{{Vec3(0, 0, 0), 0.9, 0}, {Vec3(1, 0, 0), 0.8, 1}};
  CHECK(select_pairs(two, 64, 256) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(select_pairs({two[0]}, 64, 256).empty());

  std::vector<PredictedJunction> equal(5, {Vec3::Zero(), 0.5, 0});
  CHECK(select_pairs(equal, 3, 256) == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}});

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<PredictedJunction> j(10);
    for (auto& p : j) p.confidence = u(rng);
    std::vector<std::tuple<double, int, int>> all;
    for (int a = 0; a < 10; ++a)
      for (int b = a + 1; b < 10; ++b) all.emplace_back(-j[a].confidence * j[b].confidence, a, b);
    std::sort(all.begin(), all.end());
    std::vector<std::pair<int, int>> expected;
    for (int k = 0; k < 20; ++k) expected.emplace_back(std::get<1>(all[k]), std::get<2>(all[k]));
    CHECK(select_pairs(j, 64, 20) == expected);
  }
}

TEST_CASE("connectivity probabilities are distributions and deterministic") {
  const SyntheticScene s = scene(7);
  const LptModel<float> model = random_model(ModelKind::Connectivity, 8);
  std::vector<PredictedJunction> j;
  for (const Vec3& v : s.wireframe.vertices) j.push_back({v, 1.0, -1});
  const auto pairs = select_pairs(j, 64, 40);
  const ReconstructConfig cfg;
  const auto p = predict_connectivity(model, s.cloud, j, pairs, cfg);
  REQUIRE(p.size() == pairs.size());
  for (const auto& row : p) {
    CHECK(std::accumulate(row.begin(), row.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    for (double v : row) CHECK(v >= 0.0);
  }
  CHECK(predict_connectivity(model, s.cloud, j, pairs, cfg) == p);
}

TEST_CASE("post-processing traced by hand") {
  const std::vector<PredictedJunction> j{
      {Vec3(0, 0, 0), 0.9, 0}, {Vec3(0, 0, 0.01), 0.8, 1}, {Vec3(5, 0, 0), 0.7, 2}};
  const std::vector<std::pair<int, int>> pairs{{0, 2}, {1, 2}, {0, 1}};
  const PairProbabilities probs{one_hot(PairClass::D1), one_hot(PairClass::D1), one_hot(PairClass::D0)};
  PostprocessStats st;
  const Wireframe wf = postprocess(j, pairs, probs, {0.05, 0.5, 1}, &st);
  CHECK(st.after_nms == 2);
  CHECK(st.edges_d1 == 1);
  CHECK(st.after_adjacency_merge == 2);
  CHECK(st.edges_after_dedup == 1);
  CHECK(st.edges_after_isolated == 0);
  CHECK(wf.vertices.empty());
  CHECK(wf.edges.empty());
  CHECK(st.to_json().find("\"after_nms\"") != std::string::npos);
}

TEST_CASE("duplicate junctions fold into one vertex") {
  // Square plus a duplicate of corner 0 that the D0 class folds into it.
  std::vector<PredictedJunction> j{{Vec3(0, 0, 0), 0.9, 0}, {Vec3(1, 0, 0), 0.9, 1}, {Vec3(1, 1, 0), 0.9, 2},
                                   {Vec3(0, 1, 0), 0.9, 3}, {Vec3(0.2, 0, 0), 0.5, 4}};
  std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}};
  PairProbabilities probs(4, one_hot(PairClass::D1));
  probs.push_back(one_hot(PairClass::D0));
  PostprocessStats st;
  const Wireframe wf = postprocess(j, pairs, probs, {0.1, 0.5, 1}, &st);
  CHECK(st.after_identity_merge == 4);
  CHECK(wf.vertices.size() == 4);
  CHECK(wf.edges.size() == 4);
  CHECK(validate_wireframe(wf).empty());

  // A close duplicate without a D0 pair is suppressed before edges are built.
  j[4].position = Vec3(0.02, 0, 0);
  pairs = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 1}};
  probs.assign(5, one_hot(PairClass::D1));
  const Wireframe merged = postprocess(j, pairs, probs, {0.03, 0.5, 1}, &st);
  CHECK(st.after_nms == 4);
  CHECK(st.edges_d1 == 4);
  CHECK(merged.edges.size() == 4);
  CHECK(merged.vertices.size() == 4);
}

TEST_CASE("a perfect cube is a fixed point") {
  const Wireframe c = cube();
  std::vector<std::pair<int, int>> pairs;
  PairProbabilities probs;
  const std::set<Edge> truth = edge_set(c);
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) {
      pairs.emplace_back(a, b);
      probs.push_back(one_hot(truth.count(Edge(a, b)) ? PairClass::D1 : PairClass::Far));
    }
  PostprocessStats st;
  const Wireframe out = postprocess(unit_junctions(c), pairs, probs, {0.05, 0.5, 1}, &st);
  CHECK(out.vertices == c.vertices);
  CHECK(edge_set(out) == truth);
  CHECK(st.edges_d1 == 12);
  CHECK(st.edges_out == 12);

  // A far junction without any D1 pair disappears.
  auto j = unit_junctions(c);
  j.push_back({Vec3(9, 9, 9), 1.0, 8});
  pairs.emplace_back(0, 8);
  probs.push_back(one_hot(PairClass::Far));
  CHECK(postprocess(j, pairs, probs, {0.05, 0.5, 1}).vertices.size() == 8);
  CHECK(postprocess({}, {}, {}, {}).vertices.empty());
  CHECK_THROWS_AS(postprocess(j, pairs, {}, {}), Error);
}

TEST_CASE("post-processing is idempotent and always valid") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    const int n = std::uniform_int_distribution<int>(0, 20)(rng);
    std::vector<PredictedJunction> j;
    for (int i = 0; i < n; ++i) j.push_back({Vec3(u(rng), u(rng), u(rng)), u(rng), i});
    std::vector<std::pair<int, int>> pairs;
    PairProbabilities probs;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        if (u(rng) > 0.4) continue;
        pairs.emplace_back(a, b);
        Probs p;
        for (double& v : p) v = u(rng) * (1 + 3 * (&v == &p[static_cast<int>(PairClass::D1)]));
        const double sum = std::accumulate(p.begin(), p.end(), 0.0);
        for (double& v : p) v /= sum;
        probs.push_back(p);
      }
    const PostprocessParams params{0.08, 0.3, 1};
    const Wireframe once = postprocess(j, pairs, probs, params);
    CHECK(validate_wireframe(once).empty());
    const Wireframe twice = reprocess(once, params);
    CHECK(twice.vertices == once.vertices);
    CHECK(edge_set(twice) == edge_set(once));
  }
}

TEST_CASE("raising the edge threshold never adds edges before merging") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<PredictedJunction> j;
  for (int i = 0; i < 15; ++i) j.push_back({Vec3(u(rng), u(rng), u(rng)), u(rng), i});
  std::vector<std::pair<int, int>> pairs;
  PairProbabilities probs;
  for (int a = 0; a < 15; ++a)
    for (int b = a + 1; b < 15; ++b) {
      pairs.emplace_back(a, b);
      const double p1 = u(rng);
      probs.push_back({(1 - p1) / 4, (1 - p1) / 4, p1, (1 - p1) / 4, (1 - p1) / 4});
    }
  int last = std::numeric_limits<int>::max();
  for (double te : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    PostprocessStats st;
    postprocess(j, pairs, probs, {0.05, te, 1}, &st);
    CHECK(st.edges_d1 <= last);
    last = st.edges_d1;
  }
}

TEST_CASE("heuristic junction from crossing lines") {
  const Vec3 p(0.1, -0.2, 0.3);
  LineCloud lc;
  lc.segments = {{p - Vec3(0.2, 0, 0), p + Vec3(0.1, 0, 0)},
                 {p - Vec3(0, 0.05, 0), p + Vec3(0, 0.3, 0)},
                 {p + Vec3(0, 0, 0.02), p + Vec3(0, 0, 0.4)}};
  const LinePatch patch = build_patch(lc, p + Vec3(0.01, 0.01, 0.01), 0.05, 64);
  REQUIRE(patch.valid_count() == 3);
  const PredictedJunction j = heuristic_junction(lc, patch, 15.0, 1);
  CHECK(j.confidence == doctest::Approx(1.0));
  CHECK((j.position - p).norm() < 1e-6);

  LineCloud par;
  par.segments = {{Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(0, 0.01, 0), Vec3(1, 0.01, 0)}};
  const LinePatch pp = build_patch(par, Vec3(0.5, 0, 0), 0.05, 64);
  const PredictedJunction q = heuristic_junction(par, pp, 15.0, 1);
  CHECK(q.confidence == 0.0);
  CHECK(q.position == pp.x);

  const LinePatch empty = build_patch(par, Vec3(5, 5, 5), 0.05, 64);
  CHECK(heuristic_junction(par, empty, 15.0, 1).confidence == 0.0);
}

TEST_CASE("heuristic reconstruction of a clean building") {
  SceneSpec spec;
  spec.noise_rel = 0.0;
  spec.clutter_ratio = 0.0;
  const SyntheticScene s = generate_synthetic_scene(spec, 11);
  const ReconstructConfig cfg;
  const Reconstruction r = reconstruct_heuristic(s.cloud, cfg);
  CHECK(validate_wireframe(r.wireframe).empty());
  CHECK(!r.wireframe.edges.empty());
  const Reconstruction again = reconstruct_heuristic(s.cloud, cfg);
  CHECK(again.wireframe.vertices == r.wireframe.vertices);
  CHECK(again.wireframe.edges == r.wireframe.edges);
}

TEST_CASE("end-to-end reconstruction is deterministic") {
  const SyntheticScene s = scene(12);
  const LptModel<float> jm = random_model(ModelKind::Junction, 13), cm = random_model(ModelKind::Connectivity, 14);
  ReconstructConfig cfg;
  cfg.patch.num_queries = 64;
  cfg.tau_conf = 0.0;
  const Reconstruction a = reconstruct(jm, cm, s.cloud, cfg), b = reconstruct(jm, cm, s.cloud, cfg);
  CHECK(a.wireframe.vertices == b.wireframe.vertices);
  CHECK(a.wireframe.edges == b.wireframe.edges);
  CHECK(a.probabilities == b.probabilities);
  CHECK(validate_wireframe(a.wireframe).empty());
  cfg.tau_edge = 2.0;
  CHECK_THROWS_AS(reconstruct(jm, cm, s.cloud, cfg), Error);
}
