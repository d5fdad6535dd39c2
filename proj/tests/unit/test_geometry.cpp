#include "lcwire/geometry.hpp"

#include <doctest.h>

#include <algorithm>
#include <queue>
#include <random>

using namespace lcwire;

namespace {

// Independent BFS over an edge list, no shared code with the library.
std::vector<std::vector<int>> all_pairs_bfs(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> nbr(n);
  for (const Edge& e : edges) {
    nbr[e.a].push_back(e.b);
    nbr[e.b].push_back(e.a);
  }
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (int s = 0; s < n; ++s) {
    std::queue<int> q;
    q.push(s);
    dist[s][s] = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : nbr[u])
        if (dist[s][v] < 0) {
          dist[s][v] = dist[s][u] + 1;
          q.push(v);
        }
    }
  }
  return dist;
}

Wireframe cube() {
  Wireframe wf;
  for (int i = 0; i < 8; ++i) wf.vertices.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  for (int i = 0; i < 8; ++i)
    for (int bit : {1, 2, 4})
      if (!(i & bit)) wf.edges.emplace_back(i, i | bit);
  return wf;
}

LineCloud random_cloud(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  LineCloud lc;
  for (int i = 0; i < n; ++i) lc.segments.push_back({Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng))});
  return lc;
}

}  // namespace

TEST_CASE("point to line distance examples") {
  const LineSegment x_axis{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK(point_to_line_distance(Vec3(0, 0, 0), x_axis) == 0.0);
  CHECK(point_to_line_distance(Vec3(0, 1, 0), x_axis) == doctest::Approx(1.0));
  CHECK(point_to_line_distance(Vec3(3, 4, 0), LineSegment{Vec3(0, 0, 0), Vec3(0, 0, 5)}) == doctest::Approx(5.0));
  // Beyond the segment end the distance is still to the infinite line.
  CHECK(point_to_line_distance(Vec3(10, 2, 0), x_axis) == doctest::Approx(2.0));
  CHECK_THROWS_AS(point_to_line_distance(Vec3(1, 1, 1), LineSegment{Vec3(1, 2, 3), Vec3(1, 2, 3)}), GeometryError);
}

TEST_CASE("point to line distance ignores endpoint order and direction scale") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int t = 0; t < 200; ++t) {
    const Vec3 p(u(rng), u(rng), u(rng)), q(u(rng), u(rng), u(rng)), x(u(rng), u(rng), u(rng));
    double k = u(rng);
    if (std::abs(k) < 0.1) k = 0.5;
    const double d = point_to_line_distance(x, LineSegment{p, q});
    CHECK(point_to_line_distance(x, LineSegment{q, p}) == doctest::Approx(d).epsilon(1e-9));
    CHECK(point_to_line_distance(x, LineSegment{p, p + k * (q - p)}) == doctest::Approx(d).epsilon(1e-9));
    // Oracle: project onto the line and measure the residual.
    const Vec3 dir = (q - p).normalized();
    const Vec3 foot = p + (x - p).dot(dir) * dir;
    CHECK(d == doctest::Approx((x - foot).norm()).epsilon(1e-9));
  }
}

TEST_CASE("graph distance examples") {
  Wireframe square;
  square.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  square.edges = {Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)};
  CHECK(graph_distance(square, 1, 1, 2) == 0);
  CHECK(graph_distance(square, 0, 1, 2) == 1);
  CHECK(graph_distance(square, 0, 2, 2) == 2);
  CHECK_FALSE(graph_distance(square, 0, 2, 1).has_value());
  CHECK_THROWS_AS(graph_distance(square, 0, 4, 2), GeometryError);

  Wireframe split = square;
  split.vertices.push_back(Vec3(5, 5, 5));
  CHECK_FALSE(graph_distance(split, 0, 4, 10).has_value());
}

TEST_CASE("graph distance matches an all-pairs BFS and is a metric") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 9)(rng);
    Wireframe wf;
    for (int i = 0; i < n; ++i) wf.vertices.emplace_back(i, i * i, 0);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b)
        if (std::bernoulli_distribution(0.3)(rng)) wf.edges.emplace_back(a, b);
    const auto oracle = all_pairs_bfs(n, wf.edges);
    const int cap = n;
    const auto hops = hop_matrix(wf, 2);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const auto d = graph_distance(wf, a, b, cap);
        CHECK(d.has_value() == (oracle[a][b] >= 0));
        if (d) CHECK(*d == oracle[a][b]);
        CHECK(graph_distance(wf, b, a, cap) == d);
        const int capped = oracle[a][b] < 0 || oracle[a][b] > 2 ? 3 : oracle[a][b];
        CHECK(hops(a, b) == capped);
        for (int c = 0; c < n; ++c) {
          const auto ac = graph_distance(wf, a, c, cap), cb = graph_distance(wf, c, b, cap);
          if (ac && cb) {
            REQUIRE(d.has_value());
            CHECK(*d <= *ac + *cb);
          }
        }
      }
  }
}

TEST_CASE("wireframe validation examples") {
  CHECK(validate_wireframe(cube()).empty());

  Wireframe loop = cube();
  loop.edges.push_back(Edge(2, 2));
  const auto v1 = validate_wireframe(loop);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0] == "self-loop@2");

  Wireframe dup;
  dup.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  dup.edges = {Edge(0, 1), Edge(1, 0)};
  const auto v2 = validate_wireframe(dup);
  REQUIRE(v2.size() == 1);
  CHECK(v2[0].rfind("duplicate-edge", 0) == 0);

  Wireframe dangling;
  dangling.vertices = {Vec3(0, 0, 0)};
  dangling.edges = {Edge(0, 3)};
  CHECK_FALSE(validate_wireframe(dangling).empty());

  Wireframe twin;
  twin.vertices = {Vec3(0, 0, 0), Vec3(0, 0, 1e-9), Vec3(1, 0, 0)};
  twin.edges = {Edge(0, 2), Edge(1, 2)};
  CHECK_FALSE(validate_wireframe(twin).empty());
}

TEST_CASE("normalize a single segment") {
  LineCloud lc;
  lc.segments.push_back({Vec3(0, 0, 0), Vec3(2, 0, 0)});
  const auto [n, sim] = normalize_cloud(lc);
  CHECK(sim.scale == doctest::Approx(0.5));
  CHECK((n.segments[0].p - Vec3(-0.5, 0, 0)).norm() < 1e-12);
  CHECK((n.segments[0].q - Vec3(0.5, 0, 0)).norm() < 1e-12);
  CHECK_THROWS_AS(normalize_cloud(LineCloud{}), GeometryError);
}

TEST_CASE("normalization round-trips and is idempotent") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const LineCloud lc = random_cloud(rng, std::uniform_int_distribution<int>(1, 50)(rng));
    const auto [n, sim] = normalize_cloud(lc);
    CHECK(bbox_diagonal(n) == doctest::Approx(1.0));
    Vec3 centroid = Vec3::Zero();
    for (const auto& s : n.segments) centroid += s.p + s.q;
    CHECK((centroid / (2.0 * n.size())).norm() < 1e-9);
    const LineCloud back = transform(n, sim.inverse());
    for (std::size_t i = 0; i < lc.size(); ++i) {
      CHECK((back.segments[i].p - lc.segments[i].p).norm() < 1e-9);
      CHECK((back.segments[i].q - lc.segments[i].q).norm() < 1e-9);
      CHECK((sim.invert(n.segments[i].p) - lc.segments[i].p).norm() < 1e-9);
    }
    const auto [n2, sim2] = normalize_cloud(n);
    CHECK(std::abs(sim2.scale - 1.0) < 1e-9);
    CHECK(sim2.center.norm() < 1e-9);
  }
}

TEST_CASE("parallel lists must match the segment count") {
  LineCloud lc;
  lc.segments.push_back({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  lc.check_parallel();
  lc.labels = std::vector<LineLabel>(2);
  CHECK_THROWS_AS(lc.check_parallel(), GeometryError);
}

TEST_CASE("camera projection and validity") {
  Camera c;
  c.K << 100, 0, 50, 0, 100, 40, 0, 0, 1;
  c.width = 100;
  c.height = 80;
  CHECK(c.check().empty());
  const auto px = c.project(Vec3(0.1, 0.2, 2.0));
  REQUIRE(px.has_value());
  CHECK(px->x() == doctest::Approx(55.0));
  CHECK(px->y() == doctest::Approx(50.0));
  CHECK_FALSE(c.project(Vec3(0, 0, -1)).has_value());
  Camera bad = c;
  bad.R(0, 0) = -1;  // reflection
  CHECK_FALSE(bad.check().empty());
}
