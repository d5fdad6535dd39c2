#include "lcwire/patch.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

using namespace lcwire;

namespace {

LineCloud random_cloud(std::mt19937_64& rng, int n, double extent = 1.0) {
  std::uniform_real_distribution<double> u(-extent, extent);
  LineCloud lc;
  while (static_cast<int>(lc.size()) < n) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const Vec3 q = p + 0.2 * Vec3(u(rng), u(rng), u(rng));
    if ((q - p).norm() > 1e-6) lc.segments.push_back({p, q});
  }
  return lc;
}

// Exhaustive greedy oracle: at every step, the chosen point's distance to the
// selected set is the maximum over all unselected points.
bool greedy_optimal(const std::vector<Vec3>& pts, const std::vector<int>& sel) {
  for (std::size_t i = 1; i < sel.size(); ++i) {
    auto mind = [&](int p) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < i; ++j) d = std::min(d, (pts[p] - pts[sel[j]]).norm());
      return d;
    };
    const double chosen = mind(sel[i]);
    for (int p = 0; p < static_cast<int>(pts.size()); ++p) {
      if (std::find(sel.begin(), sel.begin() + static_cast<long>(i), p) != sel.begin() + static_cast<long>(i)) continue;
      if (mind(p) > chosen + 1e-12) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("fps examples") {
  std::vector<Vec3> sq{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0), Vec3(0.5, 0.5, 0)};
  CHECK(fps(sq, 1, 2) == std::vector<int>{2});
  auto all = fps(sq, 5, 0);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4});
  auto four = fps(sq, 4, 0);
  CHECK(four[0] == 0);
  CHECK(four[1] == 2);
  std::sort(four.begin(), four.end());
  CHECK(four == std::vector<int>{0, 1, 2, 3});
  CHECK_THROWS(fps(sq, 0, 0));
  CHECK_THROWS(fps(sq, 6, 0));
}

TEST_CASE("fps is greedy optimal at every step") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 120)(rng);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), t % 2 ? 0.0 : u(rng));
    const int k = std::uniform_int_distribution<int>(1, n)(rng);
    const auto sel = fps(pts, k, std::uniform_int_distribution<int>(0, n - 1)(rng));
    CHECK(std::set<int>(sel.begin(), sel.end()).size() == sel.size());
    CHECK(greedy_optimal(pts, sel));
  }
}

TEST_CASE("fps breaks ties by lowest index") {
  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0)};
  CHECK(fps(pts, 2, 0)[1] == 1);
}

TEST_CASE("query sampling examples") {
  LineCloud lc;
  lc.segments.push_back({Vec3(0, 0, 0), Vec3(1, 0, 0)});
  lc.segments.push_back({Vec3(0, 1, 0), Vec3(1, 1, 0)});

  const auto one = sample_query_points(lc, 1, 0.0, 3, 0.06);
  REQUIRE(one.points.size() == 1);
  const auto ends = distinct_endpoints(lc);
  CHECK(one.points[0] == ends[fps_seed_index(ends.size(), 3)]);

  const auto every = sample_query_points(lc, 4, 0.25, 3, 0.06);
  CHECK_FALSE(every.saturated);
  std::set<std::vector<double>> seen;
  for (const Vec3& p : every.points) seen.insert({p.x(), p.y(), p.z()});
  CHECK(seen.size() == 4);

  const auto over = sample_query_points(lc, 10, 0.25, 3, 0.06);
  CHECK(over.saturated);
  CHECK(over.points.size() == 4);
}

TEST_CASE("density draw takes the cluster, FPS takes the corners") {
  LineCloud lc;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int i = 0; i < 6; ++i) lc.segments.push_back({Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng))});
  const std::vector<Vec3> corners{Vec3(10, 10, 0), Vec3(-10, 10, 0), Vec3(10, -10, 0), Vec3(-10, -10, 0)};
  lc.segments.push_back({corners[0], corners[1]});
  lc.segments.push_back({corners[2], corners[3]});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto q = sample_query_points(lc, 5, 0.2, seed, 0.1);
    REQUIRE(q.points.size() == 5);
    CHECK(q.num_density == 1);
    CHECK(q.points[0].norm() < 0.1);
    for (const Vec3& c : corners)
      CHECK(std::count_if(q.points.begin(), q.points.end(), [&](const Vec3& p) { return p == c; }) == 1);
  }
}

TEST_CASE("sampling is deterministic per seed") {
  std::mt19937_64 rng(8);
  const LineCloud lc = random_cloud(rng, 300);
  const auto a = sample_query_points(lc, 64, 0.25, 11, 0.06);
  const auto b = sample_query_points(lc, 64, 0.25, 11, 0.06);
  const auto c = sample_query_points(lc, 64, 0.25, 12, 0.06);
  CHECK(a.points == b.points);
  CHECK(a.points != c.points);
}

TEST_CASE("indexed membership equals the linear scan") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (int t = 0; t < 10; ++t) {
    const LineCloud lc = random_cloud(rng, std::uniform_int_distribution<int>(1, 1000)(rng));
    const double eps = std::uniform_real_distribution<double>(0.005, 0.2)(rng);
    const SegmentIndex index(lc, eps);
    for (int k = 0; k < 40; ++k) {
      Vec3 x(u(rng), u(rng), u(rng));
      if (k % 4 == 0) x = lc.segments[k % lc.size()].p;  // on a line
      CHECK(index.query(x, eps) == brute_force_members(lc, x, eps));
      CHECK(index.query(x, eps / 2) == brute_force_members(lc, x, eps / 2));
    }
  }
}

TEST_CASE("single patches") {
  LineCloud lc;
  lc.segments.push_back({Vec3(1, 0.1, 0), Vec3(3, 0.1, 0)});
  lc.segments.push_back({Vec3(0, 0, 0.02), Vec3(0, 0, 1)});
  lc.segments.push_back({Vec3(5, 5, 5), Vec3(6, 5, 5)});

  const LinePatch all = build_patch(lc, Vec3::Zero(), 100.0, 8);
  CHECK(all.valid_count() == 3);
  CHECK(all.capacity() == 8);
  CHECK(all.feature_width() == kSingleFeatureWidth);
  CHECK(all.features.bottomRows(5).cwiseAbs().maxCoeff() == 0.0);

  const LinePatch none = build_patch(lc, Vec3(-50, -50, -50), 0.01, 8);
  CHECK(none.valid_count() == 0);
  CHECK(none.features.cwiseAbs().maxCoeff() == 0.0);

  // Nearest lines are kept when over-full; rows hold endpoints relative to x and the distance.
  const LinePatch two = build_patch(lc, Vec3::Zero(), 100.0, 2);
  REQUIRE(two.valid_count() == 2);
  CHECK(two.members[0] == 1);
  CHECK(two.members[1] == 0);
  CHECK(two.features(0, 6) == doctest::Approx(0.0));
  CHECK(two.features(1, 6) == doctest::Approx(0.1));
  CHECK((two.features.row(1).head<3>().transpose() - Vec3(1, 0.1, 0)).norm() < 1e-12);
  CHECK((two.features.row(1).segment<3>(3).transpose() - Vec3(3, 0.1, 0)).norm() < 1e-12);
}

TEST_CASE("patch members satisfy the radius and features are translation covariant") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const LineCloud lc = random_cloud(rng, 400);
  const Vec3 shift(12.5, -3.0, 7.25);
  LineCloud moved = lc;
  for (auto& s : moved.segments) {
    s.p += shift;
    s.q += shift;
  }
  for (int t = 0; t < 30; ++t) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const LinePatch p = build_patch(lc, x, 0.1, 16);
    for (int m : p.members) CHECK(point_to_line_distance(x, lc.segments[m]) <= 0.1);
    const LinePatch q = build_patch(moved, x + shift, 0.1, 16);
    CHECK(p.members == q.members);
    CHECK((p.features - q.features).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("pair patches") {
  LineCloud lc;
  lc.segments.push_back({Vec3(0, -1, 0), Vec3(0, 1, 0)});   // through x
  lc.segments.push_back({Vec3(-1, 0, 0), Vec3(1, 0, 0)});   // through x and y
  lc.segments.push_back({Vec3(4, -1, 0), Vec3(4, 1, 0)});   // through y
  lc.segments.push_back({Vec3(9, 9, 9), Vec3(9, 9, 10)});   // neither
  const Vec3 x(0, 0, 0), y(4, 0, 0);
  const LinePatch p = build_pair_patch(lc, x, y, 0.05, 8);
  REQUIRE(p.valid_count() == 3);
  CHECK(p.feature_width() == kPairFeatureWidth);
  for (int r = 0; r < 3; ++r) {
    const int m = p.members[r];
    const double flag = p.features(r, 8);
    if (m == 0) CHECK(flag == -1.0);
    if (m == 1) CHECK(flag == 0.0);
    if (m == 2) CHECK(flag == 1.0);
    CHECK(p.features(r, 6) == doctest::Approx(point_to_line_distance(x, lc.segments[m])));
    CHECK(p.features(r, 7) == doctest::Approx(point_to_line_distance(y, lc.segments[m])));
  }

  // Disjoint patches: the valid count is the sum.
  LineCloud disjoint;
  disjoint.segments.push_back({Vec3(0, -1, 0), Vec3(0, 1, 0)});
  disjoint.segments.push_back({Vec3(0, 0, -1), Vec3(0, 0, 1)});
  disjoint.segments.push_back({Vec3(4, -1, 0), Vec3(4, 1, 0)});
  disjoint.segments.push_back({Vec3(4, 0, -1), Vec3(4, 0, 1)});
  CHECK(build_pair_patch(disjoint, x, y, 0.05, 8).valid_count() == 4);

  // x's patch inside y's patch: only y's members, flags 0 or +1.
  LineCloud nested;
  nested.segments.push_back({Vec3(-1, 0, 0), Vec3(1, 0, 0)});
  nested.segments.push_back({Vec3(4, -1, 0), Vec3(4, 1, 0)});
  const LinePatch n = build_pair_patch(nested, x, y, 0.05, 8);
  CHECK(n.valid_count() == 2);
  for (int r = 0; r < n.valid_count(); ++r) CHECK((n.features(r, 8) == 0.0 || n.features(r, 8) == 1.0));

  CHECK(build_pair_patch(lc, Vec3(50, 50, 50), Vec3(60, 50, 50), 0.05, 8).valid_count() == 0);
}

TEST_CASE("patch batches stack patches") {
  std::mt19937_64 rng(11);
  const LineCloud lc = random_cloud(rng, 200);
  std::vector<LinePatch> ps;
  for (int i = 0; i < 5; ++i) ps.push_back(build_patch(lc, lc.segments[i].p, 0.1, 16));
  const PatchBatch b = PatchBatch::from_patches(ps);
  CHECK(b.num_patches == 5);
  CHECK(b.features.rows() == 5 * 16);
  for (int g = 0; g < 5; ++g) {
    CHECK(b.valid[g] == ps[g].valid_count());
    CHECK(b.patch_rows(g) == ps[g].features);
  }
  std::vector<LinePatch> mixed{ps[0], build_patch(lc, lc.segments[0].p, 0.1, 8)};
  CHECK_THROWS(PatchBatch::from_patches(mixed));
}
