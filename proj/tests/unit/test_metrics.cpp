#include "lcwire/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace lcwire;

namespace {

Wireframe square(double side = 1.0) {
  Wireframe wf;
  wf.vertices = {Vec3(0, 0, 0), Vec3(side, 0, 0), Vec3(side, side, 0), Vec3(0, side, 0)};
  wf.edges = {Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(0, 3)};
  return wf;
}

Wireframe random_wireframe(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  Wireframe wf;
  for (int i = 0; i < n; ++i) wf.vertices.emplace_back(u(rng), u(rng), u(rng));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (std::bernoulli_distribution(0.35)(rng)) wf.edges.emplace_back(a, b);
  return wf;
}

Wireframe shuffled(const Wireframe& wf, std::mt19937_64& rng) {
  std::vector<int> perm(wf.vertices.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Wireframe out;
  out.vertices.resize(wf.vertices.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.vertices[perm[i]] = wf.vertices[i];
  for (const Edge& e : wf.edges) {
    Edge f;
    f.a = perm[e.b];  // orientation flipped on purpose
    f.b = perm[e.a];
    out.edges.push_back(f);
  }
  std::shuffle(out.edges.begin(), out.edges.end(), rng);
  return out;
}

// Independent greedy junction matcher: input order, nearest unconsumed GT.
std::pair<int, int> greedy_tp(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, double eta) {
  std::vector<char> used(gt.size(), 0);
  int tp = 0;
  for (const Vec3& p : pred) {
    int best = -1;
    double bd = eta;
    for (std::size_t g = 0; g < gt.size(); ++g)
      if (!used[g] && (p - gt[g]).norm() <= bd) {
        if (best < 0 || (p - gt[g]).norm() < bd) best = static_cast<int>(g);
        bd = (p - gt[best]).norm();
      }
    if (best >= 0) {
      used[best] = 1;
      ++tp;
    }
  }
  return {tp, static_cast<int>(pred.size())};
}

// Brute-force minimum assignment over all permutations of the columns.
double brute_assignment(const Eigen::MatrixXd& c) {
  const bool t = c.rows() > c.cols();
  const Eigen::MatrixXd m = t ? Eigen::MatrixXd(c.transpose()) : c;
  std::vector<int> cols(m.cols());
  std::iota(cols.begin(), cols.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) s += m(r, cols[r]);
    best = std::min(best, s);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST_CASE("junction precision and recall examples") {
  const std::vector<Vec3> gt{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  const auto same = junction_pr(gt, {}, gt, 0.25);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  const auto none = junction_pr({}, {}, gt, 0.25);
  CHECK(none.empty_prediction);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  const auto half = junction_pr({Vec3(0, 0, 0.1), Vec3(5, 5, 5)}, {}, gt, 0.25);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
}

TEST_CASE("higher confidence predictions match first") {
  const std::vector<Vec3> gt{Vec3(0, 0, 0)};
  const std::vector<Vec3> pred{Vec3(0.2, 0, 0), Vec3(0.01, 0, 0)};
  const auto pr = junction_pr(pred, {0.1, 0.9}, gt, 0.25);
  CHECK(pr.precision == 0.5);
  CHECK(pr.recall == 1.0);
}

TEST_CASE("junction matching equals the greedy oracle on small instances") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<Vec3> pred, gt;
    for (int i = std::uniform_int_distribution<int>(0, 8)(rng); i > 0; --i) pred.emplace_back(u(rng), u(rng), 0);
    for (int i = std::uniform_int_distribution<int>(1, 8)(rng); i > 0; --i) gt.emplace_back(u(rng), u(rng), 0);
    const double eta = 0.3;
    const auto [tp, np] = greedy_tp(pred, gt, eta);
    const auto pr = junction_pr(pred, {}, gt, eta);
    CHECK(pr.recall == doctest::Approx(static_cast<double>(tp) / gt.size()));
    if (np) CHECK(pr.precision == doctest::Approx(static_cast<double>(tp) / np));
  }
}

TEST_CASE("structural precision and recall examples") {
  const Wireframe gt = square();
  const auto same = structural_pr(gt, gt, 0.1);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);

  Wireframe reversed = gt;
  for (Edge& e : reversed.edges) std::swap(e.a, e.b);
  CHECK(structural_pr(reversed, gt, 0.1).recall == 1.0);

  Wireframe diag = gt;
  diag.edges = {Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(0, 2)};
  const auto pr = structural_pr(diag, gt, 0.1);
  CHECK(pr.precision == 0.75);
  CHECK(pr.recall == 0.75);
}

TEST_CASE("wireframe edit distance examples") {
  const Wireframe gt = square(2.0);
  const WedResult zero = wed(gt, gt, 0.15);
  CHECK(zero == WedResult{});

  Wireframe missing = gt;
  missing.edges.pop_back();
  const WedResult m = wed(missing, gt, 0.15);
  CHECK(m.add_edge.num == 1);
  CHECK(m.add_edge.dist == doctest::Approx(2.0));
  CHECK(m.add_vertex.num == 0);
  CHECK(m.remove_edge.num == 0);
  CHECK(m.total.num == 1);

  Wireframe extra = gt;
  extra.vertices.push_back(Vec3(2, 0, 1.5));
  extra.edges.emplace_back(1, 4);
  const WedResult x = wed(extra, gt, 0.15);
  CHECK(x.remove_edge.num == 1);
  CHECK(x.remove_edge.dist == doctest::Approx(1.5));
  CHECK(x.add_vertex.num == 0);
  CHECK(x.add_edge.num == 0);

  // A GT vertex without a prediction nearby costs its distance to the nearest prediction.
  Wireframe moved = gt;
  moved.vertices[3] = Vec3(0, 2, 1);
  const WedResult v = wed(moved, gt, 0.15);
  CHECK(v.add_vertex.num == 1);
  CHECK(v.add_vertex.dist == doctest::Approx(1.0));
  CHECK(v.add_edge.num == 2);
  CHECK(v.remove_edge.num == 2);

  const WedResult e = wed(Wireframe{}, gt, 0.15, Vec3(1, 1, 0));
  CHECK(e.add_vertex.num == 4);
  CHECK(e.add_vertex.dist == doctest::Approx(4 * std::sqrt(2.0)));
  CHECK(e.add_edge.num == 4);
  CHECK(e.add_edge.dist == doctest::Approx(8.0));
}

TEST_CASE("hungarian assignment is optimal") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int t = 0; t < 200; ++t) {
    const int r = std::uniform_int_distribution<int>(1, 6)(rng), c = std::uniform_int_distribution<int>(1, 6)(rng);
    Eigen::MatrixXd cost(r, c);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = std::round(u(rng));
    const auto assign = hungarian(cost);
    REQUIRE(static_cast<int>(assign.size()) == r);
    double total = 0;
    std::vector<int> used;
    for (int i = 0; i < r; ++i) {
      if (assign[i] < 0) continue;
      total += cost(i, assign[i]);
      used.push_back(assign[i]);
    }
    std::sort(used.begin(), used.end());
    CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    CHECK(static_cast<int>(used.size()) == std::min(r, c));
    CHECK(total == doctest::Approx(brute_assignment(cost)));
  }
}

TEST_CASE("perfect and empty predictions") {
  std::mt19937_64 rng(23);
  const Wireframe gt = random_wireframe(rng, 9);
  const MetricsReport r = evaluate(gt, gt);
  for (const auto& pr : r.vertex) CHECK((pr.precision == 1.0 && pr.recall == 1.0));
  for (const auto& pr : r.structural) CHECK((pr.precision == 1.0 && pr.recall == 1.0));
  CHECK(r.wed == WedResult{});

  const MetricsReport e = evaluate(Wireframe{}, gt);
  for (const auto& pr : e.vertex) CHECK((pr.recall == 0.0 && pr.empty_prediction));
  for (const auto& pr : e.structural) CHECK(pr.recall == 0.0);
  CHECK(e.wed.add_vertex.num == static_cast<int>(gt.vertices.size()));
  CHECK(e.wed.add_edge.num == static_cast<int>(gt.edges.size()));
}

TEST_CASE("metrics ignore ordering and orientation, and totals add up") {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int t = 0; t < 30; ++t) {
    const Wireframe gt = random_wireframe(rng, 8);
    Wireframe pred = gt;
    for (Vec3& v : pred.vertices) v += Vec3(noise(rng), noise(rng), noise(rng));
    if (!pred.edges.empty() && t % 2) pred.edges.erase(pred.edges.begin());
    const MetricsReport a = evaluate(pred, gt), b = evaluate(shuffled(pred, rng), shuffled(gt, rng));
    for (std::size_t k = 0; k < a.vertex.size(); ++k) {
      CHECK(a.vertex[k].precision == doctest::Approx(b.vertex[k].precision));
      CHECK(a.vertex[k].recall == doctest::Approx(b.vertex[k].recall));
      CHECK(a.structural[k].precision == doctest::Approx(b.structural[k].precision));
      CHECK(a.structural[k].recall == doctest::Approx(b.structural[k].recall));
    }
    for (auto [x, y] : {std::pair{a.wed.add_vertex, b.wed.add_vertex}, std::pair{a.wed.add_edge, b.wed.add_edge},
                        std::pair{a.wed.remove_edge, b.wed.remove_edge}}) {
      CHECK(x.num == y.num);
      CHECK(x.dist == doctest::Approx(y.dist));
    }
    const WedResult& w = a.wed;
    CHECK(w.total.num == w.add_vertex.num + w.add_edge.num + w.remove_edge.num);
    CHECK(w.total.dist == doctest::Approx(w.add_vertex.dist + w.add_edge.dist + w.remove_edge.dist));
    CHECK(a.vertex_avg.recall ==
          doctest::Approx((a.vertex[0].recall + a.vertex[1].recall + a.vertex[2].recall) / 3));
  }
}

TEST_CASE("removing a true edge or adding a far edge never helps") {
  std::mt19937_64 rng(25);
  for (int t = 0; t < 30; ++t) {
    const Wireframe gt = random_wireframe(rng, 8);
    if (gt.edges.empty()) continue;
    const double base_recall = structural_pr(gt, gt, 0.25).recall;
    Wireframe fewer = gt;
    fewer.edges.erase(fewer.edges.begin() + static_cast<long>(rng() % fewer.edges.size()));
    CHECK(structural_pr(fewer, gt, 0.25).recall <= base_recall);

    Wireframe more = gt;
    more.vertices.push_back(Vec3(100, 100, 100));
    more.vertices.push_back(Vec3(101, 100, 100));
    more.edges.emplace_back(static_cast<int>(more.vertices.size()) - 2, static_cast<int>(more.vertices.size()) - 1);
    CHECK(structural_pr(more, gt, 0.25).precision <= structural_pr(gt, gt, 0.25).precision);
  }
}

TEST_CASE("reports round-trip through JSON and print every threshold") {
  std::mt19937_64 rng(26);
  const Wireframe gt = random_wireframe(rng, 7);
  Wireframe pred = gt;
  pred.vertices[0] += Vec3(0.2, 0, 0);
  const MetricsReport r = evaluate(pred, gt);
  CHECK(MetricsReport::from_json(r.to_json()) == r);
  const std::string table = r.table();
  for (const char* s : {"0.15", "0.25", "0.35", "0.50", "+vertex", "+edge", "-edge"})
    CHECK(table.find(s) != std::string::npos);
  CHECK(r.vertex_at(0.25).recall == r.vertex[1].recall);
  CHECK_THROWS(r.vertex_at(0.3));
}

TEST_CASE("batch summaries average per-building rows") {
  std::mt19937_64 rng(27);
  const Wireframe gt = random_wireframe(rng, 6);
  const std::vector<MetricsReport> reps{evaluate(gt, gt), evaluate(Wireframe{}, gt)};
  std::vector<BatchRow> rows{summary_row(reps[0]), summary_row(reps[1])};
  const BatchRow m = mean_row(rows);
  CHECK(m.vrecall == doctest::Approx(0.5));
  CHECK(m.srecall == doctest::Approx(0.5));
  CHECK(m.wed_num == doctest::Approx((rows[0].wed_num + rows[1].wed_num) / 2));
  const BatchRow z = mean_row({});
  CHECK(z.vap == 0.0);
  const std::string table = batch_table({"a", "b"}, reps);
  CHECK(table.find("mean") != std::string::npos);
  CHECK(batch_json({"a", "b"}, reps).find("\"mean\"") != std::string::npos);
}
