#include "gradcheck.hpp"
#include "lcwire/labeling.hpp"
#include "lcwire/lpt.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

using namespace lcwire;
using lcwire::testing::GradientChecker;
using lcwire::testing::random_batch;
using lcwire::testing::tiny_config;

namespace {

PatchBatch permute_lines(const PatchBatch& b, std::mt19937_64& rng) {
  PatchBatch out = b;
  for (int g = 0; g < b.num_patches; ++g) {
    std::vector<int> order(b.valid[g]);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int r = 0; r < b.valid[g]; ++r) out.features.row(g * b.capacity + r) = b.features.row(g * b.capacity + order[r]);
  }
  return out;
}

PatchBatch permute_patches(const PatchBatch& b, const std::vector<int>& order) {
  PatchBatch out = b;
  for (int g = 0; g < b.num_patches; ++g) {
    out.features.middleRows(g * b.capacity, b.capacity) = b.features.middleRows(order[g] * b.capacity, b.capacity);
    out.valid[g] = b.valid[order[g]];
    out.centers[g] = b.centers[order[g]];
  }
  return out;
}

}  // namespace

TEST_CASE("analytic gradients agree with central differences") {
  for (std::uint64_t seed : {11u, 12u}) {
    GradientChecker checker(seed);
    const auto rep = checker.run(100);
    CHECK(rep.probes.size() == 100);
    CHECK(rep.max_rel_error <= 1e-4);
    for (const auto& p : rep.probes)
      if (p.rel_error > 1e-4) MESSAGE(p.name << "[" << p.index << "] analytic " << p.analytic << " numeric " << p.numeric);
  }
}

TEST_CASE("every parameter tensor has a correct gradient") {
  GradientChecker checker(5);
  checker.analytic();
  auto params = checker.params();
  std::mt19937_64 rng(99);
  int checked = 0;
  for (auto* p : params) {
    std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
    const Eigen::Index i = pick(rng);
    double& v = p->value.data()[i];
    const double orig = v, h = 1e-4;
    std::vector<int> s0, sp, sm;
    checker.loss(&s0);
    v = orig + h;
    const double lp = checker.loss(&sp);
    v = orig - h;
    const double lm = checker.loss(&sm);
    v = orig;
    if (sp != s0 || sm != s0) continue;
    const double num = (lp - lm) / (2 * h), ana = p->grad.data()[i];
    const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), lcwire::testing::kGradFloor});
    INFO(p->name);
    CHECK(rel <= 1e-4);
    ++checked;
  }
  CHECK(checked >= static_cast<int>(params.size()) * 3 / 4);
}

TEST_CASE("output layers start at zero: p = 0.5 and zero offsets") {
  std::mt19937_64 rng(1);
  LptModel<double> jm(ModelKind::Junction, tiny_config(), 3);
  LptModel<double> cm(ModelKind::Connectivity, tiny_config(), 4);
  const auto jb = random_batch(5, 8, kSingleFeatureWidth, {8, 3, 1, 6, 2}, rng);
  const auto pb = random_batch(5, 8, kPairFeatureWidth, {8, 3, 1, 6, 2}, rng);
  const auto jo = jm.forward(jb);
  const auto co = cm.forward(pb);
  const auto pj = softmax_rows<double>(jo.logits);
  const auto pc = softmax_rows<double>(co.logits);
  CHECK(jo.logits.rows() == 5);
  CHECK(jo.logits.cols() == 2);
  CHECK(jo.offsets.cols() == 3);
  CHECK(co.logits.cols() == kNumPairClasses);
  CHECK(pj.cwiseAbs().maxCoeff() == doctest::Approx(0.5));
  CHECK(jo.offsets.cwiseAbs().maxCoeff() == 0.0);
  CHECK(pc.maxCoeff() == doctest::Approx(0.2));
  CHECK(pc.minCoeff() == doctest::Approx(0.2));
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  Matrix<double> l(3, 5);
  l << 1, 2, 3, 4, 5, -1000, 0, 1000, 3, 2, 0, 0, 0, 0, 0;
  const auto p = softmax_rows<double>(l);
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0));
  CHECK(p.allFinite());
  CHECK(p(1, 2) == doctest::Approx(1.0));
}

TEST_CASE("loss of zero logits with no positives is ln 2 for junctions") {
  Matrix<double> jl = Matrix<double>::Zero(4, 2), off = Matrix<double>::Zero(4, 3);
  JunctionTargets<double> t;
  t.labels = {0, 0, 0, 0};
  t.regress = {0, 0, 0, 0};
  t.offsets = Matrix<double>::Zero(4, 3);
  Matrix<double> pl = Matrix<double>::Zero(2, 5);
  const auto r = total_loss<double>(jl, off, t, pl, {0, 3}, {});
  CHECK(r.v_clf == doctest::Approx(std::log(2.0)));
  CHECK(r.v_reg == 0.0);
  CHECK(r.empty_positive);
  CHECK(r.e_clf == doctest::Approx(std::log(5.0)));
  CHECK(r.total == doctest::Approx(std::log(2.0) + std::log(5.0)));
  CHECK(r.d_offsets.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("regression term averages squared distances over the masked rows") {
  Matrix<double> jl = Matrix<double>::Zero(3, 2), off(3, 3);
  off << 1, 0, 0, 0, 2, 0, 5, 5, 5;
  JunctionTargets<double> t;
  t.labels = {1, 1, 0};
  t.regress = {1, 1, 0};
  t.offsets = Matrix<double>::Zero(3, 3);
  const auto r = total_loss<double>(jl, off, t, Matrix<double>::Zero(0, 5), {}, {2.0, 1.0});
  CHECK(r.v_reg == doctest::Approx((1.0 + 4.0) / 2.0));
  CHECK(r.total == doctest::Approx(std::log(2.0) + 2.0 * 2.5));
  CHECK(r.d_offsets.row(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("line order inside a patch does not change the features") {
  std::mt19937_64 rng(7);
  GradientChecker checker(21);
  auto& m = checker.junction();
  const auto b = random_batch(6, 8, kSingleFeatureWidth, {8, 5, 2, 7, 1, 4}, rng);
  const auto f0 = m.features(b);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f1 = m.features(permute_lines(b, rng));
    CHECK((f0 - f1).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("patch order permutes the outputs") {
  std::mt19937_64 rng(8);
  GradientChecker checker(22);
  auto& m = checker.connectivity();
  const auto b = random_batch(6, 8, kPairFeatureWidth, {8, 5, 2, 7, 1, 4}, rng);
  std::vector<int> order{3, 0, 5, 1, 4, 2};
  const auto o0 = m.forward(b).logits;
  const auto o1 = m.forward(permute_patches(b, order)).logits;
  for (int g = 0; g < 6; ++g) CHECK((o1.row(g) - o0.row(order[g])).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("padding rows beyond the valid count are ignored") {
  std::mt19937_64 rng(9);
  GradientChecker checker(23);
  auto b = random_batch(3, 8, kSingleFeatureWidth, {4, 2, 0}, rng);
  const auto f0 = checker.junction().features(b);
  for (int g = 0; g < 3; ++g)
    for (int r = b.valid[g]; r < 8; ++r) b.features.row(g * 8 + r).setConstant(123.0);
  CHECK((checker.junction().features(b) - f0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("patches without lines produce finite outputs") {
  std::mt19937_64 rng(10);
  LptModel<float> m(ModelKind::Junction, tiny_config(), 1);
  const auto b = random_batch(3, 8, kSingleFeatureWidth, {0, 0, 0}, rng);
  const auto o = m.forward(b);
  CHECK(o.logits.allFinite());
  CHECK(o.offsets.allFinite());
  const auto none = random_batch(0, 8, kSingleFeatureWidth, {}, rng);
  CHECK(m.forward(none).logits.rows() == 0);
}

TEST_CASE("non-finite inputs are rejected") {
  std::mt19937_64 rng(10);
  LptModel<float> m(ModelKind::Junction, tiny_config(), 1);
  auto b = random_batch(2, 8, kSingleFeatureWidth, {3, 3}, rng);
  b.features(1, 2) = std::nan("");
  CHECK_THROWS(m.forward(b));
}

TEST_CASE("a zero learning rate leaves the parameters unchanged") {
  GradientChecker checker(31);
  checker.analytic();
  auto params = checker.params();
  std::vector<Matrix<double>> before;
  for (auto* p : params) before.push_back(p->value);
  AdamConfig cfg;
  cfg.lr = 0.0;
  Adam<double> adam(cfg);
  adam.step(params);
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value == before[i]);
}

TEST_CASE("adam moves against the gradient and clips the global norm") {
  nn::Parameter<double> p("w", 1, 2);
  p.value << 1.0, -1.0;
  p.grad << 30.0, -40.0;
  Adam<double> adam;
  const double norm = adam.step({&p});
  CHECK(norm == doctest::Approx(50.0));
  // The first bias-corrected step has magnitude lr regardless of scale.
  CHECK(p.value(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
  CHECK(p.value(1) == doctest::Approx(-1.0 + 1e-3).epsilon(1e-6));
}

TEST_CASE("construction and inference are deterministic") {
  std::mt19937_64 r1(5), r2(5);
  LptModel<float> a(ModelKind::Junction, {}, 77), b(ModelKind::Junction, {}, 77);
  const auto ba = random_batch(4, 16, kSingleFeatureWidth, {16, 3, 9, 1}, r1);
  const auto bb = random_batch(4, 16, kSingleFeatureWidth, {16, 3, 9, 1}, r2);
  CHECK(a.features(ba) == b.features(bb));
  LptModel<float> c(ModelKind::Junction, {}, 78);
  CHECK(a.features(ba) != c.features(ba));
}

TEST_CASE("weights round-trip through a file and validate names and shapes") {
  const auto dir = std::filesystem::temp_directory_path() / "lcwire_test_lpt";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(3);
  LptModel<float> j(ModelKind::Junction, tiny_config(), 1), c(ModelKind::Connectivity, tiny_config(), 2);
  write_weights(j, c, dir / "w.lcw", 42);
  const auto loaded = read_weights(dir / "w.lcw");
  CHECK(loaded.step == 42);
  const auto b = random_batch(3, 8, kSingleFeatureWidth, {5, 2, 8}, rng);
  CHECK(loaded.junction.features(b) == j.features(b));

  auto wf = make_weights(j, c);
  auto missing = wf;
  missing.tensors.pop_back();
  CHECK_THROWS_AS(models_from_weights(missing), WeightsError);
  auto extra = wf;
  extra.tensors.push_back(extra.tensors.front());
  extra.tensors.back().name = "junction.bogus";
  CHECK_THROWS_AS(models_from_weights(extra), WeightsError);
  auto shape = wf;
  shape.tensors.front().shape[1] += 1;
  shape.tensors.front().values.resize(shape.tensors.front().shape[0] * shape.tensors.front().shape[1]);
  CHECK_THROWS_AS(models_from_weights(shape), WeightsError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the float model matches its double cast") {
  std::mt19937_64 rng(12);
  LptModel<float> f(ModelKind::Connectivity, tiny_config(), 9);
  const auto d = f.cast<double>();
  const auto b = random_batch(4, 8, kPairFeatureWidth, {8, 4, 2, 6}, rng);
  const Matrix<double> diff = f.forward(b).logits.cast<double>() - d.forward(b).logits;
  CHECK(diff.cwiseAbs().maxCoeff() < 1e-4);
}
