#include "lcwire/patch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <tuple>
#include <unordered_map>

namespace lcwire {

SegmentIndex::SegmentIndex(const LineCloud& lc, double epsilon, int max_cells_per_axis)
    : cloud_(&lc), epsilon_(epsilon) {
  if (!(epsilon > 0)) throw GeometryError("SegmentIndex: epsilon must be positive");
  if (lc.empty()) return;

  Vec3 lo = lc.segments.front().p, hi = lo;
  for (const auto& s : lc.segments) {
    lo = lo.cwiseMin(s.p).cwiseMin(s.q);
    hi = hi.cwiseMax(s.p).cwiseMax(s.q);
  }
  origin_ = lo.array() - epsilon;
  const Vec3 extent = (hi - lo).array() + 2 * epsilon;
  cell_ = std::max(epsilon, extent.maxCoeff() / max_cells_per_axis);
  for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::ceil(extent[a] / cell_)));

  const double reach = epsilon + cell_ * std::sqrt(3.0) / 2 + 1e-12;
  const std::int64_t num_cells = static_cast<std::int64_t>(dims_[0]) * dims_[1] * dims_[2];
  std::vector<std::pair<std::int64_t, int>> pairs;

  auto center_of = [&](int i, int j, int k) {
    return Vec3(origin_.x() + (i + 0.5) * cell_, origin_.y() + (j + 0.5) * cell_,
                origin_.z() + (k + 0.5) * cell_);
  };
  auto clamp_index = [&](double v, int axis) {
    return std::clamp(static_cast<int>(std::floor((v - origin_[axis]) / cell_)), 0, dims_[axis] - 1);
  };

  for (int li = 0; li < static_cast<int>(lc.size()); ++li) {
    const LineSegment& seg = lc.segments[li];
    const Vec3 d = seg.q - seg.p;
    int a = 0;
    d.cwiseAbs().maxCoeff(&a);
    const int b = (a + 1) % 3, c = (a + 2) % 3;
    // A cell center within `reach` of the line has its closest line point in
    // the slab [layer - reach, layer + reach] along the dominant axis a.
    for (int ia = 0; ia < dims_[a]; ++ia) {
      const double a0 = origin_[a] + ia * cell_ - reach;
      const double a1 = origin_[a] + (ia + 1) * cell_ + reach;
      double t0 = (a0 - seg.p[a]) / d[a], t1 = (a1 - seg.p[a]) / d[a];
      if (t0 > t1) std::swap(t0, t1);
      const Vec3 u = seg.p + t0 * d, v = seg.p + t1 * d;
      const int b0 = clamp_index(std::min(u[b], v[b]) - reach, b);
      const int b1 = clamp_index(std::max(u[b], v[b]) + reach, b);
      const int c0 = clamp_index(std::min(u[c], v[c]) - reach, c);
      const int c1 = clamp_index(std::max(u[c], v[c]) + reach, c);
      // Skip layers the slab cannot reach inside the domain.
      if (std::max(u[b], v[b]) + reach < origin_[b] || std::min(u[b], v[b]) - reach > origin_[b] + dims_[b] * cell_ ||
          std::max(u[c], v[c]) + reach < origin_[c] || std::min(u[c], v[c]) - reach > origin_[c] + dims_[c] * cell_)
        continue;
      for (int ib = b0; ib <= b1; ++ib) {
        for (int ic = c0; ic <= c1; ++ic) {
          int idx[3];
          idx[a] = ia;
          idx[b] = ib;
          idx[c] = ic;
          if (point_to_line_distance(center_of(idx[0], idx[1], idx[2]), seg) <= reach)
            pairs.emplace_back(cell_id(idx[0], idx[1], idx[2]), li);
        }
      }
    }
  }

  // Counting sort into CSR; stable, so each cell lists lines in index order.
  offsets_.assign(num_cells + 1, 0);
  for (const auto& [cell, li] : pairs) ++offsets_[cell + 1];
  for (std::int64_t i = 0; i < num_cells; ++i) offsets_[i + 1] += offsets_[i];
  entries_.resize(pairs.size());
  std::vector<std::uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const auto& [cell, li] : pairs) entries_[cursor[cell]++] = li;
}

bool SegmentIndex::contains(const Vec3& x) const {
  if (!cloud_ || cloud_->empty()) return false;
  for (int a = 0; a < 3; ++a) {
    const double rel = (x[a] - origin_[a]) / cell_;
    if (!(rel >= 0) || rel >= dims_[a]) return false;
  }
  return true;
}

std::vector<int> SegmentIndex::query(const Vec3& x, double epsilon) const {
  if (!cloud_) return {};
  if (epsilon > epsilon_ || !contains(x)) return brute_force_members(*cloud_, x, epsilon);
  int idx[3];
  for (int a = 0; a < 3; ++a) idx[a] = static_cast<int>(std::floor((x[a] - origin_[a]) / cell_));
  const std::int64_t cell = cell_id(idx[0], idx[1], idx[2]);
  std::vector<int> out;
  for (std::uint32_t k = offsets_[cell]; k < offsets_[cell + 1]; ++k) {
    const int li = entries_[k];
    if (point_to_line_distance(x, cloud_->segments[li]) <= epsilon) out.push_back(li);
  }
  return out;
}

std::vector<int> brute_force_members(const LineCloud& lc, const Vec3& x, double epsilon) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(lc.size()); ++i)
    if (point_to_line_distance(x, lc.segments[i]) <= epsilon) out.push_back(i);
  return out;
}

namespace {

std::vector<int> members_of(const LineCloud& lc, const Vec3& x, double epsilon,
                            const SegmentIndex* index) {
  return index ? index->query(x, epsilon) : brute_force_members(lc, x, epsilon);
}

// Endpoints ordered nearest-to-center first.
std::pair<Vec3, Vec3> ordered_endpoints(const LineSegment& s, const Vec3& center) {
  if ((s.q - center).squaredNorm() < (s.p - center).squaredNorm()) return {s.q, s.p};
  return {s.p, s.q};
}

}  // namespace

LinePatch build_patch(const LineCloud& lc, const Vec3& x, double epsilon, int max_lines,
                      const SegmentIndex* index) {
  if (!(epsilon > 0)) throw GeometryError("build_patch: epsilon must be positive");
  if (max_lines < 1) throw GeometryError("build_patch: N must be >= 1");

  std::vector<std::pair<double, int>> ranked;
  for (int li : members_of(lc, x, epsilon, index))
    ranked.emplace_back(point_to_line_distance(x, lc.segments[li]), li);
  std::sort(ranked.begin(), ranked.end());
  if (static_cast<int>(ranked.size()) > max_lines) ranked.resize(max_lines);

  LinePatch patch;
  patch.x = x;
  patch.features = Eigen::MatrixXd::Zero(max_lines, kSingleFeatureWidth);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto [dist, li] = ranked[r];
    const auto [near, far] = ordered_endpoints(lc.segments[li], x);
    patch.features.row(r) << (near - x).transpose(), (far - x).transpose(), dist;
    patch.members.push_back(li);
  }
  return patch;
}

LinePatch build_pair_patch(const LineCloud& lc, const Vec3& x, const Vec3& y, double epsilon,
                           int max_lines, const SegmentIndex* index) {
  if (!(epsilon > 0)) throw GeometryError("build_pair_patch: epsilon must be positive");
  if (max_lines < 1) throw GeometryError("build_pair_patch: N must be >= 1");

  const auto gx = members_of(lc, x, epsilon, index);
  const auto gy = members_of(lc, y, epsilon, index);
  std::vector<int> both;
  std::set_union(gx.begin(), gx.end(), gy.begin(), gy.end(), std::back_inserter(both));

  struct Row {
    double key;
    int li;
    double dx, dy, source;
  };
  std::vector<Row> rows;
  for (int li : both) {
    const bool in_x = std::binary_search(gx.begin(), gx.end(), li);
    const bool in_y = std::binary_search(gy.begin(), gy.end(), li);
    const double dx = point_to_line_distance(x, lc.segments[li]);
    const double dy = point_to_line_distance(y, lc.segments[li]);
    rows.push_back({std::min(dx, dy), li, dx, dy, in_x && in_y ? 0.0 : (in_x ? -1.0 : 1.0)});
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return std::tie(a.key, a.li) < std::tie(b.key, b.li); });
  if (static_cast<int>(rows.size()) > max_lines) rows.resize(max_lines);

  const Vec3 mid = 0.5 * (x + y);
  LinePatch patch;
  patch.x = x;
  patch.y = y;
  patch.features = Eigen::MatrixXd::Zero(max_lines, kPairFeatureWidth);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto [near, far] = ordered_endpoints(lc.segments[rows[r].li], mid);
    patch.features.row(r) << (near - mid).transpose(), (far - mid).transpose(), rows[r].dx,
        rows[r].dy, rows[r].source;
    patch.members.push_back(rows[r].li);
  }
  return patch;
}

PatchBatch PatchBatch::from_patches(std::span<const LinePatch> patches, std::vector<int> provenance) {
  PatchBatch batch;
  batch.num_patches = static_cast<int>(patches.size());
  if (patches.empty()) return batch;
  batch.capacity = patches.front().capacity();
  batch.feature_width = patches.front().feature_width();
  batch.features.setZero(static_cast<Eigen::Index>(batch.num_patches) * batch.capacity,
                         batch.feature_width);
  for (int g = 0; g < batch.num_patches; ++g) {
    const LinePatch& p = patches[g];
    if (p.capacity() != batch.capacity || p.feature_width() != batch.feature_width)
      throw GeometryError("PatchBatch: patches differ in capacity or feature width");
    batch.features.middleRows(static_cast<Eigen::Index>(g) * batch.capacity, batch.capacity) = p.features;
    batch.valid.push_back(p.valid_count());
    batch.centers.push_back(p.x);
    if (p.y) batch.second_centers.push_back(*p.y);
  }
  if (!batch.second_centers.empty() &&
      static_cast<int>(batch.second_centers.size()) != batch.num_patches)
    throw GeometryError("PatchBatch: mixed single and pair patches");
  if (provenance.empty()) {
    provenance.resize(batch.num_patches);
    std::iota(provenance.begin(), provenance.end(), 0);
  }
  batch.provenance = std::move(provenance);
  return batch;
}

// ---------------------------------------------------------------------------
// sampling

std::vector<int> fps_extend(std::span<const Vec3> points, std::vector<int> selected, int k) {
  const int n = static_cast<int>(points.size());
  if (k < 1 || k > n) throw GeometryError("fps: k out of range");
  if (static_cast<int>(selected.size()) >= k) {
    selected.resize(k);
    return selected;
  }
  if (selected.empty()) throw GeometryError("fps: need at least one seed point");
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  for (int s : selected) {
    if (s < 0 || s >= n) throw GeometryError("fps: seed index out of range");
    taken[s] = 1;
    for (int i = 0; i < n; ++i) mind[i] = std::min(mind[i], (points[i] - points[s]).squaredNorm());
  }
  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_d = -1;
    for (int i = 0; i < n; ++i)
      if (!taken[i] && mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    taken[best] = 1;
    selected.push_back(best);
    for (int i = 0; i < n; ++i) mind[i] = std::min(mind[i], (points[i] - points[best]).squaredNorm());
  }
  return selected;
}

std::vector<int> fps(std::span<const Vec3> points, int k, int seed) {
  if (k < 1 || k > static_cast<int>(points.size())) throw GeometryError("fps: k out of range");
  if (seed < 0 || seed >= static_cast<int>(points.size()))
    throw GeometryError("fps: seed index out of range");
  return fps_extend(points, {seed}, k);
}

int fps_seed_index(std::size_t num_points, std::uint64_t seed) {
  if (num_points == 0) throw GeometryError("fps_seed_index: no points");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return static_cast<int>(rng() % num_points);
}

std::vector<Vec3> distinct_endpoints(const LineCloud& lc) {
  std::map<std::tuple<double, double, double>, int> seen;
  std::vector<Vec3> out;
  for (const auto& s : lc.segments) {
    for (const Vec3* p : {&s.p, &s.q}) {
      if (seen.emplace(std::make_tuple(p->x(), p->y(), p->z()), 0).second) out.push_back(*p);
    }
  }
  return out;
}

std::vector<int> local_density(std::span<const Vec3> points, double radius) {
  const int n = static_cast<int>(points.size());
  std::vector<int> count(n, 0);
  if (n == 0) return count;
  if (!(radius > 0)) {
    std::fill(count.begin(), count.end(), 1);
    return count;
  }
  auto key = [&](const Vec3& p) {
    return std::make_tuple(static_cast<long long>(std::floor(p.x() / radius)),
                           static_cast<long long>(std::floor(p.y() / radius)),
                           static_cast<long long>(std::floor(p.z() / radius)));
  };
  std::map<std::tuple<long long, long long, long long>, std::vector<int>> grid;
  for (int i = 0; i < n; ++i) grid[key(points[i])].push_back(i);
  const double r2 = radius * radius;
  for (int i = 0; i < n; ++i) {
    const auto [cx, cy, cz] = key(points[i]);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (int j : it->second)
            if ((points[i] - points[j]).squaredNorm() <= r2) ++count[i];
        }
  }
  return count;
}

QuerySample sample_query_points(const LineCloud& lc, int num_queries, double density_fraction,
                                std::uint64_t seed, double density_radius) {
  if (lc.empty()) throw GeometryError("sample_query_points: empty cloud");
  if (!(density_fraction >= 0 && density_fraction <= 1))
    throw GeometryError("sample_query_points: density fraction must lie in [0, 1]");
  if (num_queries < 1) throw GeometryError("sample_query_points: G must be >= 1");

  const std::vector<Vec3> pts = distinct_endpoints(lc);
  const int n = static_cast<int>(pts.size());
  QuerySample out;
  if (num_queries >= n) {
    out.points = pts;
    out.saturated = num_queries > n;
    return out;
  }

  const int num_density =
      std::min(num_queries, static_cast<int>(std::ceil(density_fraction * num_queries - 1e-9)));
  std::vector<int> chosen;
  if (num_density > 0) {
    // Weighted sampling without replacement: keep the largest log(u) / w keys.
    const auto density = local_density(pts, density_radius);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, int>> keys(n);
    for (int i = 0; i < n; ++i) {
      const double u = std::max(unif(rng), 1e-300);
      keys[i] = {std::log(u) / density[i], i};
    }
    std::partial_sort(keys.begin(), keys.begin() + num_density, keys.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first || (a.first == b.first && a.second < b.second);
                      });
    for (int i = 0; i < num_density; ++i) chosen.push_back(keys[i].second);
  } else {
    chosen.push_back(fps_seed_index(pts.size(), seed));
  }
  chosen = fps_extend(pts, std::move(chosen), num_queries);
  out.num_density = num_density;
  for (int i : chosen) out.points.push_back(pts[i]);
  return out;
}

}  // namespace lcwire
