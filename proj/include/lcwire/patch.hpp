#pragma once

#include "lcwire/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lcwire {

inline constexpr int kSingleFeatureWidth = 7;
inline constexpr int kPairFeatureWidth = 9;

struct PatchConfig {
  double epsilon = 0.03;       // normalized units
  int max_lines = 64;          // N
  int max_pair_lines = 128;    // N_pair
  int num_queries = 256;       // G
  double density_fraction = 0.25;
  double density_radius = 0.0; // <= 0 means 2 * epsilon

  double resolved_density_radius() const { return density_radius > 0 ? density_radius : 2 * epsilon; }
};

/// Exact index for "which infinite lines pass within epsilon of x".
///
/// The domain is the endpoint bounding box grown by epsilon, split into cubic
/// cells of side h >= epsilon. A line is registered in every cell whose center
/// lies within epsilon + h*sqrt(3)/2 of it, so the lines registered in the
/// query's own cell are a superset of the true members. Queries outside the
/// domain, or with a larger radius than the index was built for, fall back to
/// a linear scan.
class SegmentIndex {
 public:
  SegmentIndex() = default;
  SegmentIndex(const LineCloud& lc, double epsilon, int max_cells_per_axis = 64);

  /// Members sorted by segment index.
  std::vector<int> query(const Vec3& x, double epsilon) const;

  double epsilon() const { return epsilon_; }
  std::size_t num_entries() const { return entries_.size(); }
  bool contains(const Vec3& x) const;

 private:
  const LineCloud* cloud_ = nullptr;
  double epsilon_ = 0.0;
  double cell_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  Eigen::Vector3i dims_ = Eigen::Vector3i::Zero();
  std::vector<std::uint32_t> offsets_;
  std::vector<int> entries_;

  std::int64_t cell_id(int i, int j, int k) const {
    return (static_cast<std::int64_t>(i) * dims_[1] + j) * dims_[2] + k;
  }
};

/// Linear scan; members sorted by segment index. The reference for SegmentIndex.
std::vector<int> brute_force_members(const LineCloud& lc, const Vec3& x, double epsilon);

struct LinePatch {
  Vec3 x = Vec3::Zero();
  std::optional<Vec3> y;           // second center for pair patches
  std::vector<int> members;        // segment index per valid row, in row order
  Eigen::MatrixXd features;        // N x F, rows past valid_count() are zero

  int valid_count() const { return static_cast<int>(members.size()); }
  int capacity() const { return static_cast<int>(features.rows()); }
  int feature_width() const { return static_cast<int>(features.cols()); }
};

/// Lines within epsilon of x, nearest N kept; feature rows are
/// (near endpoint - x, far endpoint - x, distance).
LinePatch build_patch(const LineCloud& lc, const Vec3& x, double epsilon, int max_lines,
                      const SegmentIndex* index = nullptr);

/// Union of the patches of x and y; rows are (near endpoint - m, far endpoint - m,
/// d_x, d_y, source) with m the midpoint and source -1 / +1 / 0 for x-only /
/// y-only / both.
LinePatch build_pair_patch(const LineCloud& lc, const Vec3& x, const Vec3& y, double epsilon,
                           int max_lines, const SegmentIndex* index = nullptr);

/// G patches with identical capacity and feature width, stored as a
/// (G*N) x F matrix in patch-major order.
struct PatchBatch {
  int num_patches = 0;
  int capacity = 0;
  int feature_width = 0;
  Eigen::MatrixXd features;
  std::vector<int> valid;
  std::vector<Vec3> centers;
  std::vector<Vec3> second_centers;  // pair batches only
  std::vector<int> provenance;       // caller-defined sample index per patch

  static PatchBatch from_patches(std::span<const LinePatch> patches,
                                 std::vector<int> provenance = {});
  auto patch_rows(int g) const { return features.middleRows(static_cast<Eigen::Index>(g) * capacity, capacity); }
};

/// Greedy farthest point sampling starting from `seed`; ties go to the lowest index.
std::vector<int> fps(std::span<const Vec3> points, int k, int seed);

/// FPS continuing from an already selected set until k points are chosen.
std::vector<int> fps_extend(std::span<const Vec3> points, std::vector<int> selected, int k);

/// Deterministic start index used when there is no density-drawn seed.
int fps_seed_index(std::size_t num_points, std::uint64_t seed);

/// Endpoints with exact duplicates removed, in first-occurrence order.
std::vector<Vec3> distinct_endpoints(const LineCloud& lc);

/// Number of points within radius of each point (including itself).
std::vector<int> local_density(std::span<const Vec3> points, double radius);

struct QuerySample {
  std::vector<Vec3> points;
  bool saturated = false;   // G exceeded the number of distinct endpoints
  int num_density = 0;      // leading entries drawn by density
};

/// ceil(fraction * G) endpoints drawn without replacement with probability
/// proportional to local endpoint density, then FPS over all endpoints.
QuerySample sample_query_points(const LineCloud& lc, int num_queries, double density_fraction,
                                std::uint64_t seed, double density_radius);

}  // namespace lcwire
