#pragma once

#include "lcwire/labeling.hpp"
#include "lcwire/patch.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

namespace lcwire {

struct SampleConfig {
  PatchConfig patch;
  double junction_fraction = 0.5;  // queries drawn around GT junctions
  double eps_fp = 0.15;            // world units
  /// Target mix of pair classes in (FP, D0, D1, D2, FAR) order.
  std::array<double, kNumPairClasses> pair_mix{0.2, 0.05, 0.35, 0.2, 0.2};
  /// Pair endpoints near a junction are jittered with sigma = eps_fp * pair_jitter.
  double pair_jitter = 1.0 / 3.0;
  /// False-positive pair endpoints stay at least this multiple of eps_fp away
  /// from every GT junction.
  double fp_margin = 3.0;
  /// Regression targets farther than this multiple of epsilon are masked out.
  double regress_radius = 2.0;

  void validate() const;
};

/// One labeled scene moved to normalized coordinates, with its patch index.
struct TrainingSample {
  std::shared_ptr<const LineCloud> cloud;
  std::shared_ptr<const SegmentIndex> index;
  Wireframe gt;
  Similarity similarity;
  double eps_fp = 0.0;          // normalized units
  std::vector<Vec3> fp_points;  // cloud endpoints far from every GT junction
};

TrainingSample prepare_sample(const LineCloud& labeled, const Wireframe& gt, const SampleConfig& cfg);

struct JunctionQueries {
  std::vector<LinePatch> patches;
  std::vector<int> labels;        // 1 = junction patch
  Eigen::MatrixXd offsets;        // G x 3, target - center
  std::vector<char> regress;
  int num_perturbed = 0;
};

/// A fraction of the queries are GT junctions jittered by N(0, (eps/2)^2); the
/// rest come from sample_query_points. Positive patches enter the regression
/// mask when their target lies within regress_radius * eps of the query.
JunctionQueries sample_training_queries(const TrainingSample& s, int num_queries, double junction_fraction,
                                        std::uint64_t seed, const PatchConfig& cfg,
                                        double regress_radius = std::numeric_limits<double>::infinity());

struct PairQueries {
  std::vector<LinePatch> patches;
  std::vector<int> classes;
};

/// Point pairs drawn to roughly follow cfg.pair_mix and labeled with pair_class.
PairQueries sample_training_pairs(const TrainingSample& s, int num_pairs, std::uint64_t seed,
                                  const SampleConfig& cfg);

}  // namespace lcwire
