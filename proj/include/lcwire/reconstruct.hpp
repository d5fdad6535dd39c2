#pragma once

#include "lcwire/labeling.hpp"
#include "lcwire/lpt.hpp"
#include "lcwire/patch.hpp"

#include <array>
#include <string>
#include <vector>

namespace lcwire {

struct ReconstructConfig {
  PatchConfig patch;
  double tau_conf = 0.5;
  /// Extra junction passes that re-query the model at its own predictions.
  int refine_steps = 2;
  int top_m = 64;
  int pair_budget = 256;
  double tau_edge = 0.5;
  double tau_nms = 0.05;  // relative to the cloud's bounding-box diagonal
  int h_max = 1;
  std::uint64_t seed = 0;
  double heuristic_angle = 15.0;        // degrees
  int heuristic_min_cluster = 1;        // members a direction cluster needs to count
  double heuristic_coverage = 0.6;

  void validate() const;
};

struct PredictedJunction {
  Vec3 position = Vec3::Zero();
  double confidence = 0.0;
  int query = -1;
};

using PairProbabilities = std::vector<std::array<double, kNumPairClasses>>;

/// Junction predictions in world coordinates. Every query is re-run at its own
/// predicted position refine_steps times; a prediction is kept when each pass
/// reaches tau_conf and reports the confidence of the last pass.
std::vector<PredictedJunction> predict_junctions(const LptModel<float>& model, const LineCloud& lc,
                                                 const ReconstructConfig& cfg);

/// Top-M junctions by confidence, then all their pairs ranked by confidence
/// product and cut to the budget. Ties go to the lower index.
std::vector<std::pair<int, int>> select_pairs(const std::vector<PredictedJunction>& junctions, int top_m,
                                              int budget);

PairProbabilities predict_connectivity(const LptModel<float>& model, const LineCloud& lc,
                                       const std::vector<PredictedJunction>& junctions,
                                       const std::vector<std::pair<int, int>>& pairs,
                                       const ReconstructConfig& cfg);

struct PostprocessParams {
  double tau_nms = 0.05;  // absolute, in the junctions' units
  double tau_edge = 0.5;
  int h_max = 1;
};

struct PostprocessStats {
  int junctions_in = 0;
  int after_nms = 0;
  int edges_d1 = 0;
  int after_identity_merge = 0;
  int after_adjacency_merge = 0;
  int edges_after_dedup = 0;
  int edges_after_isolated = 0;
  int vertices_out = 0;
  int edges_out = 0;

  std::string to_json() const;
};

/// Greedy junction suppression: indices kept, in input order.
std::vector<int> vertex_nms(const std::vector<PredictedJunction>& junctions, double tau_nms);

Wireframe postprocess(const std::vector<PredictedJunction>& junctions,
                      const std::vector<std::pair<int, int>>& pairs, const PairProbabilities& probs,
                      const PostprocessParams& params, PostprocessStats* stats = nullptr);

/// Direction clustering plus least-squares intersection of the member lines.
PredictedJunction heuristic_junction(const LineCloud& lc, const LinePatch& patch, double angle_degrees,
                                     int min_cluster);
std::vector<PredictedJunction> heuristic_junctions(const LineCloud& lc, const ReconstructConfig& cfg);

/// Coverage of the segment x->y by aligned lines near it; D0 when the points
/// are closer than tau_nms (absolute).
PairProbabilities heuristic_connectivity(const LineCloud& lc, const std::vector<PredictedJunction>& junctions,
                                         const std::vector<std::pair<int, int>>& pairs,
                                         const ReconstructConfig& cfg);

struct Reconstruction {
  Wireframe wireframe;
  PostprocessStats stats;
  std::vector<PredictedJunction> junctions;
  std::vector<std::pair<int, int>> pairs;
  PairProbabilities probabilities;
};

Reconstruction reconstruct(const LptModel<float>& junction_model, const LptModel<float>& connectivity_model,
                           const LineCloud& lc, const ReconstructConfig& cfg);
Reconstruction reconstruct_heuristic(const LineCloud& lc, const ReconstructConfig& cfg);

}  // namespace lcwire
