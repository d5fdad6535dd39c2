#pragma once

#include "lcwire/geometry.hpp"
#include "lcwire/patch.hpp"

#include <array>
#include <string_view>

namespace lcwire {

/// Connectivity classes in logit order.
enum class PairClass : int { FP = 0, D0 = 1, D1 = 2, D2 = 3, Far = 4 };
inline constexpr int kNumPairClasses = 5;

std::string_view to_string(PairClass c);

/// Indexed polygon mesh; faces list vertex indices counter-clockwise seen from outside.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::vector<int>> faces;
};

/// Sharp edges (dihedral angle above theta) with collinear chains merged and
/// isolated vertices dropped.
Wireframe mesh_to_wireframe(const Mesh& mesh, double theta_degrees = 5.0);

/// Positive iff both endpoints lie within tau of the infinite line of a GT
/// edge whose extent the segment overlaps. For the chosen edge, i1/i2 are
/// ordered so that d1 <= d2, with d the distance from the junction to the
/// closest point of the segment.
LineCloud label_line_cloud_3d(const LineCloud& lc, const Wireframe& gt, double tau_3d);

/// Positive iff every 2D support lies within tau_2d pixels of the projection
/// of one common GT edge. Requires lc.supports.
LineCloud label_line_cloud_2d(const LineCloud& lc, const Wireframe& gt,
                              const std::vector<Camera>& cameras, double tau_2d);

/// Dispatches to the 2D path when cameras are given, the 3D path otherwise.
LineCloud label_line_cloud(const LineCloud& lc, const Wireframe& gt, const std::vector<Camera>* cameras,
                           double tau_2d, double tau_3d);

/// Fills the label fields for segment `seg` assigned to edge `e` of gt.
LineLabel make_positive_label(const LineSegment& seg, const Wireframe& gt, const Edge& e);

/// Negative iff more than half of the members are noise, or the patch is empty.
bool label_patch(const LinePatch& patch, const LineCloud& labeled);

struct JunctionTarget {
  int junction = -1;
  Vec3 position = Vec3::Zero();
};

/// Junction owning a positive patch: weighted vote over members' (i1, 1/(1+d1))
/// and (i2, 1/(1+d2)); ties go to the junction nearest the patch center.
JunctionTarget junction_target(const LinePatch& patch, const LineCloud& labeled, const Wireframe& gt);

/// Labels point pairs against a ground-truth wireframe.
class PairLabeler {
 public:
  PairLabeler(const Wireframe& gt, double eps_fp);

  PairClass operator()(const Vec3& p, const Vec3& q) const;
  /// Nearest GT junction and its distance.
  std::pair<int, double> nearest(const Vec3& x) const;

  const Eigen::MatrixXi& hops() const { return hops_; }

 private:
  const Wireframe* gt_;
  double eps_fp_;
  Eigen::MatrixXi hops_;
};

PairClass pair_class(const Vec3& p, const Vec3& q, const Wireframe& gt, double eps_fp);

}  // namespace lcwire
