#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lcwire {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

struct LineSegment {
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();

  double length() const { return (q - p).norm(); }
  Vec3 midpoint() const { return 0.5 * (p + q); }
};

/// Five-field supervision record attached to a segment. Junction indices are
/// -1 and distances 0 when the segment is not part of the wireframe.
struct LineLabel {
  bool positive = false;
  int i1 = -1;
  double d1 = 0.0;
  int i2 = -1;
  double d2 = 0.0;

  bool operator==(const LineLabel&) const = default;
};

/// A detected image segment that contributed to a 3D line.
struct Support2D {
  int view = 0;
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
};

struct LineCloud {
  std::vector<LineSegment> segments;
  std::optional<std::vector<LineLabel>> labels;
  std::optional<std::vector<std::vector<Support2D>>> supports;

  std::size_t size() const { return segments.size(); }
  bool empty() const { return segments.empty(); }
  bool labeled() const { return labels.has_value(); }

  /// Throws GeometryError when a parallel list has the wrong length.
  void check_parallel() const;
};

/// Undirected edge stored as a < b.
struct Edge {
  int a = 0;
  int b = 0;

  Edge() = default;
  Edge(int u, int v) : a(u < v ? u : v), b(u < v ? v : u) {}

  auto operator<=>(const Edge&) const = default;
};

struct Wireframe {
  std::vector<Vec3> vertices;
  std::vector<Edge> edges;
  // Empty when absent, otherwise parallel to vertices / edges.
  std::vector<double> vertex_confidence;
  std::vector<double> edge_confidence;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_edges() const { return edges.size(); }
  bool empty() const { return vertices.empty() && edges.empty(); }
  double edge_length(std::size_t e) const {
    return (vertices[edges[e].a] - vertices[edges[e].b]).norm();
  }
};

/// Pinhole camera: pixel ~ K (R X + t).
struct Camera {
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 0;
  int height = 0;

  /// Pixel coordinates, or nullopt when the point is not in front of the camera.
  std::optional<Vec2> project(const Vec3& x) const;
  /// Empty when the invariants hold, otherwise a description of the first violation.
  std::string check(double tol = 1e-6) const;
};

inline constexpr double kDuplicateVertexTolerance = 1e-6;

/// Distance from x to the infinite line through segment l.
template <typename Derived>
double point_to_line_distance(const Eigen::MatrixBase<Derived>& x, const LineSegment& l) {
  const Vec3 dir = l.q - l.p;
  const double len = dir.norm();
  if (!(len >= 1e-12)) throw GeometryError("point_to_line_distance: degenerate segment");
  return (x - l.p).cross(dir).norm() / len;
}

/// Distance from x to the closed segment l (used only for label distances).
double point_to_segment_distance(const Vec3& x, const LineSegment& l);

/// Distance from x to the closed 2D segment [a, b].
double point_to_segment_distance_2d(const Vec2& x, const Vec2& a, const Vec2& b);

using Adjacency = std::vector<std::vector<int>>;

Adjacency adjacency(const Wireframe& wf);

/// Hop count between a and b, or nullopt when it exceeds cap or the vertices
/// are disconnected.
std::optional<int> graph_distance(const Wireframe& wf, int a, int b, int cap);
std::optional<int> graph_distance(const Adjacency& adj, int a, int b, int cap);

/// All-pairs hop counts truncated at cap; entries beyond cap are cap + 1.
Eigen::MatrixXi hop_matrix(const Wireframe& wf, int cap);

/// One human-readable entry per violated invariant, e.g. "self-loop@2".
std::vector<std::string> validate_wireframe(const Wireframe& wf,
                                            double dup_tol = kDuplicateVertexTolerance);

/// Uniform scale about a center: normalized = (world - center) * scale.
struct Similarity {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (x - center) * scale; }
  Vec3 invert(const Vec3& x) const { return x / scale + center; }
  double apply_length(double d) const { return d * scale; }
  double invert_length(double d) const { return d / scale; }
  Similarity inverse() const { return {-center * scale, 1.0 / scale}; }
};

LineCloud transform(const LineCloud& lc, const Similarity& s);
Wireframe transform(const Wireframe& wf, const Similarity& s);

/// Centers the endpoints at their centroid and scales the bounding-box
/// diagonal to 1. Returns the normalized cloud and the forward transform.
std::pair<LineCloud, Similarity> normalize_cloud(const LineCloud& lc);

/// Axis-aligned bounding box diagonal over all endpoints.
double bbox_diagonal(const LineCloud& lc);
double bbox_diagonal(const std::vector<Vec3>& pts);

}  // namespace lcwire
