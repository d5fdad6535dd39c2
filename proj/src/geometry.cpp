#include "lcwire/geometry.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace lcwire {

void LineCloud::check_parallel() const {
  if (labels && labels->size() != segments.size())
    throw GeometryError("line cloud: label count " + std::to_string(labels->size()) +
                        " != segment count " + std::to_string(segments.size()));
  if (supports && supports->size() != segments.size())
    throw GeometryError("line cloud: support count " + std::to_string(supports->size()) +
                        " != segment count " + std::to_string(segments.size()));
}

std::optional<Vec2> Camera::project(const Vec3& x) const {
  const Vec3 cam = R * x + t;
  if (cam.z() <= 1e-9) return std::nullopt;
  const Vec3 h = K * cam;
  return Vec2(h.x() / h.z(), h.y() / h.z());
}

std::string Camera::check(double tol) const {
  if (!K.allFinite() || !R.allFinite() || !t.allFinite()) return "non-finite camera parameters";
  if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
    return "rotation is not orthonormal";
  if (R.determinant() < 0) return "rotation has determinant -1";
  if (std::abs(K(1, 0)) > 0 || std::abs(K(2, 0)) > 0 || std::abs(K(2, 1)) > 0)
    return "intrinsics are not upper-triangular";
  if (!(K(0, 0) > 0) || !(K(1, 1) > 0)) return "focal lengths must be positive";
  if (width <= 0 || height <= 0) return "image size must be positive";
  return {};
}

double point_to_segment_distance(const Vec3& x, const LineSegment& l) {
  const Vec3 d = l.q - l.p;
  const double len2 = d.squaredNorm();
  if (len2 <= 0) return (x - l.p).norm();
  const double t = std::clamp((x - l.p).dot(d) / len2, 0.0, 1.0);
  return (x - (l.p + t * d)).norm();
}

double point_to_segment_distance_2d(const Vec2& x, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double len2 = d.squaredNorm();
  if (len2 <= 0) return (x - a).norm();
  const double t = std::clamp((x - a).dot(d) / len2, 0.0, 1.0);
  return (x - (a + t * d)).norm();
}

Adjacency adjacency(const Wireframe& wf) {
  Adjacency adj(wf.vertices.size());
  for (const Edge& e : wf.edges) {
    adj.at(e.a).push_back(e.b);
    adj.at(e.b).push_back(e.a);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

std::optional<int> graph_distance(const Adjacency& adj, int a, int b, int cap) {
  const int n = static_cast<int>(adj.size());
  if (a < 0 || a >= n || b < 0 || b >= n)
    throw GeometryError("graph_distance: vertex index out of range");
  if (cap < 1) throw GeometryError("graph_distance: cap must be >= 1");
  if (a == b) return 0;
  std::vector<int> dist(n, -1);
  std::deque<int> queue{a};
  dist[a] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (dist[u] >= cap) continue;
    for (int v : adj[u]) {
      if (dist[v] >= 0) continue;
      dist[v] = dist[u] + 1;
      if (v == b) return dist[v];
      queue.push_back(v);
    }
  }
  return std::nullopt;
}

std::optional<int> graph_distance(const Wireframe& wf, int a, int b, int cap) {
  return graph_distance(adjacency(wf), a, b, cap);
}

Eigen::MatrixXi hop_matrix(const Wireframe& wf, int cap) {
  const Adjacency adj = adjacency(wf);
  const int n = static_cast<int>(adj.size());
  Eigen::MatrixXi hops = Eigen::MatrixXi::Constant(n, n, cap + 1);
  for (int s = 0; s < n; ++s) {
    std::deque<int> queue{s};
    hops(s, s) = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      if (hops(s, u) >= cap) continue;
      for (int v : adj[u]) {
        if (hops(s, v) <= cap) continue;
        hops(s, v) = hops(s, u) + 1;
        queue.push_back(v);
      }
    }
  }
  return hops;
}

std::vector<std::string> validate_wireframe(const Wireframe& wf, double dup_tol) {
  std::vector<std::string> out;
  const int n = static_cast<int>(wf.vertices.size());
  for (int i = 0; i < n; ++i)
    if (!wf.vertices[i].allFinite()) out.push_back("non-finite-vertex@" + std::to_string(i));

  std::set<std::pair<int, int>> seen;
  for (std::size_t k = 0; k < wf.edges.size(); ++k) {
    // Re-canonicalize: callers may have written the fields directly.
    const int a = std::min(wf.edges[k].a, wf.edges[k].b);
    const int b = std::max(wf.edges[k].a, wf.edges[k].b);
    if (a < 0 || b >= n) {
      out.push_back("index-out-of-range@edge" + std::to_string(k));
      continue;
    }
    if (a == b) {
      out.push_back("self-loop@" + std::to_string(a));
      continue;
    }
    if (!seen.insert({a, b}).second)
      out.push_back("duplicate-edge@(" + std::to_string(a) + "," + std::to_string(b) + ")");
  }

  // Sort by x so the duplicate scan only compares a window.
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return wf.vertices[i].x() < wf.vertices[j].x(); });
  for (int s = 0; s < n; ++s) {
    for (int t = s + 1; t < n; ++t) {
      const Vec3& u = wf.vertices[order[s]];
      const Vec3& v = wf.vertices[order[t]];
      if (v.x() - u.x() > dup_tol) break;
      if ((u - v).norm() <= dup_tol) {
        const int i = std::min(order[s], order[t]);
        const int j = std::max(order[s], order[t]);
        out.push_back("duplicate-vertex@(" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }

  if (!wf.vertex_confidence.empty() && wf.vertex_confidence.size() != wf.vertices.size())
    out.push_back("vertex-confidence-size");
  if (!wf.edge_confidence.empty() && wf.edge_confidence.size() != wf.edges.size())
    out.push_back("edge-confidence-size");
  return out;
}

LineCloud transform(const LineCloud& lc, const Similarity& s) {
  LineCloud out = lc;
  for (auto& seg : out.segments) {
    seg.p = s.apply(seg.p);
    seg.q = s.apply(seg.q);
  }
  if (out.labels) {
    for (auto& l : *out.labels) {
      l.d1 = s.apply_length(l.d1);
      l.d2 = s.apply_length(l.d2);
    }
  }
  return out;
}

Wireframe transform(const Wireframe& wf, const Similarity& s) {
  Wireframe out = wf;
  for (auto& v : out.vertices) v = s.apply(v);
  return out;
}

double bbox_diagonal(const std::vector<Vec3>& pts) {
  if (pts.empty()) return 0.0;
  Vec3 lo = pts.front(), hi = pts.front();
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

double bbox_diagonal(const LineCloud& lc) {
  std::vector<Vec3> pts;
  pts.reserve(2 * lc.size());
  for (const auto& s : lc.segments) {
    pts.push_back(s.p);
    pts.push_back(s.q);
  }
  return bbox_diagonal(pts);
}

std::pair<LineCloud, Similarity> normalize_cloud(const LineCloud& lc) {
  if (lc.empty()) throw GeometryError("normalize_cloud: empty cloud");
  Vec3 centroid = Vec3::Zero();
  for (const auto& s : lc.segments) centroid += s.p + s.q;
  centroid /= static_cast<double>(2 * lc.size());
  const double diag = bbox_diagonal(lc);
  if (!(diag > 0) || !std::isfinite(diag))
    throw GeometryError("normalize_cloud: cloud has zero or non-finite extent");
  Similarity s{centroid, 1.0 / diag};
  return {transform(lc, s), s};
}

}  // namespace lcwire
