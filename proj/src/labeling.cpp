#include "lcwire/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace lcwire {

std::string_view to_string(PairClass c) {
  switch (c) {
    case PairClass::FP: return "FP";
    case PairClass::D0: return "D0";
    case PairClass::D1: return "D1";
    case PairClass::D2: return "D2";
    case PairClass::Far: return "FAR";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// mesh -> wireframe

Wireframe mesh_to_wireframe(const Mesh& mesh, double theta_degrees) {
  if (mesh.vertices.empty() || mesh.faces.empty())
    throw GeometryError("mesh_to_wireframe: empty mesh");
  const int nv = static_cast<int>(mesh.vertices.size());
  const double cos_theta = std::cos(theta_degrees * std::numbers::pi / 180.0);

  // Weld exact duplicate positions so triangle soups behave like indexed meshes.
  std::map<std::tuple<double, double, double>, int> welded;
  std::vector<int> canon(nv);
  for (int i = 0; i < nv; ++i) {
    const Vec3& v = mesh.vertices[i];
    if (!v.allFinite()) throw GeometryError("mesh_to_wireframe: non-finite vertex");
    canon[i] = welded.emplace(std::make_tuple(v.x(), v.y(), v.z()), i).first->second;
  }

  std::vector<Vec3> normals;
  std::map<Edge, std::vector<int>> edge_faces;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    if (face.size() < 3) throw GeometryError("mesh_to_wireframe: face with fewer than 3 vertices");
    Vec3 n = Vec3::Zero();
    for (std::size_t k = 0; k < face.size(); ++k) {
      const int a = face[k], b = face[(k + 1) % face.size()];
      if (a < 0 || a >= nv || b < 0 || b >= nv)
        throw GeometryError("mesh_to_wireframe: face index out of range");
      n += mesh.vertices[a].cross(mesh.vertices[b]);  // Newell
      const int ca = canon[a], cb = canon[b];
      if (ca != cb) edge_faces[Edge(ca, cb)].push_back(static_cast<int>(f));
    }
    const double len = n.norm();
    if (!(len > 0)) throw GeometryError("mesh_to_wireframe: degenerate face " + std::to_string(f));
    normals.push_back(n / len);
  }

  std::vector<std::set<int>> adj(nv);
  for (const auto& [e, faces] : edge_faces) {
    std::vector<int> uniq = faces;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() > 2) throw GeometryError("mesh_to_wireframe: edge shared by more than two faces");
    // |cos| makes the test independent of face orientation.
    const bool keep = uniq.size() == 1 || std::abs(normals[uniq[0]].dot(normals[uniq[1]])) < cos_theta;
    if (keep) {
      adj[e.a].insert(e.b);
      adj[e.b].insert(e.a);
    }
  }

  // Dissolve degree-2 vertices whose two edges are collinear within theta.
  bool changed = true;
  while (changed) {
    changed = false;
    for (int v = 0; v < nv; ++v) {
      if (adj[v].size() != 2) continue;
      const int a = *adj[v].begin(), b = *adj[v].rbegin();
      if (adj[a].count(b)) continue;
      const Vec3 u = (mesh.vertices[v] - mesh.vertices[a]).normalized();
      const Vec3 w = (mesh.vertices[b] - mesh.vertices[v]).normalized();
      if (u.dot(w) < cos_theta) continue;
      adj[v].clear();
      adj[a].erase(v);
      adj[b].erase(v);
      adj[a].insert(b);
      adj[b].insert(a);
      changed = true;
    }
  }

  Wireframe wf;
  std::vector<int> remap(nv, -1);
  for (int v = 0; v < nv; ++v) {
    if (adj[v].empty()) continue;
    remap[v] = static_cast<int>(wf.vertices.size());
    wf.vertices.push_back(mesh.vertices[v]);
  }
  std::set<Edge> edges;
  for (int v = 0; v < nv; ++v)
    for (int u : adj[v]) edges.insert(Edge(remap[v], remap[u]));
  wf.edges.assign(edges.begin(), edges.end());
  return wf;
}

// ---------------------------------------------------------------------------
// line labels

LineLabel make_positive_label(const LineSegment& seg, const Wireframe& gt, const Edge& e) {
  LineLabel lab;
  lab.positive = true;
  const double da = point_to_segment_distance(gt.vertices[e.a], seg);
  const double db = point_to_segment_distance(gt.vertices[e.b], seg);
  if (da <= db) {
    lab.i1 = e.a, lab.d1 = da, lab.i2 = e.b, lab.d2 = db;
  } else {
    lab.i1 = e.b, lab.d1 = db, lab.i2 = e.a, lab.d2 = da;
  }
  return lab;
}

LineCloud label_line_cloud_3d(const LineCloud& lc, const Wireframe& gt, double tau_3d) {
  if (!(tau_3d >= 0)) throw GeometryError("label_line_cloud: tau_3d must be non-negative");
  LineCloud out = lc;
  out.labels = std::vector<LineLabel>(lc.size());
  for (std::size_t i = 0; i < lc.size(); ++i) {
    const LineSegment& seg = lc.segments[i];
    double best = std::numeric_limits<double>::infinity();
    int best_edge = -1;
    for (std::size_t k = 0; k < gt.edges.size(); ++k) {
      const Vec3& a = gt.vertices[gt.edges[k].a];
      const Vec3& b = gt.vertices[gt.edges[k].b];
      const LineSegment edge{a, b};
      const double dp = point_to_line_distance(seg.p, edge);
      const double dq = point_to_line_distance(seg.q, edge);
      if (dp > tau_3d || dq > tau_3d) continue;
      const Vec3 dir = b - a;
      const double tp = (seg.p - a).dot(dir) / dir.squaredNorm();
      const double tq = (seg.q - a).dot(dir) / dir.squaredNorm();
      if (std::max(tp, tq) < 0 || std::min(tp, tq) > 1) continue;
      const double score = std::max(dp, dq);
      if (score < best) {
        best = score;
        best_edge = static_cast<int>(k);
      }
    }
    if (best_edge >= 0) (*out.labels)[i] = make_positive_label(seg, gt, gt.edges[best_edge]);
  }
  return out;
}

LineCloud label_line_cloud_2d(const LineCloud& lc, const Wireframe& gt,
                              const std::vector<Camera>& cameras, double tau_2d) {
  if (!lc.supports) throw GeometryError("label_line_cloud: cameras given but the cloud has no 2D supports");
  lc.check_parallel();
  if (!(tau_2d >= 0)) throw GeometryError("label_line_cloud: tau_2d must be non-negative");

  // Projected GT edges per view; nullopt when an endpoint is behind the camera.
  std::vector<std::vector<std::optional<std::pair<Vec2, Vec2>>>> projected(cameras.size());
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    for (const Edge& e : gt.edges) {
      const auto a = cameras[v].project(gt.vertices[e.a]);
      const auto b = cameras[v].project(gt.vertices[e.b]);
      if (a && b)
        projected[v].emplace_back(std::make_pair(*a, *b));
      else
        projected[v].emplace_back(std::nullopt);
    }
  }

  LineCloud out = lc;
  out.labels = std::vector<LineLabel>(lc.size());
  for (std::size_t i = 0; i < lc.size(); ++i) {
    const auto& sups = (*lc.supports)[i];
    if (sups.empty()) continue;
    double best = std::numeric_limits<double>::infinity();
    int best_edge = -1;
    for (std::size_t k = 0; k < gt.edges.size(); ++k) {
      double worst = 0;
      bool ok = true;
      for (const Support2D& s : sups) {
        if (s.view < 0 || s.view >= static_cast<int>(cameras.size()))
          throw GeometryError("label_line_cloud: support references unknown view " + std::to_string(s.view));
        const auto& proj = projected[s.view][k];
        if (!proj) {
          ok = false;
          break;
        }
        const double da = point_to_segment_distance_2d(s.a, proj->first, proj->second);
        const double db = point_to_segment_distance_2d(s.b, proj->first, proj->second);
        worst = std::max({worst, da, db});
        if (worst > tau_2d) {
          ok = false;
          break;
        }
      }
      if (ok && worst < best) {
        best = worst;
        best_edge = static_cast<int>(k);
      }
    }
    if (best_edge >= 0) (*out.labels)[i] = make_positive_label(lc.segments[i], gt, gt.edges[best_edge]);
  }
  return out;
}

LineCloud label_line_cloud(const LineCloud& lc, const Wireframe& gt, const std::vector<Camera>* cameras,
                           double tau_2d, double tau_3d) {
  if (cameras) return label_line_cloud_2d(lc, gt, *cameras, tau_2d);
  return label_line_cloud_3d(lc, gt, tau_3d);
}

// ---------------------------------------------------------------------------
// patch labels

bool label_patch(const LinePatch& patch, const LineCloud& labeled) {
  if (!labeled.labels) throw GeometryError("label_patch: cloud is unlabeled");
  const int valid = patch.valid_count();
  if (valid == 0) return false;
  int noise = 0;
  for (int li : patch.members)
    if (!(*labeled.labels).at(li).positive) ++noise;
  return !(2 * noise > valid);
}

JunctionTarget junction_target(const LinePatch& patch, const LineCloud& labeled, const Wireframe& gt) {
  if (!labeled.labels) throw GeometryError("junction_target: cloud is unlabeled");
  std::map<int, double> votes;
  for (int li : patch.members) {
    const LineLabel& l = (*labeled.labels).at(li);
    if (!l.positive) continue;
    votes[l.i1] += 1.0 / (1.0 + l.d1);
    votes[l.i2] += 1.0 / (1.0 + l.d2);
  }
  if (votes.empty()) throw GeometryError("junction_target: patch has no labeled member");

  double top = 0;
  for (const auto& [j, w] : votes) top = std::max(top, w);
  JunctionTarget best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& [j, w] : votes) {
    if (w < top - 1e-12 * std::max(1.0, top)) continue;
    if (j < 0 || j >= static_cast<int>(gt.vertices.size()))
      throw GeometryError("junction_target: label references unknown junction");
    const double d = (gt.vertices[j] - patch.x).norm();
    if (d < best_dist) {
      best_dist = d;
      best = {j, gt.vertices[j]};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// pair classes

PairLabeler::PairLabeler(const Wireframe& gt, double eps_fp) : gt_(&gt), eps_fp_(eps_fp) {
  if (gt.vertices.empty()) throw GeometryError("pair_class: empty ground-truth wireframe");
  hops_ = hop_matrix(gt, 2);
}

std::pair<int, double> PairLabeler::nearest(const Vec3& x) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(gt_->vertices.size()); ++j) {
    const double d = (gt_->vertices[j] - x).norm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return {best, best_d};
}

PairClass PairLabeler::operator()(const Vec3& p, const Vec3& q) const {
  const auto [jp, dp] = nearest(p);
  const auto [jq, dq] = nearest(q);
  if (dp > eps_fp_ || dq > eps_fp_) return PairClass::FP;
  switch (hops_(jp, jq)) {
    case 0: return PairClass::D0;
    case 1: return PairClass::D1;
    case 2: return PairClass::D2;
    default: return PairClass::Far;
  }
}

PairClass pair_class(const Vec3& p, const Vec3& q, const Wireframe& gt, double eps_fp) {
  return PairLabeler(gt, eps_fp)(p, q);
}

}  // namespace lcwire
