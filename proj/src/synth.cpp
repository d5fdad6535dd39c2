#include "lcwire/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lcwire {

std::string_view to_string(RoofFamily f) {
  switch (f) {
    case RoofFamily::Flat: return "flat";
    case RoofFamily::Gabled: return "gabled";
    case RoofFamily::Hipped: return "hipped";
    case RoofFamily::LShaped: return "lshaped";
  }
  return "?";
}

RoofFamily roof_family_from_string(std::string_view s) {
  if (s == "flat" || s == "box") return RoofFamily::Flat;
  if (s == "gabled") return RoofFamily::Gabled;
  if (s == "hipped") return RoofFamily::Hipped;
  if (s == "lshaped" || s == "l-shaped") return RoofFamily::LShaped;
  throw Error("unknown roof family '" + std::string(s) + "'");
}

void SceneSpec::validate() const {
  auto range = [](const char* name, double lo, double hi, double floor) {
    if (!(lo >= floor) || !(hi >= lo) || !std::isfinite(hi))
      throw Error(std::string("scene spec: invalid range for ") + name);
  };
  if (families.empty()) throw Error("scene spec: families must not be empty");
  range("width", width_min, width_max, 1.0);
  range("depth", depth_min, depth_max, 1.0);
  range("wall", wall_min, wall_max, 0.5);
  range("roof", roof_min, roof_max, 0.2);
  if (!(noise_rel >= 0 && noise_rel <= 0.1)) throw Error("scene spec: noise_rel must lie in [0, 0.1]");
  if (!(clutter_ratio >= 0 && clutter_ratio <= 10)) throw Error("scene spec: clutter_ratio must lie in [0, 10]");
  if (fragments_min < 1 || fragments_max < fragments_min || fragments_max > 64)
    throw Error("scene spec: invalid range for fragments");
  if (!(duplicate_ratio >= 0 && duplicate_ratio <= 1)) throw Error("scene spec: duplicate_ratio must lie in [0, 1]");
  if (num_cameras < 0 || num_cameras > 64) throw Error("scene spec: num_cameras must lie in [0, 64]");
  if (!(clutter_margin_rel > 0 && clutter_margin_rel < 0.5))
    throw Error("scene spec: clutter_margin_rel must lie in (0, 0.5)");
}

Mesh building_mesh(RoofFamily family, double w, double d, double wall, double roof) {
  Mesh m;
  const double x = w / 2, y = d / 2;
  auto add = [&](double px, double py, double pz) {
    m.vertices.emplace_back(px, py, pz);
    return static_cast<int>(m.vertices.size()) - 1;
  };

  if (family == RoofFamily::LShaped) {
    // Footprint walked counter-clockwise from the corner that sees every vertex.
    const double wx = w * 0.5, dy = d * 0.5;
    const std::vector<std::pair<double, double>> fp{{-x, -y}, {x, -y}, {x, -y + dy}, {-x + wx, -y + dy},
                                                    {-x + wx, y}, {-x, y}};
    const int n = static_cast<int>(fp.size());
    std::vector<int> bot, top;
    for (auto [px, py] : fp) bot.push_back(add(px, py, 0));
    for (auto [px, py] : fp) top.push_back(add(px, py, wall));
    m.faces.push_back(std::vector<int>(bot.rbegin(), bot.rend()));
    m.faces.push_back(top);
    for (int i = 0; i < n; ++i) {
      const int j = (i + 1) % n;
      m.faces.push_back({bot[i], bot[j], top[j], top[i]});
    }
    return m;
  }

  const int b0 = add(-x, -y, 0), b1 = add(x, -y, 0), b2 = add(x, y, 0), b3 = add(-x, y, 0);
  const int t0 = add(-x, -y, wall), t1 = add(x, -y, wall), t2 = add(x, y, wall), t3 = add(-x, y, wall);
  m.faces.push_back({b3, b2, b1, b0});
  m.faces.push_back({b0, b1, t1, t0});  // front (y = -d/2)
  m.faces.push_back({b2, b3, t3, t2});  // back

  switch (family) {
    case RoofFamily::Flat:
      m.faces.push_back({b1, b2, t2, t1});
      m.faces.push_back({b3, b0, t0, t3});
      m.faces.push_back({t0, t1, t2, t3});
      break;
    case RoofFamily::Gabled: {
      const int r0 = add(-x, 0, wall + roof), r1 = add(x, 0, wall + roof);
      m.faces.push_back({b1, b2, t2, r1, t1});  // gable ends are single pentagons
      m.faces.push_back({b3, b0, t0, r0, t3});
      m.faces.push_back({t0, t1, r1, r0});
      m.faces.push_back({t2, t3, r0, r1});
      break;
    }
    case RoofFamily::Hipped: {
      const double inset = std::min(y, x - 0.75);
      const int r0 = add(-x + inset, 0, wall + roof), r1 = add(x - inset, 0, wall + roof);
      m.faces.push_back({b1, b2, t2, t1});
      m.faces.push_back({b3, b0, t0, t3});
      m.faces.push_back({t0, t1, r1, r0});
      m.faces.push_back({t2, t3, r0, r1});
      m.faces.push_back({t1, t2, r1});
      m.faces.push_back({t3, t0, r0});
      break;
    }
    case RoofFamily::LShaped: break;
  }
  return m;
}

namespace {

struct Triangle {
  Vec3 a, b, c;
  double area;
};

std::vector<Triangle> fan_triangles(const Mesh& m) {
  std::vector<Triangle> tris;
  for (const auto& f : m.faces)
    for (std::size_t k = 1; k + 1 < f.size(); ++k) {
      const Vec3 &a = m.vertices[f[0]], &b = m.vertices[f[k]], &c = m.vertices[f[k + 1]];
      tris.push_back({a, b, c, 0.5 * (b - a).cross(c - a).norm()});
    }
  return tris;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (;;) {
    Vec3 v(n01(rng), n01(rng), n01(rng));
    if (v.norm() > 1e-6) return v.normalized();
  }
}

bool near_any_edge(const LineSegment& s, const Wireframe& wf, double margin) {
  for (const Edge& e : wf.edges) {
    const LineSegment edge{wf.vertices[e.a], wf.vertices[e.b]};
    if (point_to_line_distance(s.p, edge) > margin || point_to_line_distance(s.q, edge) > margin) continue;
    const Vec3 dir = edge.q - edge.p;
    const double tp = (s.p - edge.p).dot(dir) / dir.squaredNorm();
    const double tq = (s.q - edge.p).dot(dir) / dir.squaredNorm();
    if (std::max(tp, tq) >= -0.05 && std::min(tp, tq) <= 1.05) return true;
  }
  return false;
}

}  // namespace

std::vector<Camera> ring_cameras(const std::vector<Vec3>& points, int count) {
  std::vector<Camera> cams;
  if (count <= 0 || points.empty()) return cams;
  Vec3 center = Vec3::Zero();
  for (const Vec3& p : points) center += p;
  center /= static_cast<double>(points.size());
  const double radius = 2.5 * std::max(bbox_diagonal(points), 1.0);
  const double elev = 35.0 * std::numbers::pi / 180.0;
  for (int i = 0; i < count; ++i) {
    const double az = 2 * std::numbers::pi * i / count;
    const Vec3 eye = center + radius * Vec3(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                                            std::sin(elev));
    const Vec3 fwd = (center - eye).normalized();
    const Vec3 right = fwd.cross(Vec3::UnitZ()).normalized();
    const Vec3 down = fwd.cross(right);
    Camera cam;
    cam.R.row(0) = right.transpose();
    cam.R.row(1) = down.transpose();
    cam.R.row(2) = fwd.transpose();
    cam.t = -cam.R * eye;
    cam.width = 1280;
    cam.height = 960;
    cam.K << 1000, 0, 640, 0, 1000, 480, 0, 0, 1;
    cams.push_back(cam);
  }
  return cams;
}

std::vector<std::vector<Support2D>> project_supports(const LineCloud& lc, const std::vector<Camera>& cams) {
  std::vector<std::vector<Support2D>> out(lc.size());
  for (std::size_t i = 0; i < lc.size(); ++i) {
    for (std::size_t v = 0; v < cams.size(); ++v) {
      const auto a = cams[v].project(lc.segments[i].p);
      const auto b = cams[v].project(lc.segments[i].q);
      if (!a || !b) continue;
      auto inside = [&](const Vec2& p) {
        return p.x() >= 0 && p.y() >= 0 && p.x() < cams[v].width && p.y() < cams[v].height;
      };
      if (!inside(*a) || !inside(*b) || (*a - *b).norm() < 1e-9) continue;
      out[i].push_back({static_cast<int>(v), *a, *b});
    }
  }
  return out;
}

SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  SyntheticScene scene;
  scene.seed = seed;
  scene.spec = spec;
  scene.family = spec.families[std::uniform_int_distribution<std::size_t>(0, spec.families.size() - 1)(rng)];

  double width = uniform(spec.width_min, spec.width_max);
  const double depth = uniform(spec.depth_min, spec.depth_max);
  const double wall = uniform(spec.wall_min, spec.wall_max);
  const double roof = uniform(spec.roof_min, spec.roof_max);
  if (scene.family == RoofFamily::Hipped) width = std::max(width, depth + 2.0);
  if (scene.family == RoofFamily::Gabled || scene.family == RoofFamily::Hipped)
    width = std::max(width, depth * 0.75);

  Mesh mesh = building_mesh(scene.family, width, depth, wall, roof);
  const double yaw = uniform(0.0, 2 * std::numbers::pi);
  const Eigen::AngleAxisd rot(yaw, Vec3::UnitZ());
  for (Vec3& v : mesh.vertices) v = rot * v;
  scene.mesh = mesh;
  scene.wireframe = mesh_to_wireframe(mesh);

  const Wireframe& wf = scene.wireframe;
  const double diag = bbox_diagonal(wf.vertices);
  const double sigma = spec.noise_rel * diag;
  std::normal_distribution<double> jitter(0.0, 1.0);
  auto noisy = [&](const Vec3& p) {
    if (sigma == 0) return p;
    return Vec3(p.x() + sigma * jitter(rng), p.y() + sigma * jitter(rng), p.z() + sigma * jitter(rng));
  };

  LineCloud& lc = scene.cloud;
  for (std::size_t e = 0; e < wf.edges.size(); ++e) {
    const Vec3& a = wf.vertices[wf.edges[e].a];
    const Vec3& b = wf.vertices[wf.edges[e].b];
    const int k = std::uniform_int_distribution<int>(spec.fragments_min, spec.fragments_max)(rng);
    std::vector<double> cuts{0.0};
    for (int i = 1; i < k; ++i) cuts.push_back((i + uniform(-0.3, 0.3)) / k);
    cuts.push_back(1.0);
    for (int i = 0; i < k; ++i) {
      const Vec3 p = a + cuts[i] * (b - a), q = a + cuts[i + 1] * (b - a);
      for (int copy = 0; copy < 2; ++copy) {
        if (copy == 1 && !(uniform(0.0, 1.0) < spec.duplicate_ratio)) break;
        LineSegment seg{noisy(p), noisy(q)};
        if (seg.length() < 1e-9) continue;
        lc.segments.push_back(seg);
        scene.provenance.push_back(static_cast<int>(e));
      }
    }
  }

  const auto tris = fan_triangles(mesh);
  std::vector<double> areas;
  for (const auto& t : tris) areas.push_back(t.area);
  std::discrete_distribution<std::size_t> pick_tri(areas.begin(), areas.end());
  Vec3 lo = wf.vertices.front(), hi = lo;
  for (const Vec3& v : wf.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 pad = 0.1 * (hi - lo);
  const double margin = spec.clutter_margin_rel * diag;
  const auto num_clutter = static_cast<std::size_t>(std::llround(spec.clutter_ratio * lc.size()));
  for (std::size_t c = 0; c < num_clutter; ++c) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double len = uniform(0.3, 1.5);
      Vec3 center, dir;
      if (uniform(0.0, 1.0) < 0.7) {
        const Triangle& t = tris[pick_tri(rng)];
        double u = uniform(0.0, 1.0), v = uniform(0.0, 1.0);
        if (u + v > 1) u = 1 - u, v = 1 - v;
        center = t.a + u * (t.b - t.a) + v * (t.c - t.a);
        const Vec3 n = (t.b - t.a).cross(t.c - t.a).normalized();
        dir = random_unit(rng);
        dir = (dir - dir.dot(n) * n);
        if (dir.norm() < 1e-6) continue;
        dir.normalize();
      } else {
        center = Vec3(uniform(lo.x() - pad.x(), hi.x() + pad.x()), uniform(lo.y() - pad.y(), hi.y() + pad.y()),
                      uniform(lo.z(), hi.z() + pad.z()));
        dir = random_unit(rng);
      }
      LineSegment seg{noisy(center - 0.5 * len * dir), noisy(center + 0.5 * len * dir)};
      if (seg.length() < 1e-9 || near_any_edge(seg, wf, margin)) continue;
      lc.segments.push_back(seg);
      scene.provenance.push_back(-1);
      break;
    }
  }

  // Shuffle so segment order carries no provenance.
  std::vector<std::size_t> order(lc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  LineCloud shuffled;
  std::vector<int> prov;
  for (std::size_t i : order) {
    shuffled.segments.push_back(lc.segments[i]);
    prov.push_back(scene.provenance[i]);
  }
  scene.cloud = std::move(shuffled);
  scene.provenance = std::move(prov);

  if (spec.num_cameras > 0) {
    scene.cameras = ring_cameras(wf.vertices, spec.num_cameras);
    scene.cloud.supports = project_supports(scene.cloud, scene.cameras);
  }
  return scene;
}

}  // namespace lcwire
