#include "lcwire/metrics.hpp"

#include "lcwire/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

namespace lcwire {
namespace {

std::vector<int> confidence_order(std::size_t n, const std::vector<double>& confidence) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (confidence.size() == n)
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return confidence[a] > confidence[b]; });
  return order;
}

PrecisionRecall ratio(int tp, std::size_t num_pred, std::size_t num_gt) {
  PrecisionRecall r;
  r.empty_prediction = num_pred == 0;
  r.precision = num_pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(num_pred);
  r.recall = num_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(num_gt);
  return r;
}

void require_eta(double eta) {
  if (!(eta > 0) || !std::isfinite(eta)) throw Error("match threshold must be positive and finite");
}

double edge_cost(const Vec3& u, const Vec3& v, const Vec3& a, const Vec3& b) {
  const double direct = std::max((u - a).norm(), (v - b).norm());
  const double swapped = std::max((u - b).norm(), (v - a).norm());
  return std::min(direct, swapped);
}

PrecisionRecall average(const std::vector<PrecisionRecall>& v) {
  PrecisionRecall avg;
  if (v.empty()) return avg;
  for (const auto& pr : v) {
    avg.precision += pr.precision;
    avg.recall += pr.recall;
    avg.empty_prediction = avg.empty_prediction || pr.empty_prediction;
  }
  avg.precision /= static_cast<double>(v.size());
  avg.recall /= static_cast<double>(v.size());
  return avg;
}

}  // namespace

PrecisionRecall junction_pr(const std::vector<Vec3>& pred, const std::vector<double>& confidence,
                            const std::vector<Vec3>& gt, double eta) {
  require_eta(eta);
  std::vector<char> used(gt.size(), 0);
  int tp = 0;
  for (int i : confidence_order(pred.size(), confidence)) {
    int best = -1;
    double best_d = eta;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (used[j]) continue;
      const double d = (pred[i] - gt[j]).norm();
      if (d <= best_d && (best < 0 || d < best_d)) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    if (best >= 0) {
      used[best] = 1;
      ++tp;
    }
  }
  return ratio(tp, pred.size(), gt.size());
}

PrecisionRecall structural_pr(const Wireframe& pred, const Wireframe& gt, double eta) {
  require_eta(eta);
  std::vector<char> used(gt.edges.size(), 0);
  int tp = 0;
  for (int i : confidence_order(pred.edges.size(), pred.edge_confidence)) {
    const Vec3& u = pred.vertices[pred.edges[i].a];
    const Vec3& v = pred.vertices[pred.edges[i].b];
    int best = -1;
    double best_d = eta;
    for (std::size_t j = 0; j < gt.edges.size(); ++j) {
      if (used[j]) continue;
      const double d = edge_cost(u, v, gt.vertices[gt.edges[j].a], gt.vertices[gt.edges[j].b]);
      if (d <= best_d && (best < 0 || d < best_d)) {
        best = static_cast<int>(j);
        best_d = d;
      }
    }
    if (best >= 0) {
      used[best] = 1;
      ++tp;
    }
  }
  return ratio(tp, pred.edges.size(), gt.edges.size());
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0) return {};
  if (cols == 0) return std::vector<int>(rows, -1);
  if (!cost.allFinite()) throw Error("hungarian: cost matrix must be finite");
  if (rows > cols) {
    const std::vector<int> t = hungarian(cost.transpose());
    std::vector<int> out(rows, -1);
    for (int c = 0; c < cols; ++c)
      if (t[c] >= 0) out[t[c]] = c;
    return out;
  }
  // Shortest augmenting paths with row/column potentials; 1-based with a
  // virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0), v(cols + 1, 0);
  std::vector<int> match(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> done(cols + 1, 0);
    do {
      done[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (done[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (done[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (match[j] > 0) out[match[j] - 1] = j - 1;
  return out;
}

WedResult wed(const Wireframe& pred, const Wireframe& gt, double tau_match, const std::optional<Vec3>& fallback) {
  require_eta(tau_match);
  const int np = static_cast<int>(pred.vertices.size());
  const int ng = static_cast<int>(gt.vertices.size());

  // Pairs beyond tau_match carry a penalty larger than any admissible total,
  // so the assignment maximizes the number of admissible matches first.
  std::vector<int> gt_of_pred(np, -1);
  if (np > 0 && ng > 0) {
    const double penalty = 1.0 + tau_match * static_cast<double>(std::min(np, ng) + 1);
    Eigen::MatrixXd cost(np, ng);
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < ng; ++j) {
        const double d = (pred.vertices[i] - gt.vertices[j]).norm();
        cost(i, j) = d <= tau_match ? d : penalty;
      }
    const std::vector<int> assign = hungarian(cost);
    for (int i = 0; i < np; ++i)
      if (assign[i] >= 0 && cost(i, assign[i]) <= tau_match) gt_of_pred[i] = assign[i];
  }
  std::vector<char> gt_matched(ng, 0);
  for (int g : gt_of_pred)
    if (g >= 0) gt_matched[g] = 1;

  WedResult r;
  Vec3 center = Vec3::Zero();
  if (fallback) {
    center = *fallback;
  } else if (ng > 0) {
    for (const Vec3& v : gt.vertices) center += v;
    center /= ng;
  }
  for (int j = 0; j < ng; ++j) {
    if (gt_matched[j]) continue;
    double d = np == 0 ? (gt.vertices[j] - center).norm() : std::numeric_limits<double>::infinity();
    for (const Vec3& p : pred.vertices) d = std::min(d, (gt.vertices[j] - p).norm());
    r.add_vertex.num += 1;
    r.add_vertex.dist += d;
  }

  std::set<Edge> gt_edges;
  for (const Edge& e : gt.edges) gt_edges.insert(Edge(e.a, e.b));
  std::set<Edge> covered;
  for (std::size_t e = 0; e < pred.edges.size(); ++e) {
    const int a = gt_of_pred[pred.edges[e].a], b = gt_of_pred[pred.edges[e].b];
    if (a >= 0 && b >= 0 && a != b && gt_edges.count(Edge(a, b))) {
      covered.insert(Edge(a, b));
    } else {
      r.remove_edge.num += 1;
      r.remove_edge.dist += pred.edge_length(e);
    }
  }
  for (std::size_t e = 0; e < gt.edges.size(); ++e) {
    if (covered.count(Edge(gt.edges[e].a, gt.edges[e].b))) continue;
    r.add_edge.num += 1;
    r.add_edge.dist += gt.edge_length(e);
  }
  r.total.num = r.add_vertex.num + r.add_edge.num + r.remove_edge.num;
  r.total.dist = r.add_vertex.dist + r.add_edge.dist + r.remove_edge.dist;
  return r;
}

MetricsReport evaluate(const Wireframe& pred, const Wireframe& gt, const EvalConfig& cfg) {
  MetricsReport r;
  r.vertex_eta = cfg.vertex_eta;
  r.structural_eta = cfg.structural_eta;
  r.tau_match = cfg.tau_match;
  for (double eta : cfg.vertex_eta) r.vertex.push_back(junction_pr(pred.vertices, pred.vertex_confidence, gt.vertices, eta));
  for (double eta : cfg.structural_eta) r.structural.push_back(structural_pr(pred, gt, eta));
  r.vertex_avg = average(r.vertex);
  r.structural_avg = average(r.structural);
  r.wed = wed(pred, gt, cfg.tau_match);
  return r;
}

namespace {

nlohmann::ordered_json pr_json(const PrecisionRecall& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"empty_prediction", p.empty_prediction}};
}

PrecisionRecall pr_from(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("empty_prediction").get<bool>()};
}

nlohmann::ordered_json term_json(const WedTerm& t) { return {{"num", t.num}, {"dist", t.dist}}; }

WedTerm term_from(const nlohmann::json& j) { return {j.at("num").get<int>(), j.at("dist").get<double>()}; }

nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  auto group = [](const std::vector<double>& eta, const std::vector<PrecisionRecall>& v, const PrecisionRecall& avg) {
    nlohmann::ordered_json g;
    g["eta"] = eta;
    g["values"] = nlohmann::json::array();
    for (const auto& p : v) g["values"].push_back(pr_json(p));
    g["avg"] = pr_json(avg);
    return g;
  };
  j["vertex"] = group(r.vertex_eta, r.vertex, r.vertex_avg);
  j["structural"] = group(r.structural_eta, r.structural, r.structural_avg);
  j["wed"] = {{"tau_match", r.tau_match},
              {"add_vertex", term_json(r.wed.add_vertex)},
              {"add_edge", term_json(r.wed.add_edge)},
              {"remove_edge", term_json(r.wed.remove_edge)},
              {"total", term_json(r.wed.total)}};
  return j;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string eta_label(double eta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "eta=%.2f", eta);
  return buf;
}

const PrecisionRecall& at(const std::vector<double>& eta, const std::vector<PrecisionRecall>& v, double x) {
  for (std::size_t i = 0; i < eta.size() && i < v.size(); ++i)
    if (std::abs(eta[i] - x) < 1e-12) return v[i];
  throw Error("metrics report has no entry for eta=" + format_real(x));
}

}  // namespace

const PrecisionRecall& MetricsReport::vertex_at(double eta) const { return at(vertex_eta, vertex, eta); }
const PrecisionRecall& MetricsReport::structural_at(double eta) const { return at(structural_eta, structural, eta); }

std::string MetricsReport::to_json() const { return report_json(*this).dump(2); }

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    auto group = [](const nlohmann::json& g, std::vector<double>& eta, std::vector<PrecisionRecall>& v,
                    PrecisionRecall& avg) {
      eta = g.at("eta").get<std::vector<double>>();
      v.clear();
      for (const auto& p : g.at("values")) v.push_back(pr_from(p));
      avg = pr_from(g.at("avg"));
      if (v.size() != eta.size()) throw Error("metrics report: threshold and value counts differ");
    };
    group(j.at("vertex"), r.vertex_eta, r.vertex, r.vertex_avg);
    group(j.at("structural"), r.structural_eta, r.structural, r.structural_avg);
    const auto& w = j.at("wed");
    r.tau_match = w.at("tau_match").get<double>();
    r.wed.add_vertex = term_from(w.at("add_vertex"));
    r.wed.add_edge = term_from(w.at("add_edge"));
    r.wed.remove_edge = term_from(w.at("remove_edge"));
    r.wed.total = term_from(w.at("total"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid metrics report: ") + e.what());
  }
  return r;
}

std::string MetricsReport::table() const {
  std::string out;
  auto block = [&](const std::string& a, const std::string& b, const std::vector<double>& eta,
                   const std::vector<PrecisionRecall>& v, const PrecisionRecall& avg) {
    out += pad("", 10);
    for (double e : eta) out += pad(eta_label(e), 11);
    out += "avg\n";
    out += pad(a, 10);
    for (const auto& p : v) out += pad(pct(p.precision), 11);
    out += pct(avg.precision) + "\n";
    out += pad(b, 10);
    for (const auto& p : v) out += pad(pct(p.recall), 11);
    out += pct(avg.recall) + "\n";
  };
  block("vAP", "vRecall", vertex_eta, vertex, vertex_avg);
  out += "\n";
  block("sAP", "sRecall", structural_eta, structural, structural_avg);
  out += "\n";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-10s%-8s%s\n", "WED", "num", "dist");
  out += buf;
  auto row = [&](const char* name, const WedTerm& t) {
    std::snprintf(buf, sizeof buf, "%-10s%-8d%.3f\n", name, t.num, t.dist);
    out += buf;
  };
  row("+vertex", wed.add_vertex);
  row("+edge", wed.add_edge);
  row("-edge", wed.remove_edge);
  row("total", wed.total);
  return out;
}

BatchRow summary_row(const MetricsReport& r) {
  return {r.vertex_avg.precision, r.vertex_avg.recall, r.structural_avg.precision, r.structural_avg.recall,
          static_cast<double>(r.wed.total.num), r.wed.total.dist};
}

BatchRow mean_row(std::span<const BatchRow> rows) {
  BatchRow m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.vap += r.vap;
    m.vrecall += r.vrecall;
    m.sap += r.sap;
    m.srecall += r.srecall;
    m.wed_num += r.wed_num;
    m.wed_dist += r.wed_dist;
  }
  const double n = static_cast<double>(rows.size());
  m.vap /= n;
  m.vrecall /= n;
  m.sap /= n;
  m.srecall /= n;
  m.wed_num /= n;
  m.wed_dist /= n;
  return m;
}

std::string batch_table(const std::vector<std::string>& names, std::span<const MetricsReport> reports) {
  if (names.size() != reports.size()) throw Error("batch_table: one name per report is required");
  std::size_t w = 6;
  for (const auto& n : names) w = std::max(w, n.size() + 2);
  char buf[160];
  std::string out = pad("scene", w);
  std::snprintf(buf, sizeof buf, "%-9s%-9s%-9s%-9s%-9s%s\n", "vAP", "vRecall", "sAP", "sRecall", "WEDnum", "WEDdist");
  out += buf;
  std::vector<BatchRow> rows;
  auto emit = [&](const std::string& name, const BatchRow& r) {
    out += pad(name, w);
    std::snprintf(buf, sizeof buf, "%-9s%-9s%-9s%-9s%-9.2f%.3f\n", pct(r.vap).c_str(), pct(r.vrecall).c_str(),
                  pct(r.sap).c_str(), pct(r.srecall).c_str(), r.wed_num, r.wed_dist);
    out += buf;
  };
  for (std::size_t i = 0; i < reports.size(); ++i) {
    rows.push_back(summary_row(reports[i]));
    emit(names[i], rows.back());
  }
  emit("mean", mean_row(rows));
  return out;
}

std::string batch_json(const std::vector<std::string>& names, std::span<const MetricsReport> reports) {
  if (names.size() != reports.size()) throw Error("batch_json: one name per report is required");
  nlohmann::ordered_json j;
  j["scenes"] = nlohmann::json::array();
  std::vector<BatchRow> rows;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    j["scenes"].push_back({{"name", names[i]}, {"report", report_json(reports[i])}});
    rows.push_back(summary_row(reports[i]));
  }
  const BatchRow m = mean_row(rows);
  j["mean"] = {{"vAP", m.vap},         {"vRecall", m.vrecall}, {"sAP", m.sap},
               {"sRecall", m.srecall}, {"wed_num", m.wed_num}, {"wed_dist", m.wed_dist}};
  return j.dump(2);
}

}  // namespace lcwire
