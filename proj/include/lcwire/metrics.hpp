#pragma once

#include "lcwire/geometry.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcwire {

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  bool empty_prediction = false;  // precision is 0 by definition

  bool operator==(const PrecisionRecall&) const = default;
};

/// Greedy one-to-one matching in descending confidence (input order when
/// confidences are equal or absent); each prediction takes the nearest
/// unconsumed GT vertex within eta.
PrecisionRecall junction_pr(const std::vector<Vec3>& pred, const std::vector<double>& confidence,
                            const std::vector<Vec3>& gt, double eta);

/// A predicted edge matches an unconsumed GT edge when the larger endpoint
/// distance, under the better of the two endpoint assignments, is <= eta.
PrecisionRecall structural_pr(const Wireframe& pred, const Wireframe& gt, double eta);

/// Minimum-cost assignment on a rectangular cost matrix. Returns, for every
/// row, the assigned column or -1 when there are more rows than columns.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

struct WedTerm {
  int num = 0;
  double dist = 0.0;

  bool operator==(const WedTerm&) const = default;
};

struct WedResult {
  WedTerm add_vertex, add_edge, remove_edge, total;

  bool operator==(const WedResult&) const = default;
};

/// Edit script from the prediction to the GT: vertices are matched by
/// minimum-cost bipartite matching restricted to distances <= tau_match.
/// Unmatched GT vertices cost their distance to the nearest prediction, or to
/// `fallback` (default: the GT vertex centroid) when there is none.
WedResult wed(const Wireframe& pred, const Wireframe& gt, double tau_match,
              const std::optional<Vec3>& fallback = std::nullopt);

struct EvalConfig {
  std::vector<double> vertex_eta{0.15, 0.25, 0.35};
  std::vector<double> structural_eta{0.25, 0.35, 0.50};
  double tau_match = 0.15;
};

/// vAP/sAP are the precision of the unranked final prediction set.
struct MetricsReport {
  std::vector<double> vertex_eta;
  std::vector<PrecisionRecall> vertex;
  PrecisionRecall vertex_avg;
  std::vector<double> structural_eta;
  std::vector<PrecisionRecall> structural;
  PrecisionRecall structural_avg;
  double tau_match = 0.15;
  WedResult wed;

  bool operator==(const MetricsReport&) const = default;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  /// Aligned plain-text table, percentages for precision and recall.
  std::string table() const;
  /// Values at a given threshold; throws if eta is not in the report.
  const PrecisionRecall& vertex_at(double eta) const;
  const PrecisionRecall& structural_at(double eta) const;
};

MetricsReport evaluate(const Wireframe& pred, const Wireframe& gt, const EvalConfig& cfg = {});

/// Summary columns used by batch output: averaged precision/recall per
/// threshold set and WED totals.
struct BatchRow {
  double vap = 0, vrecall = 0, sap = 0, srecall = 0;
  double wed_num = 0, wed_dist = 0;
};

BatchRow summary_row(const MetricsReport& r);
/// Arithmetic mean of the rows; zeros for an empty list.
BatchRow mean_row(std::span<const BatchRow> rows);

/// One row per named report plus a mean row.
std::string batch_table(const std::vector<std::string>& names, std::span<const MetricsReport> reports);
/// Per-report JSON objects plus the mean row.
std::string batch_json(const std::vector<std::string>& names, std::span<const MetricsReport> reports);

}  // namespace lcwire
