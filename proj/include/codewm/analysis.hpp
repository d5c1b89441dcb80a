#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "codewm/eval.hpp"
#include "codewm/util.hpp"

namespace codewm {

class NonPositivePoint : public Error {
 public:
  using Error::Error;
};
class DegenerateX : public Error {
 public:
  using Error::Error;
};
class LengthMismatch : public Error {
 public:
  using Error::Error;
};

using Point2 = std::pair<double, double>;

struct PowerLawFit {
  double a = 0.0;
  double b = 0.0;
  double r_squared = 0.0;         // log-log space, where the fit is done
  double r_squared_linear = 0.0;  // on the original scale
  std::size_t n_points = 0;

  double operator()(double x) const;
  nlohmann::json to_json() const;
};

/// OLS of ln y on ln x. Throws NonPositivePoint, DegenerateX, or Error for < 2 points.
PowerLawFit fit_power_law(const std::vector<Point2>& points);

struct CorrelationResult {
  std::optional<double> pearson;   // null when either series has zero variance
  std::optional<double> spearman;  // Pearson on average ranks
  std::optional<double> kendall;   // tau-b
  std::size_t n = 0;
  nlohmann::json to_json() const;
};

std::vector<double> average_ranks(const std::vector<double>& xs);
std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys);
std::optional<double> kendall_tau_b(const std::vector<double>& xs, const std::vector<double>& ys);

/// Throws LengthMismatch (including fewer than 2 points).
CorrelationResult correlations(const std::vector<double>& xs, const std::vector<double>& ys);

struct GainAnalysis {
  std::vector<Point2> points;  // (Sim(S_t,S_t+1), Sim(pred,S_t+1) - Sim(S_t,S_t+1))
  std::optional<double> rho;   // Pearson between the two raw similarity series
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// rows: (Sim(S_t,S_t+1), Sim(pred,S_t+1)).
GainAnalysis gain_analysis(const std::vector<Point2>& rows);
/// Uses the rows of an evaluation report that have a predicted screenshot.
GainAnalysis gain_analysis(const BenchmarkReport& report);

struct SizedScore {
  double size = 0.0;
  double score = 0.0;
  std::string label;
  friend bool operator==(const SizedScore&, const SizedScore&) = default;
};

/// Points not dominated by another with size <= and score >; sorted by size.
std::vector<SizedScore> pareto_frontier(const std::vector<SizedScore>& points);

/// "label,size,score" with an optional header line.
std::vector<SizedScore> load_sized_scores_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<Point2> points;
  bool line = false;  // connect points instead of drawing markers
};

/// Static SVG chart; log_x plots log10 of x.
std::string svg_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series, bool log_x = false);

}  // namespace codewm
