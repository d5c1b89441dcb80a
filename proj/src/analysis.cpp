#include "codewm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace codewm {

using nlohmann::json;

namespace {

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

double PowerLawFit::operator()(double x) const { return a * std::pow(x, b); }

json PowerLawFit::to_json() const {
  return {{"a", a}, {"b", b}, {"r_squared", r_squared}, {"r_squared_linear", r_squared_linear}, {"n_points", n_points}};
}

PowerLawFit fit_power_law(const std::vector<Point2>& points) {
  if (points.size() < 2) throw Error("power-law fit needs at least two points");
  std::vector<double> lx, ly;
  for (const auto& [x, y] : points) {
    if (!(x > 0) || !(y > 0)) throw NonPositivePoint("power-law fit needs x > 0 and y > 0");
    lx.push_back(std::log(x));
    ly.push_back(std::log(y));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0) throw DegenerateX("power-law fit: all x are equal");
  PowerLawFit fit;
  fit.n_points = points.size();
  fit.b = sxy / sxx;
  fit.a = std::exp(my - fit.b * mx);
  double ss_res = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - (my + fit.b * (lx[i] - mx));
    ss_res += r * r;
  }
  fit.r_squared = syy > 0 ? 1.0 - ss_res / syy : 1.0;

  double ym = 0;
  for (const auto& p : points) ym += p.second;
  ym /= static_cast<double>(points.size());
  double lin_res = 0, lin_tot = 0;
  for (const auto& [x, y] : points) {
    lin_res += (y - fit(x)) * (y - fit(x));
    lin_tot += (y - ym) * (y - ym);
  }
  fit.r_squared_linear = lin_tot > 0 ? 1.0 - lin_res / lin_tot : 1.0;
  return fit;
}

json CorrelationResult::to_json() const {
  return {{"pearson", opt(pearson)}, {"spearman", opt(spearman)}, {"kendall", opt(kendall)}, {"n", n}};
}

std::vector<double> average_ranks(const std::vector<double>& xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> kendall_tau_b(const std::vector<double>& xs, const std::vector<double>& ys) {
  // O(n^2); the inputs here are per-model or per-sample series of modest size.
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      ++pairs;
      const double dx = xs[i] - xs[j], dy = ys[i] - ys[j];
      if (dx == 0) ++ties_x;
      if (dy == 0) ++ties_y;
      if (dx == 0 || dy == 0) continue;
      ((dx > 0) == (dy > 0) ? concordant : discordant)++;
    }
  }
  const double denom = std::sqrt(static_cast<double>(pairs - ties_x) * static_cast<double>(pairs - ties_y));
  if (denom == 0) return std::nullopt;
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

CorrelationResult correlations(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw LengthMismatch("series lengths differ: " + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()));
  }
  if (xs.size() < 2) throw LengthMismatch("correlations need at least two points");
  CorrelationResult r;
  r.n = xs.size();
  r.pearson = pearson(xs, ys);
  r.spearman = pearson(average_ranks(xs), average_ranks(ys));
  r.kendall = kendall_tau_b(xs, ys);
  return r;
}

json GainAnalysis::to_json() const {
  json pts = json::array();
  for (const auto& [x, y] : points) pts.push_back({x, y});
  return {{"points", pts}, {"rho", opt(rho)}, {"ceiling", "y = 1 - x"}, {"n", points.size()}};
}

std::string GainAnalysis::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "sim_copy,gain,ceiling\n";
  for (const auto& [x, y] : points) os << x << ',' << y << ',' << 1.0 - x << '\n';
  return os.str();
}

GainAnalysis gain_analysis(const std::vector<Point2>& rows) {
  if (rows.empty()) throw Error("gain analysis needs at least one row");
  GainAnalysis g;
  std::vector<double> xs, ys;
  for (const auto& [copy, pred] : rows) {
    g.points.push_back({copy, pred - copy});
    xs.push_back(copy);
    ys.push_back(pred);
  }
  if (rows.size() >= 2) g.rho = pearson(xs, ys);
  return g;
}

GainAnalysis gain_analysis(const BenchmarkReport& report) {
  std::vector<Point2> rows;
  for (const auto& r : report.rows) {
    if (r.sim_pred) rows.push_back({r.sim_copy.mean, r.sim_pred->mean});
  }
  return gain_analysis(rows);
}

std::vector<SizedScore> pareto_frontier(const std::vector<SizedScore>& points) {
  std::vector<SizedScore> out;
  for (const auto& p : points) {
    const bool dominated = std::any_of(points.begin(), points.end(), [&](const SizedScore& q) {
      return q.size <= p.size && q.score > p.score;
    });
    if (!dominated) out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size < b.size; });
  return out;
}

std::vector<SizedScore> load_sized_scores_csv(const std::filesystem::path& path) {
  std::vector<SizedScore> out;
  for (const auto& raw : read_lines(path)) {
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss{std::string(line)};
    for (std::string c; std::getline(ss, c, ',');) cols.emplace_back(trim(c));
    if (cols.size() != 3) throw Error(path.string() + ": expected label,size,score");
    try {
      out.push_back({std::stod(cols[1]), std::stod(cols[2]), cols[0]});
    } catch (const std::invalid_argument&) {
      if (!out.empty()) throw Error(path.string() + ": bad number in '" + std::string(line) + "'");
      // header line
    }
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series, bool log_x) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  auto tx = [&](double x) { return log_x ? std::log10(x) : x; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (log_x && !(x > 0)) continue;
      x0 = std::min(x0, tx(x));
      x1 = std::max(x1, tx(x));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
     << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double sx = L + (W - L - R) * i / 4.0, sy = H - B - (H - T - B) * i / 4.0;
    os << "<text x=\"" << sx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
       << (log_x ? std::pow(10.0, fx) : fx) << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << fy << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">"
     << xml_escape(x_label) << (log_x ? " (log scale)" : "") << "</text>\n";
  os << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(y_label) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % std::size(kColors)];
    if (s.line) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto& [x, y] : s.points) {
        if (!log_x || x > 0) os << px(x) << ',' << py(y) << ' ';
      }
      os << "\"/>\n";
    } else {
      for (const auto& [x, y] : s.points) {
        if (!log_x || x > 0) {
          os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
      }
    }
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (si + 1) << "\" text-anchor=\"end\" fill=\"" << color
       << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace codewm
