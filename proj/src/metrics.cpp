#include "agriscan/metrics.hpp"

#include "agriscan/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace agriscan {

PrecisionReport precision_stats(std::span<const double> d, int bins) {
  if (d.empty()) fail(ErrorCode::EmptyInput, "no distances");
  if (bins < 1) fail(ErrorCode::InvalidParams, "histogram needs at least one bin");
  PrecisionReport r;
  r.count = d.size();
  double sum = 0.0;
  for (double v : d) sum += v;
  r.mean = sum / static_cast<double>(d.size());
  double ss = 0.0;
  for (double v : d) ss += (v - r.mean) * (v - r.mean);
  r.sigma = d.size() > 1 ? std::sqrt(ss / static_cast<double>(d.size() - 1)) : 0.0;

  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / bins;
  r.histogram.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) r.histogram.edges[static_cast<std::size_t>(k)] = lo + width * k;
  r.histogram.edges.back() = hi;
  r.histogram.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : d) {
    int k = width > 0.0 ? static_cast<int>((v - lo) / width) : 0;
    k = std::clamp(k, 0, bins - 1);
    ++r.histogram.counts[static_cast<std::size_t>(k)];
  }
  return r;
}

LeafAreaReport completeness_report(double reference_area, double estimated_area) {
  if (!(reference_area > 0.0)) fail(ErrorCode::NonPositiveReference, "reference area must be positive");
  LeafAreaReport r;
  r.reference_area = reference_area;
  r.estimated_area = estimated_area;
  r.percent_diff = 100.0 * (estimated_area - reference_area) / reference_area;
  r.absolute_percent_diff = std::abs(r.percent_diff);
  return r;
}

double mean_absolute_percent(std::span<const double> p) {
  if (p.empty()) fail(ErrorCode::EmptyInput, "no percent differences");
  double s = 0.0;
  for (double v : p) s += std::abs(v);
  return s / static_cast<double>(p.size());
}

namespace {

std::string cell(const std::optional<double>& v, const char* fmt) {
  if (!v) return "-";
  char buf[64];
  // Avoid printing "-0.0".
  double x = *v;
  std::snprintf(buf, sizeof(buf), fmt, x);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.%") == std::string::npos) s.erase(0, 1);
  return s;
}

}  // namespace

std::string format_table_row(const TableRow& row) {
  return row.label + " | " + cell(row.sigma_laser_mm, "%.2f") + " | " + cell(row.sigma_camera_mm, "%.2f") +
         " | " + cell(row.area_diff_laser_pct, "%.1f%%") + " | " + cell(row.area_diff_camera_pct, "%.1f%%") +
         " | " + cell(row.reference_area_cm2, "%.2f");
}

std::string format_precision_table(const std::vector<TableRow>& leaves) {
  std::string out = "Leaf | sigma laser [mm] | sigma camera [mm] | area laser [%] | area camera [%] | ref [cm^2]\n";
  auto mean_of = [&](auto member, bool absolute) -> std::optional<double> {
    double s = 0.0;
    int n = 0;
    for (const TableRow& r : leaves) {
      const std::optional<double>& v = r.*member;
      if (!v) continue;
      s += absolute ? std::abs(*v) : *v;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return s / n;
  };
  for (const TableRow& r : leaves) out += format_table_row(r) + "\n";
  TableRow mean;
  mean.label = "mean";
  mean.sigma_laser_mm = mean_of(&TableRow::sigma_laser_mm, false);
  mean.sigma_camera_mm = mean_of(&TableRow::sigma_camera_mm, false);
  mean.area_diff_laser_pct = mean_of(&TableRow::area_diff_laser_pct, true);
  mean.area_diff_camera_pct = mean_of(&TableRow::area_diff_camera_pct, true);
  out += format_table_row(mean) + "\n";
  return out;
}

}  // namespace agriscan
