#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace agriscan {

struct Histogram {
  std::vector<double> edges;  // bins + 1, ascending
  std::vector<std::size_t> counts;
};

struct PrecisionReport {
  double sigma = 0.0;  // m, unbiased standard deviation
  double mean = 0.0;   // m
  std::size_t count = 0;
  Histogram histogram;
};

/// Mean, unbiased standard deviation and a fixed-width histogram over
/// [min, max]. Throws EmptyInput.
PrecisionReport precision_stats(std::span<const double> distances, int bins = 50);

struct LeafAreaReport {
  double reference_area = 0.0;  // cm^2
  double estimated_area = 0.0;  // cm^2
  double percent_diff = 0.0;
  double absolute_percent_diff = 0.0;
};

/// Throws NonPositiveReference when reference_area <= 0.
LeafAreaReport completeness_report(double reference_area, double estimated_area);

/// Average of absolute percent differences.
double mean_absolute_percent(std::span<const double> percent_diffs);

struct TableRow {
  std::string label;
  std::optional<double> sigma_laser_mm;
  std::optional<double> sigma_camera_mm;
  std::optional<double> area_diff_laser_pct;
  std::optional<double> area_diff_camera_pct;
  std::optional<double> reference_area_cm2;
};

/// "1 | 0.48 | 0.55 | -3.3% | 4.1% | 23.78": sigmas and areas with two
/// decimals, percentages with one; missing cells print "-".
std::string format_table_row(const TableRow& row);

/// Header, one line per leaf and a closing "mean" row with the mean sigmas
/// and mean absolute percent differences.
std::string format_precision_table(const std::vector<TableRow>& leaves);

}  // namespace agriscan
