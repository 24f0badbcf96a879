#pragma once

// Accuracy metrics, percentiles, paired t-tests, Table-style reports and
// injury-threshold flags.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headstrain/impact_data.hpp"

namespace headstrain {

struct ImpactError {
  std::string impact_id;
  double mae = 0.0;
  double rmse = 0.0;
};

struct ErrorSummary {
  std::vector<ImpactError> impacts;
  double mean_mae = 0.0;
  double mean_rmse = 0.0;

  std::vector<double> maes() const;
};

/// Per impact (row) MAE and RMSE over elements; aggregates are means over
/// impacts. `ids` may be empty (rows are then numbered).
ErrorSummary error_metrics(const Matrix& pred, const Matrix& ref, const std::vector<std::string>& ids = {});

/// Linear interpolation at rank 1 + (n - 1) q / 100 of the sorted values.
double percentile(std::span<const double> values, double q);

struct TTestResult {
  double t = 0.0;
  double p_two_sided = 1.0;
  std::size_t n = 0;
};

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction,
/// converged to 1e-12.
double incomplete_beta(double a, double b, double x);

/// Student-t CDF with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// d = a - b; t = mean(d) / (sd(d) / sqrt(n)) with n - 1 degrees of freedom.
/// Throws DegenerateTestError when sd(d) == 0 and DimensionError on bad input.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// 100 (value - baseline) / baseline. Throws ReportError when baseline == 0.
double relative_change(double baseline, double value);

/// One decimal with explicit sign, e.g. "-52.8%", "+2.8%"; exact zero is "0".
std::string format_relative_change(double percent);

/// Per-impact errors of one method on one (target, dataset).
struct MethodErrors {
  LabelKind target = LabelKind::MPS;
  std::string dataset;
  std::string method;
  ErrorSummary errors;
  /// Optional per-impact weights (shift-GAN KMM); yields a weighted-MAE diagnostic.
  std::optional<std::vector<double>> weights;
};

struct MethodReport {
  std::string method;
  LabelKind target = LabelKind::MPS;
  std::string dataset;
  double mean_mae = 0.0;
  double mean_rmse = 0.0;
  double relative_mae_change = 0.0;
  double relative_rmse_change = 0.0;
  std::optional<double> t_statistic;
  std::optional<double> p_value;
  bool degenerate_test = false;  // baseline row or zero-variance differences
  std::optional<double> weighted_mae;
  std::size_t impacts = 0;
};

struct Report {
  std::vector<MethodReport> rows;

  /// Aligned text table.
  std::string to_text() const;
  /// Machine-readable CSV.
  std::string to_csv() const;
};

/// One row per (target, dataset, method), in input order. Relative changes
/// and paired t-tests of per-impact MAE are computed against the method named
/// `baseline` on the same (target, dataset). Throws ReportError when that
/// baseline is missing.
Report build_report(const std::vector<MethodErrors>& errors, const std::string& baseline = "baseline");

struct ThresholdConfig {
  double mps_threshold = 0.3;
  double mpsr_threshold = 120.0;  // 1/s
  double percentile = 95.0;
  void validate() const;
  bool operator==(const ThresholdConfig&) const = default;
};

struct ThresholdFlag {
  std::string impact_id;
  LabelKind kind = LabelKind::MPS;
  double percentile_value = 0.0;
  bool flagged = false;
};

/// flag = percentile(field) > threshold for the field's kind (strict).
std::vector<ThresholdFlag> threshold_flags(std::span<const LabelField> fields, const ThresholdConfig& cfg,
                                           const std::vector<std::string>& ids = {});

}  // namespace headstrain
