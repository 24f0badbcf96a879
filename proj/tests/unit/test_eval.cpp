#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "headstrain/error.hpp"
#include "headstrain/eval.hpp"
#include "headstrain/rng.hpp"

using namespace headstrain;

namespace {

MethodErrors method_errors(const std::string& method, LabelKind kind, const std::vector<double>& maes) {
  MethodErrors me;
  me.method = method;
  me.target = kind;
  me.dataset = "cf";
  for (std::size_t i = 0; i < maes.size(); ++i) me.errors.impacts.push_back({"i" + std::to_string(i), maes[i], maes[i] * 1.2});
  me.errors.mean_mae = std::accumulate(maes.begin(), maes.end(), 0.0) / static_cast<double>(maes.size());
  me.errors.mean_rmse = 1.2 * me.errors.mean_mae;
  return me;
}

// Simpson-rule integral of the t density, an oracle independent of the
// continued fraction.
double t_cdf_by_quadrature(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 20000;
  const double h = std::abs(t) / n;
  double s = pdf(0) + pdf(std::abs(t));
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  const double half = s * h / 3;
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

}  // namespace

TEST(ErrorMetrics, HandExamples) {
  const Matrix ref = Matrix::Zero(1, 2);
  const Matrix pred = (Matrix(1, 2) << 3, -4).finished();
  const ErrorSummary s = error_metrics(pred, ref, {"a"});
  ASSERT_EQ(s.impacts.size(), 1u);
  EXPECT_DOUBLE_EQ(s.impacts[0].mae, 3.5);
  EXPECT_DOUBLE_EQ(s.impacts[0].rmse, std::sqrt(12.5));
  EXPECT_EQ(s.impacts[0].impact_id, "a");

  const ErrorSummary same = error_metrics(pred, pred);
  EXPECT_EQ(same.mean_mae, 0.0);
  EXPECT_EQ(same.mean_rmse, 0.0);

  const ErrorSummary c = error_metrics(Matrix::Constant(3, 4, 2.5), Matrix::Constant(3, 4, 0.5));
  EXPECT_DOUBLE_EQ(c.mean_mae, 2.0);
  EXPECT_DOUBLE_EQ(c.mean_rmse, 2.0);
  EXPECT_THROW(error_metrics(Matrix::Zero(2, 2), Matrix::Zero(2, 3)), DimensionError);
}

TEST(ErrorMetrics, RmseDominatesMae) {
  Rng rng(1);
  Matrix a(50, 16), b(50, 16);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a(i) = rng.normal();
    b(i) = rng.normal();
  }
  for (const auto& e : error_metrics(a, b).impacts) EXPECT_GE(e.rmse, e.mae);
}

TEST(Percentile, LinearInterpolation) {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_NEAR(percentile(v, 95.0), 95.05, 1e-12);
  EXPECT_EQ(percentile(v, 0.0), 1.0);
  EXPECT_EQ(percentile(v, 100.0), 100.0);
  const std::vector<double> c(7, 4.2);
  for (double q : {0.0, 33.0, 95.0, 100.0}) EXPECT_EQ(percentile(c, q), 4.2);
  EXPECT_THROW(percentile(std::vector<double>{}, 50.0), DimensionError);
  EXPECT_THROW(percentile(v, 101.0), ConfigError);
}

TEST(Percentile, MonotoneAndBounded) {
  Rng rng(2);
  std::vector<double> v(37);
  for (double& x : v) x = rng.normal();
  double prev = -INFINITY;
  for (double q = 0.0; q <= 100.0; q += 0.5) {
    const double p = percentile(v, q);
    EXPECT_GE(p, prev);
    EXPECT_GE(p, *std::min_element(v.begin(), v.end()));
    EXPECT_LE(p, *std::max_element(v.begin(), v.end()));
    prev = p;
  }
}

TEST(TTest, HandExample) {
  const std::vector<double> a{1, 2, 3}, b{2, 4, 6};
  const TTestResult r = paired_t_test(a, b);
  EXPECT_NEAR(r.t, -2.0 * std::sqrt(3.0), 1e-12);
  EXPECT_EQ(r.n, 3u);
  // Two-sided p for df 2 has the closed form 1 - |t| / sqrt(2 + t^2).
  EXPECT_NEAR(r.p_two_sided, 1.0 - 2.0 * std::sqrt(3.0) / std::sqrt(14.0), 1e-12);
  EXPECT_NEAR(r.p_two_sided, 0.0742, 5e-4);
  EXPECT_DOUBLE_EQ(paired_t_test(b, a).t, -r.t);
}

TEST(TTest, DegenerateAndTooShort) {
  const std::vector<double> a{1, 2, 3}, b{0, 1, 2};
  EXPECT_THROW(paired_t_test(a, b), DegenerateTestError);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), DimensionError);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1, 2}), DimensionError);
}

TEST(TDistribution, CriticalValues) {
  const std::pair<double, double> table[] = {{4.303, 2}, {2.228, 10}, {2.042, 30}};
  for (const auto& [t, df] : table) EXPECT_NEAR(2.0 * (1.0 - student_t_cdf(t, df)), 0.05, 5e-4) << df;
}

TEST(TDistribution, MatchesQuadrature) {
  for (double df : {1.0, 2.0, 5.0, 17.0, 60.0})
    for (double t : {-6.0, -2.5, -0.3, 0.0, 0.7, 1.9, 4.0})
      EXPECT_NEAR(student_t_cdf(t, df), t_cdf_by_quadrature(t, df), 1e-9) << t << " " << df;
}

TEST(IncompleteBeta, EndpointsAndSymmetry) {
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 0.0), 0.0);
  EXPECT_EQ(incomplete_beta(2.0, 3.0, 1.0), 1.0);
  // I_x(1, 1) = x; I_x(a, b) = 1 - I_{1-x}(b, a).
  EXPECT_NEAR(incomplete_beta(1.0, 1.0, 0.37), 0.37, 1e-14);
  EXPECT_NEAR(incomplete_beta(2.5, 4.0, 0.3), 1.0 - incomplete_beta(4.0, 2.5, 0.7), 1e-13);
  // I_x(a, 1) = x^a.
  EXPECT_NEAR(incomplete_beta(3.0, 1.0, 0.6), 0.216, 1e-13);
}

TEST(RelativeChange, PublishedExamples) {
  EXPECT_EQ(format_relative_change(relative_change(0.036, 0.017)), "-52.8%");
  EXPECT_EQ(format_relative_change(relative_change(6.005, 4.094)), "-31.8%");
  EXPECT_EQ(format_relative_change(relative_change(0.103, 0.020)), "-80.6%");
  EXPECT_EQ(relative_change(3.0, 3.0), 0.0);
  EXPECT_NEAR(relative_change(7.0 * 0.036, 7.0 * 0.017), relative_change(0.036, 0.017), 1e-12);
  EXPECT_THROW(relative_change(0.0, 1.0), ReportError);
}

TEST(Report, RowsAndRelativeChanges) {
  std::vector<MethodErrors> errs;
  errs.push_back(method_errors("baseline", LabelKind::MPS, {0.04, 0.03, 0.038, 0.036}));
  errs.push_back(method_errors("drca", LabelKind::MPS, {0.018, 0.016, 0.017, 0.017}));
  errs.push_back(method_errors("baseline", LabelKind::MPSR, {6.0, 6.01, 6.004, 6.006}));
  const Report r = build_report(errs);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].method, "baseline");
  EXPECT_TRUE(r.rows[0].degenerate_test);
  EXPECT_EQ(r.rows[0].relative_mae_change, 0.0);
  EXPECT_EQ(format_relative_change(r.rows[1].relative_mae_change), "-52.8%");
  ASSERT_TRUE(r.rows[1].p_value.has_value());
  EXPECT_LT(*r.rows[1].p_value, 0.05);
  EXPECT_EQ(r.rows[2].target, LabelKind::MPSR);
  const std::string text = r.to_text();
  EXPECT_NE(text.find("-52.8%"), std::string::npos);
  const std::string csv = r.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Report, WeightedMaeIsDiagnostic) {
  std::vector<MethodErrors> errs;
  errs.push_back(method_errors("baseline", LabelKind::MPS, {1.0, 2.0, 3.0}));
  MethodErrors w = method_errors("shiftgan", LabelKind::MPS, {1.0, 2.0, 4.0});
  w.weights = std::vector<double>{2.0, 1.0, 0.0};
  errs.push_back(w);
  const Report r = build_report(errs);
  ASSERT_TRUE(r.rows[1].weighted_mae.has_value());
  EXPECT_NEAR(*r.rows[1].weighted_mae, (2.0 * 1.0 + 1.0 * 2.0) / 3.0, 1e-12);
  EXPECT_NEAR(r.rows[1].mean_mae, 7.0 / 3.0, 1e-12);
  EXPECT_NE(r.to_text().find("diagnostic"), std::string::npos);
}

TEST(Report, MissingBaseline) {
  std::vector<MethodErrors> errs{method_errors("drca", LabelKind::MPS, {1.0, 2.0})};
  EXPECT_THROW(build_report(errs), ReportError);
}

TEST(Flags, StrictThresholds) {
  const ThresholdConfig cfg;
  std::vector<LabelField> fields;
  fields.push_back({LabelKind::MPS, Vector::Constant(10, 0.5)});
  fields.push_back({LabelKind::MPSR, Vector::Constant(10, 100.0)});
  fields.push_back({LabelKind::MPS, Vector::Constant(10, 0.3)});
  const auto flags = threshold_flags(fields, cfg, {"a", "b", "c"});
  ASSERT_EQ(flags.size(), 3u);
  EXPECT_TRUE(flags[0].flagged);
  EXPECT_FALSE(flags[1].flagged);
  EXPECT_FALSE(flags[2].flagged);
  EXPECT_EQ(flags[1].impact_id, "b");
  EXPECT_DOUBLE_EQ(flags[0].percentile_value, 0.5);
  ThresholdConfig bad;
  bad.mps_threshold = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
