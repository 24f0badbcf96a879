#include "headstrain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "headstrain/error.hpp"

namespace headstrain {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  return h;  // 1e-12 is reached long before kMaxIter for the parameters used here
}

}  // namespace

std::vector<double> ErrorSummary::maes() const {
  std::vector<double> v;
  v.reserve(impacts.size());
  for (const auto& e : impacts) v.push_back(e.mae);
  return v;
}

ErrorSummary error_metrics(const Matrix& pred, const Matrix& ref, const std::vector<std::string>& ids) {
  if (pred.rows() != ref.rows() || pred.cols() != ref.cols())
    throw DimensionError("error_metrics: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         ", reference is " + std::to_string(ref.rows()) + "x" + std::to_string(ref.cols()));
  if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != pred.rows())
    throw DimensionError("error_metrics: id count does not match row count");
  if (pred.cols() == 0) throw DimensionError("error_metrics: zero elements");
  ErrorSummary s;
  s.impacts.reserve(static_cast<std::size_t>(pred.rows()));
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const Eigen::ArrayXd diff = (pred.row(i) - ref.row(i)).transpose().array();
    ImpactError e;
    e.impact_id = ids.empty() ? std::to_string(i) : ids[static_cast<std::size_t>(i)];
    e.mae = diff.abs().mean();
    e.rmse = std::sqrt(diff.square().mean());
    s.mean_mae += e.mae;
    s.mean_rmse += e.rmse;
    s.impacts.push_back(std::move(e));
  }
  if (!s.impacts.empty()) {
    s.mean_mae /= static_cast<double>(s.impacts.size());
    s.mean_rmse /= static_cast<double>(s.impacts.size());
  }
  return s;
}

double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DimensionError("percentile: empty input");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile: q must be within [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * q / 100.0;  // 0-based rank
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DimensionError("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw DimensionError("student_t_cdf: df must be positive");
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_test: samples differ in length");
  if (a.size() < 2) throw DimensionError("paired_t_test: need at least two pairs");
  const std::size_t n = a.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw DegenerateTestError("paired_t_test: differences have zero variance");
  TTestResult r;
  r.n = n;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double df = static_cast<double>(n - 1);
  r.p_two_sided = std::min(1.0, incomplete_beta(0.5 * df, 0.5, df / (df + r.t * r.t)));
  return r;
}

double relative_change(double baseline, double value) {
  if (baseline == 0.0) throw ReportError("relative_change: baseline is zero");
  return 100.0 * (value - baseline) / baseline;
}

std::string format_relative_change(double percent) {
  if (percent == 0.0) return "0";
  return fmt("%+.1f%%", percent);
}

Report build_report(const std::vector<MethodErrors>& errors, const std::string& baseline) {
  std::map<std::pair<LabelKind, std::string>, const MethodErrors*> baselines;
  for (const auto& e : errors)
    if (e.method == baseline) baselines[{e.target, e.dataset}] = &e;

  Report report;
  for (const auto& e : errors) {
    const auto it = baselines.find({e.target, e.dataset});
    if (it == baselines.end())
      throw ReportError("report: baseline '" + baseline + "' missing for " + std::string(to_string(e.target)) + "/" +
                        e.dataset);
    const MethodErrors& base = *it->second;
    MethodReport row;
    row.method = e.method;
    row.target = e.target;
    row.dataset = e.dataset;
    row.mean_mae = e.errors.mean_mae;
    row.mean_rmse = e.errors.mean_rmse;
    row.impacts = e.errors.impacts.size();
    row.relative_mae_change = relative_change(base.errors.mean_mae, e.errors.mean_mae);
    row.relative_rmse_change = relative_change(base.errors.mean_rmse, e.errors.mean_rmse);
    if (&e == &base) {
      row.degenerate_test = true;
    } else {
      try {
        const auto t = paired_t_test(e.errors.maes(), base.errors.maes());
        row.t_statistic = t.t;
        row.p_value = t.p_two_sided;
      } catch (const DegenerateTestError&) {
        row.degenerate_test = true;
      }
    }
    if (e.weights) {
      if (e.weights->size() != e.errors.impacts.size()) throw ReportError("report: weight count does not match impacts");
      double wsum = 0.0, acc = 0.0;
      for (std::size_t i = 0; i < e.weights->size(); ++i) {
        wsum += (*e.weights)[i];
        acc += (*e.weights)[i] * e.errors.impacts[i].mae;
      }
      if (wsum > 0.0) row.weighted_mae = acc / wsum;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << "target,dataset,method,impacts,mean_mae,mean_rmse,relative_mae_change_pct,relative_rmse_change_pct,t_statistic,"
         "p_value,weighted_mae\n";
  for (const auto& r : rows) {
    out << to_string(r.target) << ',' << r.dataset << ',' << r.method << ',' << r.impacts << ',' << fmt("%.9g", r.mean_mae)
        << ',' << fmt("%.9g", r.mean_rmse) << ',' << fmt("%.4f", r.relative_mae_change) << ','
        << fmt("%.4f", r.relative_rmse_change) << ',' << (r.t_statistic ? fmt("%.6g", *r.t_statistic) : "") << ','
        << (r.p_value ? fmt("%.6g", *r.p_value) : "") << ',' << (r.weighted_mae ? fmt("%.9g", *r.weighted_mae) : "")
        << '\n';
  }
  return out.str();
}

std::string Report::to_text() const {
  const std::vector<std::string> header = {"Target", "Dataset", "Method", "MAE", "RMSE", "Rel. MAE Change",
                                           "Rel. RMSE Change", "t", "p"};
  std::vector<std::vector<std::string>> cells;
  bool any_weighted = false;
  for (const auto& r : rows) {
    cells.push_back({std::string(to_string(r.target)), r.dataset, r.method, fmt("%.4g", r.mean_mae),
                     fmt("%.4g", r.mean_rmse), format_relative_change(r.relative_mae_change),
                     format_relative_change(r.relative_rmse_change), r.t_statistic ? fmt("%.3f", *r.t_statistic) : "-", r.p_value ? fmt("%.3g", *r.p_value) : "-"});
    if (r.weighted_mae) {
      any_weighted = true;
      cells.back().push_back(fmt("%.4g", *r.weighted_mae));
    }
  }
  auto head = header;
  if (any_weighted) {
    head.push_back("KMM-weighted MAE*");
    for (auto& c : cells)
      if (c.size() < head.size()) c.push_back("-");
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c] << std::string(width[c] - row[c].size(), ' ');
      out << (c + 1 < row.size() ? "  " : "\n");
    }
  };
  emit(head);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out << std::string(total - 2, '-') << '\n';
  for (const auto& row : cells) emit(row);
  if (any_weighted) out << "* diagnostic only: per-impact MAE averaged with shift-GAN kernel-mean-matching weights\n";
  return out.str();
}

void ThresholdConfig::validate() const {
  if (!(mps_threshold > 0.0) || !(mpsr_threshold > 0.0)) throw ConfigError("thresholds must be positive");
  if (!(percentile >= 0.0 && percentile <= 100.0)) throw ConfigError("threshold percentile must be in [0, 100]");
}

std::vector<ThresholdFlag> threshold_flags(std::span<const LabelField> fields, const ThresholdConfig& cfg,
                                           const std::vector<std::string>& ids) {
  cfg.validate();
  if (!ids.empty() && ids.size() != fields.size()) throw DimensionError("threshold_flags: id count does not match fields");
  std::vector<ThresholdFlag> out;
  out.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto& f = fields[i];
    ThresholdFlag flag;
    flag.impact_id = ids.empty() ? std::to_string(i) : ids[i];
    flag.kind = f.kind;
    flag.percentile_value = percentile({f.element_values.data(), static_cast<std::size_t>(f.element_values.size())},
                                       cfg.percentile);
    flag.flagged = flag.percentile_value > (f.kind == LabelKind::MPS ? cfg.mps_threshold : cfg.mpsr_threshold);
    out.push_back(std::move(flag));
  }
  return out;
}

}  // namespace headstrain
