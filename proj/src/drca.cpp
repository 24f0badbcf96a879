#include "headstrain/drca.hpp"

#include <cmath>
#include <iostream>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

void DrcaConfig::validate(std::size_t input_dim) const {
  if (dim < 1) throw ConfigError("drca.dim must be >= 1");
  if (input_dim > 0 && dim >= input_dim)
    throw ConfigError("drca.dim (" + std::to_string(dim) + ") must be smaller than the feature dimension (" +
                      std::to_string(input_dim) + ")");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("drca.alpha must be a finite value >= 0");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("drca.epsilon must be positive");
}

Matrix ProjectionModel::standardize(const Matrix& x) const {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

std::pair<Vector, Vector> column_standardization(const Matrix& x, double floor) {
  Vector mean = x.colwise().mean().transpose();
  Vector sd(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - mean(c)).square().mean();
    sd(c) = std::max(std::sqrt(var), floor);
  }
  return {mean, sd};
}

ProjectionModel fit_drca(const Matrix& x_s, const Matrix& x_t, const DrcaConfig& cfg, std::uint64_t fingerprint) {
  if (x_s.cols() != x_t.cols())
    throw DimensionError("fit_drca: source has " + std::to_string(x_s.cols()) + " columns, target " +
                         std::to_string(x_t.cols()));
  const auto dim_in = static_cast<std::size_t>(x_s.cols());
  cfg.validate(dim_in);

  ProjectionModel model;
  model.config = cfg;
  model.schema_fingerprint = fingerprint;
  if (cfg.standardize) {
    std::tie(model.center, model.scale) = column_standardization(x_s);
  } else {
    model.center = Vector::Zero(x_s.cols());
    model.scale = Vector::Ones(x_s.cols());
  }

  const ScatterSummary sum = scatter_summary(model.standardize(x_s), model.standardize(x_t));
  const auto d = static_cast<double>(dim_in);
  const Matrix numerator = sum.s_w_s + cfg.alpha * sum.s_w_t;
  // delta keeps the denominator definite when the domain means coincide
  const double delta = 1e-12 * std::max(numerator.trace() / d, 1.0);
  model.ridge = cfg.epsilon * (sum.s_b.trace() / d + delta);
  Matrix denominator = sum.s_b;
  denominator.diagonal().array() += model.ridge;

  const EigenPairs pairs = generalized_eig(numerator, denominator);
  model.eigenvalues = pairs.values;
  model.theta = pairs.values.head(static_cast<Eigen::Index>(cfg.dim));
  model.projection = pairs.vectors.leftCols(static_cast<Eigen::Index>(cfg.dim));
  return model;
}

ProjectionModel fit_drca(const FeatureMatrix& x_s, const FeatureMatrix& x_t, const DrcaConfig& cfg) {
  if (x_s.schema.fingerprint() != x_t.schema.fingerprint())
    throw DimensionError("fit_drca: source and target feature schemas differ");
  return fit_drca(x_s.values, x_t.values, cfg, x_s.schema.fingerprint());
}

Matrix drca_transform(const ProjectionModel& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_dim())
    throw DimensionError("drca_transform: expected " + std::to_string(model.input_dim()) + " columns, got " +
                         std::to_string(x.cols()));
  return model.standardize(x) * model.projection;
}

Matrix drca_transform(const ProjectionModel& model, const FeatureMatrix& x) {
  if (model.schema_fingerprint != 0 && x.schema.fingerprint() != model.schema_fingerprint)
    throw SchemaError("drca_transform: feature schema fingerprint does not match the projection model");
  return drca_transform(model, x.values);
}

double drca_objective(const Matrix& projection, const ScatterSummary& summary, double alpha, double ridge,
                      bool* zero_denominator) {
  if (projection.rows() != summary.s_b.rows())
    throw DimensionError("drca_objective: projection has " + std::to_string(projection.rows()) +
                         " rows, scatter matrices are " + std::to_string(summary.s_b.rows()) + " wide");
  const double num = (projection.transpose() * (summary.s_w_s + alpha * summary.s_w_t) * projection).trace();
  const double den = (projection.transpose() * summary.s_b * projection).trace() + ridge * projection.squaredNorm();
  if (zero_denominator) *zero_denominator = false;
  if (!(std::abs(den) > 0.0)) {
    if (zero_denominator) *zero_denominator = true;
    std::cerr << "warning: drca_objective has a zero denominator; reporting +inf\n";
    return std::numeric_limits<double>::infinity();
  }
  return num / den;
}

double drca_objective(const ProjectionModel& model, const ScatterSummary& summary) {
  return drca_objective(model.projection, summary, model.config.alpha, model.ridge);
}

nlohmann::json ProjectionModel::to_json() const {
  return {{"kind", "drca_projection"},
          {"config",
           {{"dim", config.dim}, {"alpha", config.alpha}, {"epsilon", config.epsilon}, {"standardize", config.standardize}}},
          {"schema_fingerprint", schema_fingerprint},
          {"ridge", ridge},
          {"projection", matrix_to_json(projection)},
          {"theta", vector_to_json(theta)},
          {"eigenvalues", vector_to_json(eigenvalues)},
          {"center", vector_to_json(center)},
          {"scale", vector_to_json(scale)}};
}

ProjectionModel ProjectionModel::from_json(const nlohmann::json& j) {
  try {
    ProjectionModel m;
    const auto& c = j.at("config");
    m.config.dim = c.at("dim").get<std::size_t>();
    m.config.alpha = c.at("alpha").get<double>();
    m.config.epsilon = c.at("epsilon").get<double>();
    m.config.standardize = c.at("standardize").get<bool>();
    m.schema_fingerprint = j.at("schema_fingerprint").get<std::uint64_t>();
    m.ridge = j.at("ridge").get<double>();
    m.projection = matrix_from_json(j.at("projection"));
    m.theta = vector_from_json(j.at("theta"));
    m.eigenvalues = vector_from_json(j.at("eigenvalues"));
    m.center = vector_from_json(j.at("center"));
    m.scale = vector_from_json(j.at("scale"));
    if (m.center.size() != m.projection.rows() || m.scale.size() != m.projection.rows())
      throw IoError("drca model: standardization length does not match the projection");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed drca model: ") + e.what());
  }
}

}  // namespace headstrain
