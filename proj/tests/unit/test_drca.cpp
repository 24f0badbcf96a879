#include <gtest/gtest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "headstrain/drca.hpp"
#include "headstrain/error.hpp"
#include "headstrain/rng.hpp"

using namespace headstrain;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index n, Eigen::Index d, const Vector& mean) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = mean(j) + rng.normal();
  return m;
}

DrcaConfig toy_config() {
  DrcaConfig cfg;
  cfg.dim = 1;
  cfg.alpha = 1.0;
  cfg.epsilon = 1e-6;
  cfg.standardize = false;
  return cfg;
}

const Matrix kToyS = (Matrix(2, 2) << 0, 0, 2, 0).finished();
const Matrix kToyT = (Matrix(2, 2) << 1, 1, 1, 3).finished();

}  // namespace

TEST(Drca, ToyClosedForm) {
  const ProjectionModel m = fit_drca(kToyS, kToyT, toy_config());
  ASSERT_EQ(m.output_dim(), 1u);
  EXPECT_GT(std::abs(m.projection(0, 0)), 0.999);
  const double eps = m.ridge;
  EXPECT_NEAR(eps, 1e-6 * 2.0, 1e-12);
  EXPECT_NEAR(m.eigenvalues(0) / (2.0 / eps), 1.0, 1e-6);
  EXPECT_NEAR(m.eigenvalues(1) / (2.0 / (4.0 + eps)), 1.0, 1e-6);
}

TEST(Drca, ToyObjectiveValues) {
  const ProjectionModel m = fit_drca(kToyS, kToyT, toy_config());
  const ScatterSummary s = scatter_summary(kToyS, kToyT);
  const Matrix e1 = (Matrix(2, 1) << 1, 0).finished();
  const Matrix e2 = (Matrix(2, 1) << 0, 1).finished();
  EXPECT_NEAR(drca_objective(e1, s, 1.0, m.ridge) * m.ridge / 2.0, 1.0, 1e-9);
  EXPECT_NEAR(drca_objective(e2, s, 1.0, m.ridge), 2.0 / (4.0 + m.ridge), 1e-12);
  EXPECT_NEAR(drca_objective(-3.5 * e2, s, 1.0, m.ridge), drca_objective(e2, s, 1.0, m.ridge), 1e-12);
}

TEST(Drca, ZeroDenominatorIsInfinite) {
  const ScatterSummary s = scatter_summary(kToyS, kToyT);
  const Matrix e1 = (Matrix(2, 1) << 1, 0).finished();
  bool zero = false;
  EXPECT_TRUE(std::isinf(drca_objective(e1, s, 1.0, 0.0, &zero)));
  EXPECT_TRUE(zero);
}

TEST(Drca, IdenticalDomainsGivePrincipalAxes) {
  Rng rng(1);
  Matrix x = gaussian(rng, 200, 4, Vector::Zero(4));
  x.col(2) *= 3.0;
  x.col(0) *= 2.0;
  DrcaConfig cfg;
  cfg.dim = 2;
  cfg.standardize = false;
  const ProjectionModel m = fit_drca(x, x, cfg);
  const ScatterSummary s = scatter_summary(x, x);
  const Eigen::SelfAdjointEigenSolver<Matrix> es(s.s_w_s + s.s_w_t);
  for (int k = 0; k < 2; ++k) {
    const Vector ref = es.eigenvectors().col(3 - k);
    EXPECT_NEAR(std::abs(ref.dot(m.projection.col(k))), 1.0, 1e-8);
  }
}

TEST(Drca, MaximizesRayleighQuotient) {
  Rng rng(2);
  Vector shift = Vector::Zero(5);
  shift(1) = 2.0;
  const Matrix xs = gaussian(rng, 80, 5, Vector::Zero(5));
  const Matrix xt = gaussian(rng, 60, 5, shift);
  DrcaConfig cfg;
  cfg.dim = 1;
  const ProjectionModel m = fit_drca(xs, xt, cfg);
  const ScatterSummary s = scatter_summary(m.standardize(xs), m.standardize(xt));
  const double best = drca_objective(m, s);
  for (int i = 0; i < 1000; ++i) {
    Matrix q(5, 1);
    for (int j = 0; j < 5; ++j) q(j, 0) = rng.normal();
    q /= q.norm();
    ASSERT_GE(best * (1.0 + 1e-9), drca_objective(q, s, cfg.alpha, m.ridge));
  }
}

TEST(Drca, GeneralizedResidualsAndConventions) {
  Rng rng(3);
  Vector shift = Vector::Constant(6, 0.5);
  const Matrix xs = gaussian(rng, 50, 6, Vector::Zero(6));
  const Matrix xt = gaussian(rng, 40, 6, shift);
  DrcaConfig cfg;
  cfg.dim = 3;
  const ProjectionModel m = fit_drca(xs, xt, cfg);
  const ScatterSummary s = scatter_summary(m.standardize(xs), m.standardize(xt));
  const Matrix num = s.s_w_s + cfg.alpha * s.s_w_t;
  Matrix den = s.s_b;
  den.diagonal().array() += m.ridge;
  for (Eigen::Index k = 0; k < 3; ++k) {
    const Vector p = m.projection.col(k);
    EXPECT_LE((num * p - m.theta(k) * den * p).norm(), 1e-8 * (num.norm() + m.theta(k) * den.norm()));
    EXPECT_NEAR(p.norm(), 1.0, 1e-12);
    EXPECT_GT(m.theta(k), 0.0);
    if (k > 0) EXPECT_GT(m.theta(k - 1), m.theta(k));
  }
}

TEST(Drca, ShrinksBetweenDomainScatter) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Vector shift = Vector::Zero(6);
    shift(static_cast<Eigen::Index>(seed % 6)) = 1.5;
    shift((static_cast<Eigen::Index>(seed) + 2) % 6) = -1.0;
    const Matrix xs = gaussian(rng, 100, 6, Vector::Zero(6));
    const Matrix xt = gaussian(rng, 100, 6, shift);
    DrcaConfig cfg;
    cfg.dim = 3;
    const ProjectionModel m = fit_drca(xs, xt, cfg);
    const ScatterSummary before = scatter_summary(m.standardize(xs), m.standardize(xt));
    const ScatterSummary after = scatter_summary(drca_transform(m, xs), drca_transform(m, xt));
    const double r0 = before.s_b.trace() / (before.s_w_s + before.s_w_t).trace();
    const double r1 = after.s_b.trace() / (after.s_w_s + after.s_w_t).trace();
    EXPECT_LT(r1, r0) << "seed " << seed;
  }
}

TEST(Drca, TransformIsAffineAndShaped) {
  Rng rng(4);
  const Matrix xs = gaussian(rng, 30, 4, Vector::Zero(4));
  const Matrix xt = gaussian(rng, 30, 4, Vector::Ones(4));
  DrcaConfig cfg;
  cfg.dim = 2;
  const ProjectionModel m = fit_drca(xs, xt, cfg);
  const Matrix z = drca_transform(m, xs);
  EXPECT_EQ(z.cols(), 2);
  const Matrix mean_row = xs.colwise().mean();
  EXPECT_LT((drca_transform(m, mean_row) - z.colwise().mean()).norm(), 1e-12);
}

TEST(Drca, IdentityProjectionIsIdentityMap) {
  ProjectionModel m;
  m.projection = Matrix::Identity(3, 3);
  m.center = Vector::Zero(3);
  m.scale = Vector::Ones(3);
  const Matrix x = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  EXPECT_TRUE(drca_transform(m, x) == x);
}

TEST(Drca, ConfigAndSchemaErrors) {
  DrcaConfig cfg;
  cfg.dim = 2;
  EXPECT_THROW(fit_drca(kToyS, kToyT, cfg), ConfigError);
  cfg.dim = 1;
  cfg.alpha = -1.0;
  EXPECT_THROW(fit_drca(kToyS, kToyT, cfg), ConfigError);

  FeatureMatrix a, b;
  a.schema.entries = {{"ax", "peak"}, {"ax", "min"}};
  a.values = kToyS;
  b = a;
  b.values = kToyT;
  const ProjectionModel m = fit_drca(a, b, toy_config());
  FeatureMatrix other = a;
  other.schema.entries = {{"ay", "peak"}, {"ay", "min"}};
  EXPECT_THROW(drca_transform(m, other), SchemaError);
}

TEST(Drca, JsonRoundTrip) {
  Rng rng(5);
  const Matrix xs = gaussian(rng, 30, 4, Vector::Zero(4));
  const Matrix xt = gaussian(rng, 30, 4, Vector::Ones(4));
  DrcaConfig cfg;
  cfg.dim = 2;
  const ProjectionModel m = fit_drca(xs, xt, cfg, 1234);
  const ProjectionModel back = ProjectionModel::from_json(m.to_json());
  EXPECT_TRUE(back.projection == m.projection);
  EXPECT_TRUE(back.center == m.center);
  EXPECT_EQ(back.schema_fingerprint, 1234u);
  EXPECT_TRUE(back.config == m.config);
}
