#include "headstrain/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "headstrain/error.hpp"

namespace headstrain {

namespace {

void require_square(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols())
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
}

Eigen::MatrixXd within_scatter(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  Eigen::MatrixXd s = centered.transpose() * centered;
  return 0.5 * (s + s.transpose());
}

}  // namespace

ScatterSummary scatter_summary(const Eigen::MatrixXd& x_s, const Eigen::MatrixXd& x_t) {
  if (x_s.cols() != x_t.cols())
    throw DimensionError("scatter_summary: source has " + std::to_string(x_s.cols()) + " columns, target has " +
                         std::to_string(x_t.cols()));
  if (x_s.rows() < 2 || x_t.rows() < 2) throw DimensionError("scatter_summary: each domain needs at least two samples");

  ScatterSummary s;
  s.n_s = static_cast<std::size_t>(x_s.rows());
  s.n_t = static_cast<std::size_t>(x_t.rows());
  const double ns = static_cast<double>(s.n_s);
  const double nt = static_cast<double>(s.n_t);
  s.mu_s = x_s.colwise().mean().transpose();
  s.mu_t = x_t.colwise().mean().transpose();
  s.mu = (ns * s.mu_s + nt * s.mu_t) / (ns + nt);
  s.s_w_s = within_scatter(x_s, s.mu_s);
  s.s_w_t = within_scatter(x_t, s.mu_t);
  const Eigen::VectorXd ds = s.mu_s - s.mu;
  const Eigen::VectorXd dt = s.mu_t - s.mu;
  s.s_b = ns * ds * ds.transpose() + nt * dt * dt.transpose();
  return s;
}

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& a) {
  require_square(a, "cholesky");
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0)) throw NotPositiveDefiniteError(static_cast<std::size_t>(j) + 1);
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = a(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return l;
}

void normalize_columns(Eigen::MatrixXd& v) {
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    const double norm = v.col(c).norm();
    if (norm > 0.0) v.col(c) /= norm;
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
      // first index wins ties, up to rounding noise
      if (std::abs(v(r, c)) > best * (1.0 + 1e-12)) {
        best = std::abs(v(r, c));
        arg = r;
      }
    }
    if (v(arg, c) < 0.0) v.col(c) = -v.col(c);
  }
}

EigenPairs sym_eig(const Eigen::MatrixXd& input) {
  require_square(input, "sym_eig");
  const Eigen::Index n = input.rows();
  const double scale = std::max(1.0, input.cwiseAbs().maxCoeff());
  if ((input - input.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw SymmetryError("sym_eig: matrix is not symmetric");

  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double target = 1e-12 * a.norm();

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  // Cyclic Jacobi in round-robin order: each step applies n/2 disjoint
  // rotations, so both the column and the row updates run down contiguous
  // columns. A sweep of m - 1 steps visits every pair once.
  const Eigen::Index m = n + (n % 2);
  std::vector<Eigen::Index> players(static_cast<std::size_t>(m));
  struct Rotation {
    Eigen::Index p, q;
    double c, s, app, aqq;
  };
  std::vector<Rotation> rots;
  rots.reserve(static_cast<std::size_t>(m / 2));

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && n > 1; ++sweep) {
    const double off = off_norm();
    if (off <= target) break;
    std::iota(players.begin(), players.end(), Eigen::Index{0});
    for (Eigen::Index step = 0; step < m - 1; ++step) {
      rots.clear();
      for (Eigen::Index k = 0; k < m / 2; ++k) {
        Eigen::Index p = players[static_cast<std::size_t>(k)];
        Eigen::Index q = players[static_cast<std::size_t>(m - 1 - k)];
        if (p >= n || q >= n) continue;
        if (p > q) std::swap(p, q);
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(app) + g == std::abs(app) && std::abs(aqq) + g == std::abs(aqq)) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        rots.push_back({p, q, c, t * c, app - t * apq, aqq + t * apq});
      }
      for (const auto& r : rots) {
        for (Eigen::MatrixXd* mat : {&a, &v}) {
          double* cp = mat->col(r.p).data();
          double* cq = mat->col(r.q).data();
          for (Eigen::Index k = 0; k < n; ++k) {
            const double xp = cp[k];
            const double xq = cq[k];
            cp[k] = r.c * xp - r.s * xq;
            cq[k] = r.s * xp + r.c * xq;
          }
        }
      }
      if (!rots.empty()) {
        for (Eigen::Index k = 0; k < n; ++k) {
          double* col = a.col(k).data();
          for (const auto& r : rots) {
            const double xp = col[r.p];
            const double xq = col[r.q];
            col[r.p] = r.c * xp - r.s * xq;
            col[r.q] = r.s * xp + r.c * xq;
          }
        }
        for (const auto& r : rots) {
          a(r.p, r.p) = r.app;
          a(r.q, r.q) = r.aqq;
          a(r.p, r.q) = a(r.q, r.p) = 0.0;
        }
      }
      std::rotate(players.begin() + 1, players.end() - 1, players.end());
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  EigenPairs out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  normalize_columns(out.vectors);
  return out;
}

EigenPairs generalized_eig(const Eigen::MatrixXd& m, const Eigen::MatrixXd& b) {
  require_square(m, "generalized_eig");
  require_square(b, "generalized_eig");
  if (m.rows() != b.rows()) throw DimensionError("generalized_eig: M and B differ in size");

  const Eigen::MatrixXd l = cholesky(b);
  const auto lower = l.triangularView<Eigen::Lower>();
  // C = L^-1 M L^-T
  Eigen::MatrixXd tmp = lower.solve(m);
  Eigen::MatrixXd c = lower.solve(tmp.transpose());
  c = 0.5 * (c + c.transpose());

  EigenPairs whitened = sym_eig(c);
  EigenPairs out;
  out.values = whitened.values;
  out.vectors = l.transpose().triangularView<Eigen::Upper>().solve(whitened.vectors);
  normalize_columns(out.vectors);
  return out;
}

}  // namespace headstrain
