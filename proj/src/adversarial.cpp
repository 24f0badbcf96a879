#include "headstrain/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "headstrain/drca.hpp"
#include "headstrain/error.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

namespace {

Matrix to_network_space(const Matrix& x, const Vector& center, const Vector& scale) {
  return ((x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array()).matrix().transpose();
}

Matrix from_network_space(const Matrix& z, const Vector& center, const Vector& scale) {
  return (z.transpose().array().rowwise() * scale.transpose().array()).rowwise() + center.transpose().array();
}

DenseNet make_generator(std::size_t dim, const GanConfig& cfg, Rng& rng) {
  std::vector<LayerSpec> hidden;
  for (auto w : cfg.generator_widths) hidden.push_back({w, Activation::ReLU, 0.0});
  DenseNet g = DenseNet::make(dim, hidden, dim, Activation::Linear, rng);
  g.set_residual(true);
  if (cfg.identity_init) {
    g.layers().back().weight.setZero();
    g.layers().back().bias.setZero();
  }
  return g;
}

DenseNet make_discriminator(std::size_t dim, const GanConfig& cfg, Rng& rng) {
  std::vector<LayerSpec> hidden;
  for (auto w : cfg.discriminator_widths) hidden.push_back({w, Activation::ReLU, 0.0});
  return DenseNet::make(dim, hidden, 1, Activation::Sigmoid, rng);
}

Matrix noise_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix m = Matrix::Ones(rows, cols);
  if (p <= 0.0) return m;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r)
      if (rng.uniform() < p) m(r, c) = 0.0;
  return m;
}

double cycle_value(const Matrix& diff, CycleNorm norm) {
  const double n = static_cast<double>(diff.size());
  if (norm == CycleNorm::L1) return diff.cwiseAbs().sum() / n;
  return diff.squaredNorm() / n;
}

Matrix cycle_grad(const Matrix& diff, CycleNorm norm, double weight) {
  const double n = static_cast<double>(diff.size());
  if (norm == CycleNorm::L1) return (weight / n) * diff.array().sign().matrix();
  return (2.0 * weight / n) * diff;
}

void accumulate(Gradients& into, const Gradients& g) {
  for (std::size_t l = 0; l < into.weight.size(); ++l) {
    into.weight[l] += g.weight[l];
    into.bias[l] += g.bias[l];
  }
}

Matrix gather_columns(const Matrix& m, const std::vector<std::size_t>& order, std::size_t start, std::size_t count) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(count));
  const std::size_t n = order.size();
  for (std::size_t k = 0; k < count; ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(order[(start + k) % n]));
  return out;
}

// One discriminator ascent step on real columns vs fake columns.
double discriminator_step(DenseNet& d, Adam& opt, const Matrix& real, const Matrix& fake) {
  Matrix both(real.rows(), real.cols() + fake.cols());
  both << real, fake;
  const ForwardCache cache = d.forward_train(both, nullptr);
  const double nr = static_cast<double>(real.cols());
  const double nf = static_cast<double>(fake.cols());
  Matrix grad(1, both.cols());
  grad.leftCols(real.cols()).setConstant(-1.0 / nr);
  grad.rightCols(fake.cols()).setConstant(1.0 / nf);
  const double objective = cache.output.leftCols(real.cols()).mean() - cache.output.rightCols(fake.cols()).mean();
  opt.step(d, d.backward(cache, grad));
  return -objective;
}

Matrix rbf_kernel(const Matrix& a, const Matrix& b, double bandwidth) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * a * b.transpose()).colwise() + na;
  d2.rowwise() += nb.transpose();
  const double g = 1.0 / (2.0 * bandwidth * bandwidth);
  return (-g * d2.cwiseMax(0.0)).array().exp().matrix();
}

void check_kmm_inputs(const Matrix& ref, const Matrix& adj) {
  if (ref.cols() != adj.cols())
    throw DimensionError("kmm: reference has " + std::to_string(ref.cols()) + " columns, adjusted set has " +
                         std::to_string(adj.cols()));
  if (adj.rows() < 2) throw DimensionError("kmm: need at least 2 rows to reweight");
  if (ref.rows() < 1) throw DimensionError("kmm: empty reference set");
}

}  // namespace

const char* to_string(CycleNorm n) noexcept { return n == CycleNorm::L1 ? "l1" : "l2"; }

CycleNorm cycle_norm_from_string(const std::string& s) {
  if (s == "l2") return CycleNorm::L2;
  if (s == "l1") return CycleNorm::L1;
  throw ConfigError("unknown cycle norm '" + s + "' (expected l1 or l2)");
}

void GanConfig::validate() const {
  if (!(lambda_s > 0.0) || !(lambda_t > 0.0)) throw ConfigError("gan.lambda_s and gan.lambda_t must be positive");
  if (!(noise_dropout >= 0.0 && noise_dropout < 1.0)) throw ConfigError("gan.noise_dropout must be in [0, 1)");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("gan learning rates must be positive");
  if (epochs < 1) throw ConfigError("gan.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("gan.batch_size must be >= 1");
  for (auto w : generator_widths)
    if (w == 0) throw ConfigError("gan.generator_widths entries must be >= 1");
  for (auto w : discriminator_widths)
    if (w == 0) throw ConfigError("gan.discriminator_widths entries must be >= 1");
}

CycleGanModel init_cyclegan(const Matrix& xs, const GanConfig& cfg) {
  cfg.validate();
  if (xs.rows() < 2 || xs.cols() < 1) throw DimensionError("cycle-gan: need at least 2 source rows");
  CycleGanModel m;
  m.config = cfg;
  std::tie(m.center, m.scale) = column_standardization(xs);
  const auto dim = static_cast<std::size_t>(xs.cols());
  Rng gs(mix_seed(cfg.seed, 10)), gt(mix_seed(cfg.seed, 11)), ds(mix_seed(cfg.seed, 12)), dt(mix_seed(cfg.seed, 13));
  m.g_s = make_generator(dim, cfg, gs);
  m.g_t = make_generator(dim, cfg, gt);
  m.d_s = make_discriminator(dim, cfg, ds);
  m.d_t = make_discriminator(dim, cfg, dt);
  return m;
}

CycleGanModel train_cyclegan(const Matrix& xs_raw, const Matrix& xt_raw, const GanConfig& cfg) {
  if (xs_raw.cols() != xt_raw.cols())
    throw DimensionError("cycle-gan: source has " + std::to_string(xs_raw.cols()) + " features, target has " +
                         std::to_string(xt_raw.cols()));
  if (xt_raw.rows() < 2) throw DimensionError("cycle-gan: need at least 2 target rows");
  CycleGanModel m = init_cyclegan(xs_raw, cfg);
  const Matrix xs = to_network_space(xs_raw, m.center, m.scale);
  const Matrix xt = to_network_space(xt_raw, m.center, m.scale);
  const auto ns = static_cast<std::size_t>(xs.cols());
  const auto nt = static_cast<std::size_t>(xt.cols());
  const std::size_t batch = std::min({cfg.batch_size, ns, nt});
  const std::size_t batches = (std::max(ns, nt) + batch - 1) / batch;

  Adam opt_gs(m.g_s, {cfg.lr_g}), opt_gt(m.g_t, {cfg.lr_g});
  Adam opt_ds(m.d_s, {cfg.lr_d}), opt_dt(m.d_t, {cfg.lr_d});
  Rng shuffle(mix_seed(cfg.seed, 20));
  Rng noise(mix_seed(cfg.seed, 21));
  const double p = cfg.noise_dropout;
  const Eigen::Index dim = xs.rows();
  const auto bcols = static_cast<Eigen::Index>(batch);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto perm_s = shuffle.permutation(ns);
    const auto perm_t = shuffle.permutation(nt);
    GanEpoch rec;
    for (std::size_t b = 0; b < batches; ++b) {
      const Matrix bs = gather_columns(xs, perm_s, b * batch, batch);
      const Matrix bt = gather_columns(xt, perm_t, b * batch, batch);

      // Discriminators.
      {
        const Matrix fake_t = m.g_s.forward(bs.cwiseProduct(noise_mask(dim, bcols, p, noise)));
        const Matrix fake_s = m.g_t.forward(bt.cwiseProduct(noise_mask(dim, bcols, p, noise)));
        rec.loss_d += discriminator_step(m.d_s, opt_ds, bs, fake_s) + discriminator_step(m.d_t, opt_dt, bt, fake_t);
      }

      // Generators.
      const Matrix m1 = noise_mask(dim, bcols, p, noise);
      const Matrix m2 = noise_mask(dim, bcols, p, noise);
      const Matrix m3 = noise_mask(dim, bcols, p, noise);
      const Matrix m4 = noise_mask(dim, bcols, p, noise);
      const ForwardCache s1 = m.g_s.forward_train(bs.cwiseProduct(m1), nullptr);  // source -> fake target
      const ForwardCache s2 = m.g_t.forward_train(s1.output.cwiseProduct(m2), nullptr);
      const ForwardCache t1 = m.g_t.forward_train(bt.cwiseProduct(m3), nullptr);  // target -> fake source
      const ForwardCache t2 = m.g_s.forward_train(t1.output.cwiseProduct(m4), nullptr);
      const ForwardCache dt_fake = m.d_t.forward_train(s1.output, nullptr);
      const ForwardCache ds_fake = m.d_s.forward_train(t1.output, nullptr);

      const Matrix diff_s = s2.output - bs;
      const Matrix diff_t = t2.output - bt;
      const double cyc_s = cycle_value(diff_s, cfg.norm);
      const double cyc_t = cycle_value(diff_t, cfg.norm);
      const double adv = -dt_fake.output.mean() - ds_fake.output.mean();
      rec.cycle_s += cyc_s;
      rec.cycle_t += cyc_t;
      rec.adv_g += adv;
      if (!std::isfinite(cyc_s) || !std::isfinite(cyc_t) || !std::isfinite(adv))
        throw DivergenceError("train_cyclegan", epoch);

      if (!cfg.freeze_generators) {
        const Matrix adv_grad = Matrix::Constant(1, bcols, -1.0 / static_cast<double>(batch));
        Matrix g_in;

        // Source cycle: x_s -> G_s -> G_t.
        Gradients grad_gt = m.g_t.backward(s2, cycle_grad(diff_s, cfg.norm, cfg.lambda_s), &g_in);
        Matrix d_fake_t = g_in.cwiseProduct(m2);
        m.d_t.backward(dt_fake, adv_grad, &g_in);
        d_fake_t += g_in;
        Gradients grad_gs = m.g_s.backward(s1, d_fake_t);

        // Target cycle: x_t -> G_t -> G_s.
        accumulate(grad_gs, m.g_s.backward(t2, cycle_grad(diff_t, cfg.norm, cfg.lambda_t), &g_in));
        Matrix d_fake_s = g_in.cwiseProduct(m4);
        m.d_s.backward(ds_fake, adv_grad, &g_in);
        d_fake_s += g_in;
        accumulate(grad_gt, m.g_t.backward(t1, d_fake_s));

        opt_gs.step(m.g_s, grad_gs);
        opt_gt.step(m.g_t, grad_gt);
      }
    }
    const double nb = static_cast<double>(batches);
    rec.cycle_s /= nb;
    rec.cycle_t /= nb;
    rec.adv_g /= nb;
    rec.loss_d /= nb;
    if (!std::isfinite(rec.loss_d)) throw DivergenceError("train_cyclegan", epoch);
    m.history.push_back(rec);
  }
  return m;
}

CycleGanModel train_cyclegan(const FeatureMatrix& xs, const FeatureMatrix& xt, const GanConfig& cfg) {
  if (xs.schema.fingerprint() != xt.schema.fingerprint())
    throw SchemaError("cycle-gan: source and target feature schemas differ");
  CycleGanModel m = train_cyclegan(xs.values, xt.values, cfg);
  m.schema_fingerprint = xs.schema.fingerprint();
  return m;
}

std::pair<double, double> cycle_losses(const CycleGanModel& model, const Matrix& xs_raw, const Matrix& xt_raw) {
  const Matrix xs = to_network_space(xs_raw, model.center, model.scale);
  const Matrix xt = to_network_space(xt_raw, model.center, model.scale);
  const double s = cycle_value(model.g_t.forward(model.g_s.forward(xs)) - xs, model.config.norm);
  const double t = cycle_value(model.g_s.forward(model.g_t.forward(xt)) - xt, model.config.norm);
  return {s, t};
}

Matrix translate_to_source(const CycleGanModel& model, const Matrix& xt) {
  if (xt.cols() != model.center.size())
    throw DimensionError("translate_to_source: model expects " + std::to_string(model.center.size()) + " features, got " +
                         std::to_string(xt.cols()));
  return from_network_space(model.g_t.forward(to_network_space(xt, model.center, model.scale)), model.center, model.scale);
}

FeatureMatrix translate_to_source(const CycleGanModel& model, const FeatureMatrix& xt) {
  if (model.schema_fingerprint != 0 && xt.schema.fingerprint() != model.schema_fingerprint)
    throw SchemaError("translate_to_source: feature schema does not match the cycle-gan model");
  FeatureMatrix out;
  out.values = translate_to_source(model, xt.values);
  out.schema = xt.schema;
  out.ids = xt.ids;
  out.domain_tag = "translated-target";
  return out;
}

nlohmann::json CycleGanModel::to_json() const {
  const auto& c = config;
  return {{"kind", "cyclegan"},
          {"config",
           {{"generator_widths", c.generator_widths},
            {"discriminator_widths", c.discriminator_widths},
            {"lambda_s", c.lambda_s},
            {"lambda_t", c.lambda_t},
            {"noise_dropout", c.noise_dropout},
            {"lr_g", c.lr_g},
            {"lr_d", c.lr_d},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"norm", to_string(c.norm)},
            {"identity_init", c.identity_init},
            {"freeze_generators", c.freeze_generators}}},
          {"center", vector_to_json(center)},
          {"scale", vector_to_json(scale)},
          {"schema_fingerprint", schema_fingerprint},
          {"g_s", g_s.to_json()},
          {"g_t", g_t.to_json()},
          {"d_s", d_s.to_json()},
          {"d_t", d_t.to_json()},
          {"history", [&] {
             nlohmann::json h = nlohmann::json::array();
             for (const auto& e : history)
               h.push_back({{"cycle_s", e.cycle_s}, {"cycle_t", e.cycle_t}, {"adv_g", e.adv_g}, {"loss_d", e.loss_d}});
             return h;
           }()}};
}

CycleGanModel CycleGanModel::from_json(const nlohmann::json& j) {
  try {
    CycleGanModel m;
    const auto& c = j.at("config");
    m.config.generator_widths = c.at("generator_widths").get<std::vector<std::size_t>>();
    m.config.discriminator_widths = c.at("discriminator_widths").get<std::vector<std::size_t>>();
    m.config.lambda_s = c.at("lambda_s").get<double>();
    m.config.lambda_t = c.at("lambda_t").get<double>();
    m.config.noise_dropout = c.at("noise_dropout").get<double>();
    m.config.lr_g = c.at("lr_g").get<double>();
    m.config.lr_d = c.at("lr_d").get<double>();
    m.config.epochs = c.at("epochs").get<std::size_t>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.config.norm = cycle_norm_from_string(c.at("norm").get<std::string>());
    m.config.identity_init = c.at("identity_init").get<bool>();
    m.config.freeze_generators = c.at("freeze_generators").get<bool>();
    m.center = vector_from_json(j.at("center"));
    m.scale = vector_from_json(j.at("scale"));
    m.schema_fingerprint = j.at("schema_fingerprint").get<std::uint64_t>();
    m.g_s = DenseNet::from_json(j.at("g_s"));
    m.g_t = DenseNet::from_json(j.at("g_t"));
    m.d_s = DenseNet::from_json(j.at("d_s"));
    m.d_t = DenseNet::from_json(j.at("d_t"));
    for (const auto& e : j.at("history"))
      m.history.push_back({e.at("cycle_s").get<double>(), e.at("cycle_t").get<double>(), e.at("adv_g").get<double>(),
                           e.at("loss_d").get<double>()});
    const auto dim = static_cast<std::size_t>(m.center.size());
    if (m.scale.size() != m.center.size() || m.g_s.input_dim() != dim || m.g_t.input_dim() != dim ||
        m.d_s.input_dim() != dim || m.d_t.input_dim() != dim)
      throw IoError("cycle-gan model: network shapes do not match the standardization vectors");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed cycle-gan model: ") + e.what());
  }
}

void KmmConfig::validate() const {
  if (bandwidth && !(*bandwidth > 0.0)) throw ConfigError("kmm.bandwidth must be positive");
  if (!(weight_cap > 1.0)) throw ConfigError("kmm.weight_cap must be > 1");
  if (!(slack > 0.0)) throw ConfigError("kmm.slack must be positive");
  if (iterations < 1) throw ConfigError("kmm.iterations must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("kmm.tolerance must be positive");
}

double median_pairwise_distance(const Matrix& a, const Matrix& b) {
  constexpr Eigen::Index kMaxRows = 600;
  const Eigen::Index total = a.rows() + b.rows();
  const Eigen::Index stride = (total + kMaxRows - 1) / kMaxRows;
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < total; i += stride) rows.push_back(i);
  auto row = [&](Eigen::Index i) -> Vector { return i < a.rows() ? Vector(a.row(i).transpose()) : Vector(b.row(i - a.rows()).transpose()); };
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector ri = row(rows[i]);
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back((ri - row(rows[j])).norm());
  }
  if (d.empty()) return 1.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
  return med > 0.0 ? med : 1.0;
}

double kmm_objective(const Matrix& ref, const Matrix& adj, const Vector& beta, double bandwidth) {
  check_kmm_inputs(ref, adj);
  if (beta.size() != adj.rows()) throw DimensionError("kmm_objective: weight count does not match rows");
  const double n = static_cast<double>(adj.rows());
  const double m = static_cast<double>(ref.rows());
  const double aa = beta.dot(rbf_kernel(adj, adj, bandwidth) * beta) / (n * n);
  const double ar = beta.dot(rbf_kernel(adj, ref, bandwidth).rowwise().sum()) / (n * m);
  const double rr = rbf_kernel(ref, ref, bandwidth).sum() / (m * m);
  return std::max(0.0, aa - 2.0 * ar + rr);
}

Vector project_kmm_feasible(const Vector& v, double cap, double slack) {
  auto clipped_mean = [&](double tau) { return (v.array() - tau).cwiseMax(0.0).cwiseMin(cap).mean(); };
  const double m0 = clipped_mean(0.0);
  double goal = 0.0;
  double lo = 0.0, hi = 0.0;
  if (m0 > 1.0 + slack) {
    goal = 1.0 + slack;
    hi = v.maxCoeff();
  } else if (m0 < 1.0 - slack) {
    goal = 1.0 - slack;
    lo = v.minCoeff() - cap;
  } else {
    return v.cwiseMax(0.0).cwiseMin(cap);
  }
  // clipped_mean is nonincreasing in tau; bisect to the bound that was violated.
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (clipped_mean(mid) > goal)
      lo = mid;
    else
      hi = mid;
  }
  const double tau = 0.5 * (lo + hi);
  return (v.array() - tau).cwiseMax(0.0).cwiseMin(cap).matrix();
}

KmmResult kmm_weights(const Matrix& ref, const Matrix& adj, const KmmConfig& cfg) {
  cfg.validate();
  check_kmm_inputs(ref, adj);
  KmmResult out;
  out.bandwidth = cfg.bandwidth ? *cfg.bandwidth : median_pairwise_distance(ref, adj);
  const double n = static_cast<double>(adj.rows());
  const double m = static_cast<double>(ref.rows());
  const Matrix k = rbf_kernel(adj, adj, out.bandwidth);
  const Vector kappa = rbf_kernel(adj, ref, out.bandwidth).rowwise().sum();
  const double rr = rbf_kernel(ref, ref, out.bandwidth).sum() / (m * m);
  auto objective = [&](const Vector& b) { return std::max(0.0, b.dot(k * b) / (n * n) - 2.0 * b.dot(kappa) / (n * m) + rr); };
  auto gradient = [&](const Vector& b) -> Vector { return (2.0 / (n * n)) * (k * b) - (2.0 / (n * m)) * kappa; };
  // Kernel entries are nonnegative, so the largest row sum bounds lambda_max(K).
  const double lipschitz = std::max(2.0 * k.rowwise().sum().maxCoeff() / (n * n), 1e-300);

  Vector beta = Vector::Ones(adj.rows());
  out.uniform_objective = objective(beta);
  out.weights = beta;
  out.objective = out.uniform_objective;
  Vector y = beta;
  double t = 1.0;
  double current = out.uniform_objective;
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const Vector next = project_kmm_feasible(y - gradient(y) / lipschitz, cfg.weight_cap, cfg.slack);
    const double value = objective(next);
    const double step = (next - beta).cwiseAbs().maxCoeff();
    out.iterations = it;
    if (value < out.objective) {
      out.objective = value;
      out.weights = next;
    }
    if (value > current) {
      // Restart momentum when the objective goes up.
      t = 1.0;
      y = beta;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = next + ((t - 1.0) / t_next) * (next - beta);
    beta = next;
    current = value;
    t = t_next;
    if (step < cfg.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace headstrain
