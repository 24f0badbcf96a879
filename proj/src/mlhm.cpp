#include "headstrain/mlhm.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "headstrain/drca.hpp"
#include "headstrain/error.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows, std::size_t begin, std::size_t end) {
  Matrix out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Eigen::Index>(i - begin)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Matrix standardize(const Matrix& x, const Vector& center, const Vector& scale) {
  return (x.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

double mse(const DenseNet& net, const Matrix& xt, const Matrix& yt) {
  if (xt.cols() == 0) return 0.0;
  return (net.forward(xt) - yt).colwise().squaredNorm().mean();
}

}  // namespace

const char* to_string(InputScaling s) noexcept {
  return s == InputScaling::Isotropic ? "isotropic" : "per_column";
}

InputScaling input_scaling_from_string(const std::string& s) {
  if (s == "per_column") return InputScaling::PerColumn;
  if (s == "isotropic") return InputScaling::Isotropic;
  throw ConfigError("unknown input scaling '" + s + "' (expected per_column or isotropic)");
}

MlhmArch MlhmArch::desk(std::size_t input_dim, std::size_t output_dim) {
  return {input_dim, {{64, Activation::ReLU, 0.1}, {32, Activation::ReLU, 0.1}, {16, Activation::ReLU, 0.0}}, output_dim};
}

MlhmArch MlhmArch::large(std::size_t input_dim, std::size_t output_dim) {
  return {input_dim, {{500, Activation::ReLU, 0.5}, {300, Activation::ReLU, 0.5}, {100, Activation::ReLU, 0.0}}, output_dim};
}

void MlhmArch::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("mlhm arch: input and output widths must be >= 1");
  for (const auto& h : hidden) {
    if (h.width == 0) throw ConfigError("mlhm arch: hidden widths must be >= 1");
    if (!(h.dropout >= 0.0 && h.dropout < 1.0)) throw ConfigError("mlhm arch: dropout rates must be in [0, 1)");
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(l2_weight >= 0.0)) throw ConfigError("train.l2_weight must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0))
    throw ConfigError("train split fractions must be positive");
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
    throw ConfigError("train split fractions must sum to 1");
}

MlhmModel init_mlhm(const MlhmArch& arch, std::uint64_t seed) {
  arch.validate();
  MlhmModel model;
  model.arch = arch;
  model.seed = seed;
  Rng rng(mix_seed(seed, 1));
  model.net = DenseNet::make(arch.input_dim, arch.hidden, arch.output_dim, Activation::Linear, rng);
  model.input_center = Vector::Zero(static_cast<Eigen::Index>(arch.input_dim));
  model.input_scale = Vector::Ones(static_cast<Eigen::Index>(arch.input_dim));
  model.output_center = Vector::Zero(static_cast<Eigen::Index>(arch.output_dim));
  model.output_scale = Vector::Ones(static_cast<Eigen::Index>(arch.output_dim));
  return model;
}

double mlhm_loss(const DenseNet& net, const Matrix& x, const Matrix& y, double l2) {
  return mse(net, x.transpose(), y.transpose()) + net.l2_penalty(l2);
}

Gradients mlhm_gradients(const DenseNet& net, const Matrix& x, const Matrix& y, double l2) {
  const Matrix xt = x.transpose();
  const ForwardCache cache = net.forward_train(xt, nullptr);
  const Matrix grad_out = 2.0 * (cache.output - y.transpose()) / static_cast<double>(x.rows());
  Gradients g = net.backward(cache, grad_out);
  net.add_l2(g, l2);
  return g;
}

MlhmModel train_mlhm(const Matrix& x, const Matrix& y, const TrainConfig& cfg, const MlhmArch& arch_in) {
  cfg.validate();
  MlhmArch arch = arch_in;
  if (arch.input_dim == 0) arch.input_dim = static_cast<std::size_t>(x.cols());
  if (arch.output_dim == 0) arch.output_dim = static_cast<std::size_t>(y.cols());
  if (x.rows() != y.rows())
    throw DimensionError("train_mlhm: " + std::to_string(x.rows()) + " input rows vs " + std::to_string(y.rows()) + " label rows");
  if (static_cast<std::size_t>(x.cols()) != arch.input_dim || static_cast<std::size_t>(y.cols()) != arch.output_dim)
    throw DimensionError("train_mlhm: data shape does not match the architecture");
  if (x.rows() < 10) throw DimensionError("train_mlhm: need at least 10 samples, got " + std::to_string(x.rows()));
  if (!x.allFinite() || !y.allFinite()) throw DimensionError("train_mlhm: non-finite training data");

  MlhmModel model = init_mlhm(arch, cfg.seed);

  const auto n = static_cast<std::size_t>(x.rows());
  Rng split_rng(mix_seed(cfg.seed, 0));
  const auto perm = split_rng.permutation(n);
  auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  n_val = std::max<std::size_t>(n_val, 1);
  n_train = std::clamp<std::size_t>(n_train, 1, n - n_val - 1);
  model.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  model.val_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                        perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  model.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());

  const Matrix x_train = gather_rows(x, model.train_rows, 0, n_train);
  const Matrix y_train = gather_rows(y, model.train_rows, 0, n_train);
  std::tie(model.input_center, model.input_scale) = column_standardization(x_train);
  if (cfg.input_scaling == InputScaling::Isotropic) model.input_scale.setConstant(model.input_scale.maxCoeff());
  std::tie(model.output_center, model.output_scale) = column_standardization(y_train);
  if (cfg.epochs == 0) return model;

  // Network space, one sample per column.
  const Matrix xs = standardize(x, model.input_center, model.input_scale).transpose();
  const Matrix ys = standardize(y, model.output_center, model.output_scale).transpose();
  auto columns = [](const Matrix& m, const std::vector<std::size_t>& idx, std::size_t b, std::size_t e) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(e - b));
    for (std::size_t i = b; i < e; ++i) out.col(static_cast<Eigen::Index>(i - b)) = m.col(static_cast<Eigen::Index>(idx[i]));
    return out;
  };
  const Matrix xt_train = columns(xs, model.train_rows, 0, model.train_rows.size());
  const Matrix yt_train = columns(ys, model.train_rows, 0, model.train_rows.size());
  const Matrix xt_val = columns(xs, model.val_rows, 0, model.val_rows.size());
  const Matrix yt_val = columns(ys, model.val_rows, 0, model.val_rows.size());

  Adam adam(model.net, AdamConfig{cfg.lr});
  Rng shuffle_rng(mix_seed(cfg.seed, 2));
  Rng dropout_rng(mix_seed(cfg.seed, 3));
  DenseNet best = model.net;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto shuffled = shuffle_rng.permutation(n_train);
    for (std::size_t b = 0; b < n_train; b += cfg.batch_size) {
      const std::size_t e = std::min(n_train, b + cfg.batch_size);
      const Matrix xb = columns(xt_train, shuffled, b, e);
      const Matrix yb = columns(yt_train, shuffled, b, e);
      const ForwardCache cache = model.net.forward_train(xb, &dropout_rng);
      const Matrix grad_out = 2.0 * (cache.output - yb) / static_cast<double>(e - b);
      Gradients g = model.net.backward(cache, grad_out);
      model.net.add_l2(g, cfg.l2_weight);
      adam.step(model.net, g);
    }
    const double train_loss = mse(model.net, xt_train, yt_train) + model.net.l2_penalty(cfg.l2_weight);
    const double val_loss = mse(model.net, xt_val, yt_val);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) throw DivergenceError("train_mlhm", epoch);
    model.history.train_loss.push_back(train_loss);
    model.history.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model.net;
      model.history.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.early_stop_patience > 0 && ++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  model.net = std::move(best);
  return model;
}

Matrix predict(const MlhmModel& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.arch.input_dim)
    throw DimensionError("predict: model expects " + std::to_string(model.arch.input_dim) + " inputs, got " +
                         std::to_string(x.cols()));
  const Matrix out = model.net.forward(standardize(x, model.input_center, model.input_scale).transpose()).transpose();
  return (out.array().rowwise() * model.output_scale.transpose().array()).rowwise() + model.output_center.transpose().array();
}

Matrix predict_train_mode(const MlhmModel& model, const Matrix& x, Rng& rng) {
  if (static_cast<std::size_t>(x.cols()) != model.arch.input_dim)
    throw DimensionError("predict: model expects " + std::to_string(model.arch.input_dim) + " inputs, got " +
                         std::to_string(x.cols()));
  const Matrix out =
      model.net.forward_train(standardize(x, model.input_center, model.input_scale).transpose(), &rng).output.transpose();
  return (out.array().rowwise() * model.output_scale.transpose().array()).rowwise() + model.output_center.transpose().array();
}

double gradient_check(const MlhmModel& model, const Vector& x, const Vector& y, double l2, double eps) {
  const Matrix xb = x.transpose();
  const Matrix yb = y.transpose();
  DenseNet net = model.net;
  for (auto& layer : net.layers()) layer.dropout = 0.0;
  const Gradients analytic = mlhm_gradients(net, xb, yb, l2);

  // The data and penalty terms are differenced separately: a dead unit's
  // weight gradient is only 2*l2*w, which would otherwise drown in the
  // rounding of the much larger data loss.
  double worst = 0.0;
  auto& layers = net.layers();
  auto probe = [&](double& param, double g_a, const Matrix* penalized) {
    const double saved = param;
    param = saved + eps;
    const double up = mlhm_loss(net, xb, yb, 0.0);
    const double pen_up = penalized ? l2 * penalized->squaredNorm() : 0.0;
    param = saved - eps;
    const double down = mlhm_loss(net, xb, yb, 0.0);
    const double pen_down = penalized ? l2 * penalized->squaredNorm() : 0.0;
    param = saved;
    const double g_n = ((up - down) + (pen_up - pen_down)) / (2.0 * eps);
    const double denom = std::max({std::abs(g_a), std::abs(g_n), 1e-12});
    worst = std::max(worst, std::abs(g_a - g_n) / denom);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index i = 0; i < layers[l].weight.size(); ++i)
      probe(layers[l].weight.data()[i], analytic.weight[l].data()[i], &layers[l].weight);
    for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) probe(layers[l].bias.data()[i], analytic.bias[l].data()[i], nullptr);
  }
  return worst;
}

nlohmann::json MlhmModel::to_json() const {
  nlohmann::json hidden = nlohmann::json::array();
  for (const auto& h : arch.hidden) hidden.push_back({{"width", h.width}, {"activation", to_string(h.activation)}, {"dropout", h.dropout}});
  return {{"kind", "mlhm"},
          {"arch", {{"input_dim", arch.input_dim}, {"hidden", hidden}, {"output_dim", arch.output_dim}}},
          {"net", net.to_json()},
          {"input_center", vector_to_json(input_center)},
          {"input_scale", vector_to_json(input_scale)},
          {"output_center", vector_to_json(output_center)},
          {"output_scale", vector_to_json(output_scale)},
          {"history", {{"train_loss", history.train_loss}, {"val_loss", history.val_loss}, {"best_epoch", history.best_epoch}}},
          {"seed", seed},
          {"split", {{"train", train_rows}, {"val", val_rows}, {"test", test_rows}}},
          {"input_space", input_space},
          {"input_fingerprint", input_fingerprint}};
}

MlhmModel MlhmModel::from_json(const nlohmann::json& j) {
  try {
    MlhmModel m;
    const auto& a = j.at("arch");
    m.arch.input_dim = a.at("input_dim").get<std::size_t>();
    m.arch.output_dim = a.at("output_dim").get<std::size_t>();
    for (const auto& h : a.at("hidden"))
      m.arch.hidden.push_back({h.at("width").get<std::size_t>(), activation_from_string(h.at("activation").get<std::string>()),
                               h.at("dropout").get<double>()});
    m.net = DenseNet::from_json(j.at("net"));
    m.input_center = vector_from_json(j.at("input_center"));
    m.input_scale = vector_from_json(j.at("input_scale"));
    m.output_center = vector_from_json(j.at("output_center"));
    m.output_scale = vector_from_json(j.at("output_scale"));
    const auto& h = j.at("history");
    m.history.train_loss = h.at("train_loss").get<std::vector<double>>();
    m.history.val_loss = h.at("val_loss").get<std::vector<double>>();
    m.history.best_epoch = h.at("best_epoch").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.train_rows = j.at("split").at("train").get<std::vector<std::size_t>>();
    m.val_rows = j.at("split").at("val").get<std::vector<std::size_t>>();
    m.test_rows = j.at("split").at("test").get<std::vector<std::size_t>>();
    m.input_space = j.at("input_space").get<std::string>();
    m.input_fingerprint = j.at("input_fingerprint").get<std::uint64_t>();
    if (m.net.input_dim() != m.arch.input_dim || m.net.output_dim() != m.arch.output_dim)
      throw IoError("mlhm model: network shape does not match the architecture");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed mlhm model: ") + e.what());
  }
}

}  // namespace headstrain
