#include "headstrain/nn.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "headstrain/error.hpp"
#include "headstrain/serialize.hpp"

namespace headstrain {

namespace {

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::ReLU:
      return z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return (1.0 + (-z.array()).exp()).inverse().matrix();
    case Activation::Linear:
      break;
  }
  return z;
}

// Multiplies `grad` (dL/d activation) by the activation derivative at `z`.
void apply_activation_grad(Eigen::MatrixXd& grad, const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::ReLU:
      grad.array() *= (z.array() > 0.0).cast<double>();
      break;
    case Activation::Sigmoid: {
      const Eigen::ArrayXXd s = (1.0 + (-z.array()).exp()).inverse();
      grad.array() *= s * (1.0 - s);
      break;
    }
    case Activation::Linear:
      break;
  }
}

}  // namespace

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::ReLU:
      return "relu";
    case Activation::Sigmoid:
      return "sigmoid";
    case Activation::Linear:
      return "linear";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + s + "' (expected relu, sigmoid or linear)");
}

double Gradients::max_abs() const {
  double m = 0.0;
  for (const auto& w : weight) m = std::max(m, w.cwiseAbs().maxCoeff());
  for (const auto& b : bias) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

DenseNet DenseNet::make(std::size_t input_dim, const std::vector<LayerSpec>& hidden, std::size_t output_dim,
                        Activation output_activation, Rng& rng) {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("network input and output widths must be >= 1");
  DenseNet net;
  std::size_t fan_in = input_dim;
  auto add = [&](std::size_t width, Activation act, double dropout) {
    if (width == 0) throw ConfigError("layer width must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
    DenseLayer layer;
    const double limit = std::sqrt((act == Activation::ReLU ? 6.0 : 3.0) / static_cast<double>(fan_in));
    layer.weight.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-limit, limit);
    layer.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
    layer.activation = act;
    layer.dropout = dropout;
    net.layers_.push_back(std::move(layer));
    fan_in = width;
  };
  for (const auto& spec : hidden) add(spec.width, spec.activation, spec.dropout);
  add(output_dim, output_activation, 0.0);
  return net;
}

void DenseNet::set_residual(bool r) {
  if (r && input_dim() != output_dim()) throw DimensionError("residual network needs equal input and output widths");
  residual_ = r;
}

std::size_t DenseNet::input_dim() const noexcept {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t DenseNet::output_dim() const noexcept {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t DenseNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw DimensionError("network expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(x.rows()));
  Eigen::MatrixXd a = x;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    a = activate(z, layer.activation);
  }
  if (residual_) a += x;
  return a;
}

ForwardCache DenseNet::forward_train(const Eigen::MatrixXd& x, Rng* rng) const {
  if (static_cast<std::size_t>(x.rows()) != input_dim())
    throw DimensionError("network expects " + std::to_string(input_dim()) + " inputs, got " + std::to_string(x.rows()));
  ForwardCache cache;
  cache.inputs.reserve(layers_.size());
  cache.pre.reserve(layers_.size());
  cache.masks.resize(layers_.size());
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    cache.inputs.push_back(a);
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    a = activate(z, layer.activation);
    cache.pre.push_back(std::move(z));
    if (rng && layer.dropout > 0.0) {
      const double keep = 1.0 - layer.dropout;
      Eigen::MatrixXd mask(a.rows(), a.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
      a.array() *= mask.array();
      cache.masks[l] = std::move(mask);
    }
  }
  if (residual_) a += x;
  cache.output = std::move(a);
  return cache;
}

Gradients DenseNet::backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output,
                             Eigen::MatrixXd* grad_input) const {
  Gradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd grad = grad_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (cache.masks[l].size() > 0) grad.array() *= cache.masks[l].array();
    apply_activation_grad(grad, cache.pre[l], layer.activation);
    g.weight[l] = grad * cache.inputs[l].transpose();
    g.bias[l] = grad.rowwise().sum();
    if (l > 0 || grad_input) grad = layer.weight.transpose() * grad;
  }
  if (grad_input) {
    *grad_input = std::move(grad);
    if (residual_) *grad_input += grad_output;
  }
  return g;
}

double DenseNet::l2_penalty(double l2) const {
  double s = 0.0;
  for (const auto& layer : layers_) s += layer.weight.squaredNorm();
  return l2 * s;
}

double DenseNet::add_l2(Gradients& g, double l2) const {
  if (l2 != 0.0)
    for (std::size_t l = 0; l < layers_.size(); ++l) g.weight[l] += 2.0 * l2 * layers_[l].weight;
  return l2_penalty(l2);
}

Gradients DenseNet::zero_gradients() const {
  Gradients g;
  for (const auto& layer : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

nlohmann::json DenseNet::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& layer : layers_)
    arr.push_back({{"weight", matrix_to_json(layer.weight)},
                   {"bias", vector_to_json(layer.bias)},
                   {"activation", to_string(layer.activation)},
                   {"dropout", layer.dropout}});
  return {{"residual", residual_}, {"layers", arr}};
}

DenseNet DenseNet::from_json(const nlohmann::json& j) {
  DenseNet net;
  try {
    for (const auto& lj : j.at("layers")) {
      DenseLayer layer;
      layer.weight = matrix_from_json(lj.at("weight"));
      layer.bias = vector_from_json(lj.at("bias"));
      layer.activation = activation_from_string(lj.at("activation").get<std::string>());
      layer.dropout = lj.at("dropout").get<double>();
      if (layer.bias.size() != layer.weight.rows()) throw IoError("bias length does not match weight rows");
      if (!net.layers_.empty() && net.layers_.back().weight.rows() != layer.weight.cols())
        throw IoError("consecutive layer shapes do not chain");
      net.layers_.push_back(std::move(layer));
    }
    net.set_residual(j.at("residual").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed network: ") + e.what());
  }
  return net;
}

Adam::Adam(const DenseNet& net, AdamConfig cfg) : cfg_(cfg), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

void Adam::step(DenseNet& net, const Gradients& g) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double step = cfg_.lr * std::sqrt(bc2) / bc1;
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
    param.array() -= step * m.array() / (v.array().sqrt() + cfg_.eps * std::sqrt(bc2));
  };
  auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, g.weight[l], m_.weight[l], v_.weight[l]);
    update(layers[l].bias, g.bias[l], m_.bias[l], v_.bias[l]);
  }
}

}  // namespace headstrain
