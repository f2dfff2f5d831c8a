#include "mergetest/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace mergetest {

Mlp::Mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("mlp needs at least two layer sizes");
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l];
    const int out = layer_sizes[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("mlp layer sizes must be positive");
    double limit = std::sqrt(6.0 / (in + out));
    if (l + 2 == layer_sizes.size()) limit *= 0.1;
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    }
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("mlp needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].bias.size() != layers_[l].weight.rows()) {
      throw std::invalid_argument("mlp bias size does not match layer output");
    }
    if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
      throw std::invalid_argument("mlp layer shapes do not chain");
    }
  }
}

int Mlp::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols());
}

int Mlp::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows());
}

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(input_dim());
  for (const auto& layer : layers_) sizes.push_back(static_cast<int>(layer.weight.rows()));
  return sizes;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::VectorXd z = layers_[l].weight * h + layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh();
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& batch, Cache* cache) const {
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(batch);
  }
  Eigen::MatrixXd h = batch;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * h;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh();
    h = std::move(z);
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

std::vector<DenseLayer> Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_output) const {
  std::vector<DenseLayer> grads(layers_.size());
  Eigen::MatrixXd delta = d_output;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.activations[l];
    grads[l].weight = delta * input.transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = layers_[l].weight.transpose() * delta;
    // tanh'(z) = 1 - tanh(z)^2, with tanh(z) being the cached activation.
    delta = upstream.array() * (1.0 - input.array().square());
  }
  return grads;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != other.layers_[l].weight.rows() ||
        layers_[l].weight.cols() != other.layers_[l].weight.cols()) {
      return false;
    }
    if (layers_[l].weight != other.layers_[l].weight) return false;
    if (layers_[l].bias != other.layers_[l].bias) return false;
  }
  return true;
}

}  // namespace mergetest
