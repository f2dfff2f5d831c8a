#pragma once

// Small fully-connected network used as the action-value approximator.
// Hidden layers use tanh, the output layer is linear. Batches are stored
// column-wise (one sample per column).

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace mergetest {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden..., output
  };

  Mlp() = default;
  // Glorot-uniform initialization; the output layer is scaled down so initial
  // Q-values start near zero.
  Mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng);
  explicit Mlp(std::vector<DenseLayer> layers);

  int input_dim() const;
  int output_dim() const;
  std::vector<int> layer_sizes() const;
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch, Cache* cache) const;

  // Gradients of a loss w.r.t. every parameter, given dLoss/dOutput for the
  // batch that produced `cache`.
  std::vector<DenseLayer> backward(const Cache& cache, const Eigen::MatrixXd& d_output) const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

}  // namespace mergetest
