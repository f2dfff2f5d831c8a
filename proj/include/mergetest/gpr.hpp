#pragma once

// Gaussian process regression surrogate of a VUT's performance surface.
//
// Squared-exponential ARD kernel
//   k(s, s') = sf2 * exp(-sum_d (s_d - s'_d)^2 / (2 l_d^2))
// on inputs normalized to [0,1]^d, a constant mean beta and i.i.d. Gaussian
// observation noise of variance noise. Hyperparameters are fitted by
// multi-start Nelder-Mead on the log marginal likelihood in log space, with
// beta profiled out in closed form.

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include <json.hpp>

namespace mergetest {

struct GprHyperparameters {
  double signal_variance = 1.0;
  std::vector<double> lengthscales;
  double noise_variance = 1e-6;
  double mean = 0.0;
};

struct GprBounds {
  double lengthscale_min = 1e-2;
  double lengthscale_max = 1e1;
  // Relative to the sample variance of the targets.
  double signal_variance_min = 1e-6;
  double signal_variance_max = 1e2;
  double noise_variance_min = 1e-6;
  double noise_variance_max = 1.0;
};

struct GprFitOptions {
  double initial_lengthscale = 0.2;
  int restarts = 4;
  int max_evaluations = 150;  // per restart
  double jitter_start = 1e-6;
  double jitter_max = 1e-2;
  GprBounds bounds;
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
  double stddev() const;
};

class GprModel {
 public:
  // Conditions a GP with fixed hyperparameters on data. Throws
  // IllConditionedError if the kernel matrix cannot be factorized even with
  // the maximum jitter.
  static GprModel condition(Eigen::MatrixXd inputs, Eigen::VectorXd targets,
                            GprHyperparameters hyper, double jitter_start = 1e-6,
                            double jitter_max = 1e-2);

  const GprHyperparameters& hyperparameters() const { return hyper_; }
  const Eigen::MatrixXd& inputs() const { return inputs_; }  // n x d
  const Eigen::VectorXd& targets() const { return targets_; }
  int dim() const { return static_cast<int>(inputs_.cols()); }
  int size() const { return static_cast<int>(inputs_.rows()); }
  // Extra diagonal added during factorization (relative to signal variance).
  double jitter() const { return jitter_; }

  Posterior predict(const Eigen::VectorXd& query) const;
  std::vector<Posterior> predict(const Eigen::MatrixXd& queries) const;  // m x d

  double log_marginal_likelihood() const;

  nlohmann::json to_json() const;

 private:
  GprHyperparameters hyper_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd targets_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 const GprHyperparameters& hyper);
Eigen::MatrixXd se_gram(const Eigen::MatrixXd& inputs, const GprHyperparameters& hyper);

// Exact Gaussian log marginal likelihood of (targets - mean) under `hyper`.
double log_marginal_likelihood(const GprHyperparameters& hyper, const Eigen::MatrixXd& inputs,
                               const Eigen::VectorXd& targets, double jitter_start = 1e-6,
                               double jitter_max = 1e-2);

struct GprFitReport {
  double initial_lml = 0.0;
  double final_lml = 0.0;
  int evaluations = 0;
};

// Maximum-likelihood fit. `initial` seeds the first restart (defaults are
// derived from the data when absent); the returned model never has a lower
// log marginal likelihood than the initial point.
GprModel fit_gpr(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                 const std::optional<GprHyperparameters>& initial = std::nullopt,
                 const GprFitOptions& options = {}, GprFitReport* report = nullptr);

}  // namespace mergetest
