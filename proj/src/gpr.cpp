#include "mergetest/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

#include "mergetest/errors.hpp"

namespace mergetest {

double Posterior::stddev() const { return std::sqrt(std::max(0.0, variance)); }

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 const GprHyperparameters& hyper) {
  double q = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double diff = (a(d) - b(d)) / hyper.lengthscales[static_cast<std::size_t>(d)];
    q += diff * diff;
  }
  return hyper.signal_variance * std::exp(-0.5 * q);
}

namespace {

Eigen::MatrixXd scaled(const Eigen::MatrixXd& x, const std::vector<double>& lengthscales) {
  Eigen::MatrixXd out = x;
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    out.col(d) /= lengthscales[static_cast<std::size_t>(d)];
  }
  return out;
}

// sf2 * exp(-0.5 * |a_i - b_j|^2) for pre-scaled rows.
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sf2) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd sq = -2.0 * a * b.transpose();
  sq.colwise() += na;
  sq.rowwise() += nb.transpose();
  return sf2 * (-0.5 * sq.array().max(0.0)).exp().matrix();
}

struct Factorization {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
  bool ok = false;
};

Factorization factorize(const Eigen::MatrixXd& inputs, const GprHyperparameters& hyper,
                        double jitter_start, double jitter_max) {
  Eigen::MatrixXd k = se_gram(inputs, hyper);
  k.diagonal().array() += hyper.noise_variance;
  Factorization f;
  f.llt.compute(k);
  if (f.llt.info() == Eigen::Success) {
    f.ok = true;
    return f;
  }
  for (double j = jitter_start; j <= jitter_max * (1.0 + 1e-9); j *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += j * hyper.signal_variance;
    f.llt.compute(kj);
    if (f.llt.info() == Eigen::Success) {
      f.jitter = j;
      f.ok = true;
      return f;
    }
  }
  return f;
}

double lml_from_factor(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& centered) {
  const Eigen::VectorXd alpha = llt.solve(centered);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double n = static_cast<double>(centered.size());
  return -0.5 * centered.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

double sample_variance(const Eigen::VectorXd& y) {
  if (y.size() == 0) return 0.0;
  const double mean = y.mean();
  return (y.array() - mean).square().mean();
}

// Minimizes f over a box by Nelder-Mead with vertex projection.
struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& lo,
                             const Eigen::VectorXd& hi, double step, int max_evaluations) {
  const Eigen::Index n = start.size();
  auto project = [&](Eigen::VectorXd x) { return x.cwiseMax(lo).cwiseMin(hi).eval(); };
  NelderMeadResult res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> values;
  simplex.push_back(project(start));
  values.push_back(eval(simplex[0]));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd v = simplex[0];
    v(i) += (v(i) + step <= hi(i)) ? step : -step;
    simplex.push_back(project(v));
    values.push_back(eval(simplex.back()));
  }

  std::vector<std::size_t> order(simplex.size());
  while (res.evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    if (std::isfinite(values[worst]) &&
        std::abs(values[worst] - values[best]) <= 1e-7 * (1.0 + std::abs(values[best]))) {
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k != worst) centroid += simplex[k];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = project(centroid + (centroid - simplex[worst]));
    const double f_reflected = eval(reflected);
    if (f_reflected < values[best]) {
      const Eigen::VectorXd expanded = project(centroid + 2.0 * (centroid - simplex[worst]));
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Eigen::VectorXd contracted =
        outside ? project(centroid + 0.5 * (reflected - centroid))
                : project(centroid + 0.5 * (simplex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < std::min(values[worst], f_reflected)) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == best) continue;
      simplex[k] = project(simplex[best] + 0.5 * (simplex[k] - simplex[best]));
      values[k] = eval(simplex[k]);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  res.x = simplex[static_cast<std::size_t>(best_it - values.begin())];
  res.value = *best_it;
  return res;
}

}  // namespace

Eigen::MatrixXd se_gram(const Eigen::MatrixXd& inputs, const GprHyperparameters& hyper) {
  const Eigen::MatrixXd s = scaled(inputs, hyper.lengthscales);
  Eigen::MatrixXd k = cross_kernel(s, s, hyper.signal_variance);
  k.diagonal().setConstant(hyper.signal_variance);
  return k;
}

GprModel GprModel::condition(Eigen::MatrixXd inputs, Eigen::VectorXd targets,
                             GprHyperparameters hyper, double jitter_start, double jitter_max) {
  if (inputs.rows() != targets.size() || inputs.rows() == 0) {
    throw std::invalid_argument("GPR needs matching, non-empty inputs and targets");
  }
  if (static_cast<Eigen::Index>(hyper.lengthscales.size()) != inputs.cols()) {
    throw std::invalid_argument("GPR needs one lengthscale per input dimension");
  }
  Factorization f = factorize(inputs, hyper, jitter_start, jitter_max);
  if (!f.ok) throw IllConditionedError("kernel matrix is not positive definite after jitter");
  GprModel m;
  m.hyper_ = std::move(hyper);
  m.inputs_ = std::move(inputs);
  m.targets_ = std::move(targets);
  m.chol_ = std::move(f.llt);
  m.jitter_ = f.jitter;
  m.alpha_ = m.chol_.solve((m.targets_.array() - m.hyper_.mean).matrix());
  return m;
}

Posterior GprModel::predict(const Eigen::VectorXd& query) const {
  Eigen::MatrixXd q(1, query.size());
  q.row(0) = query.transpose();
  return predict(q).front();
}

std::vector<Posterior> GprModel::predict(const Eigen::MatrixXd& queries) const {
  if (queries.cols() != inputs_.cols()) {
    throw std::invalid_argument("query dimension does not match the GPR inputs");
  }
  const Eigen::MatrixXd kq = cross_kernel(scaled(queries, hyper_.lengthscales),
                                          scaled(inputs_, hyper_.lengthscales),
                                          hyper_.signal_variance);  // m x n
  const Eigen::VectorXd mean = (kq * alpha_).array() + hyper_.mean;
  const Eigen::MatrixXd v = chol_.matrixL().solve(kq.transpose());  // n x m
  const Eigen::VectorXd explained = v.colwise().squaredNorm().transpose();
  const double prior = hyper_.signal_variance + hyper_.noise_variance;
  std::vector<Posterior> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = {mean(i), std::clamp(prior - explained(i), 0.0, prior)};
  }
  return out;
}

double GprModel::log_marginal_likelihood() const {
  return lml_from_factor(chol_, (targets_.array() - hyper_.mean).matrix());
}

nlohmann::json GprModel::to_json() const {
  nlohmann::json j;
  j["signal_variance"] = hyper_.signal_variance;
  j["lengthscales"] = hyper_.lengthscales;
  j["noise_variance"] = hyper_.noise_variance;
  j["mean"] = hyper_.mean;
  j["jitter"] = jitter_;
  nlohmann::json xs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < inputs_.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(inputs_.cols()));
    for (Eigen::Index d = 0; d < inputs_.cols(); ++d) row[static_cast<std::size_t>(d)] = inputs_(i, d);
    xs.push_back(row);
  }
  j["inputs"] = std::move(xs);
  j["targets"] = std::vector<double>(targets_.data(), targets_.data() + targets_.size());
  return j;
}

double log_marginal_likelihood(const GprHyperparameters& hyper, const Eigen::MatrixXd& inputs,
                               const Eigen::VectorXd& targets, double jitter_start,
                               double jitter_max) {
  Factorization f = factorize(inputs, hyper, jitter_start, jitter_max);
  if (!f.ok) throw IllConditionedError("kernel matrix is not positive definite after jitter");
  return lml_from_factor(f.llt, (targets.array() - hyper.mean).matrix());
}

GprModel fit_gpr(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                 const std::optional<GprHyperparameters>& initial, const GprFitOptions& options,
                 GprFitReport* report) {
  if (inputs.rows() < 2) throw std::invalid_argument("GPR fit needs at least two points");
  const auto dim = static_cast<std::size_t>(inputs.cols());
  const double scale = std::max(sample_variance(targets), 1e-12);
  const GprBounds& b = options.bounds;

  // Parameter vector: [log sf2, log l_1..l_d, log noise].
  const Eigen::Index np = static_cast<Eigen::Index>(dim) + 2;
  Eigen::VectorXd lo(np), hi(np);
  lo(0) = std::log(b.signal_variance_min * scale);
  hi(0) = std::log(b.signal_variance_max * scale);
  for (std::size_t d = 0; d < dim; ++d) {
    lo(static_cast<Eigen::Index>(d) + 1) = std::log(b.lengthscale_min);
    hi(static_cast<Eigen::Index>(d) + 1) = std::log(b.lengthscale_max);
  }
  lo(np - 1) = std::log(b.noise_variance_min * scale);
  hi(np - 1) = std::log(b.noise_variance_max * scale);

  auto unpack = [&](const Eigen::VectorXd& p) {
    GprHyperparameters h;
    h.signal_variance = std::exp(p(0));
    h.lengthscales.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) h.lengthscales[d] = std::exp(p(static_cast<Eigen::Index>(d) + 1));
    h.noise_variance = std::exp(p(np - 1));
    return h;
  };
  auto pack = [&](const GprHyperparameters& h) {
    Eigen::VectorXd p(np);
    p(0) = std::log(h.signal_variance);
    for (std::size_t d = 0; d < dim; ++d) p(static_cast<Eigen::Index>(d) + 1) = std::log(h.lengthscales[d]);
    p(np - 1) = std::log(h.noise_variance);
    return p.cwiseMax(lo).cwiseMin(hi).eval();
  };

  // Profiled objective: beta at its generalized-least-squares optimum.
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(targets.size());
  auto profiled = [&](const GprHyperparameters& h, double* beta_out) {
    Factorization f = factorize(inputs, h, options.jitter_start, options.jitter_max);
    if (!f.ok) return -std::numeric_limits<double>::infinity();
    const Eigen::VectorXd k_inv_one = f.llt.solve(ones);
    const double beta = k_inv_one.dot(targets) / k_inv_one.sum();
    if (beta_out) *beta_out = beta;
    return lml_from_factor(f.llt, (targets.array() - beta).matrix());
  };

  GprHyperparameters start;
  if (initial) {
    start = *initial;
  } else {
    start.signal_variance = scale;
    start.lengthscales.assign(dim, options.initial_lengthscale);
    start.noise_variance = 1e-3 * scale;
    start.mean = targets.mean();
  }
  if (start.lengthscales.size() != dim) {
    throw std::invalid_argument("initial hyperparameters have the wrong dimension");
  }
  const double start_mean = start.mean;
  start = unpack(pack(start));
  start.mean = start_mean;
  const double initial_lml =
      log_marginal_likelihood(start, inputs, targets, options.jitter_start, options.jitter_max);

  std::vector<Eigen::VectorXd> starts{pack(start)};
  const double alt_lengthscales[] = {0.05, 0.5, 2.0, 0.1, 1.0};
  for (int r = 1; r < options.restarts; ++r) {
    GprHyperparameters h;
    h.signal_variance = scale;
    h.lengthscales.assign(dim, alt_lengthscales[(r - 1) % 5]);
    h.noise_variance = 1e-3 * scale;
    starts.push_back(pack(h));
  }

  auto objective = [&](const Eigen::VectorXd& p) { return -profiled(unpack(p), nullptr); };
  Eigen::VectorXd best_p = starts.front();
  double best_value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  for (const auto& s : starts) {
    const NelderMeadResult r = nelder_mead(objective, s, lo, hi, 0.7, options.max_evaluations);
    evaluations += r.evaluations;
    if (r.value < best_value) {
      best_value = r.value;
      best_p = r.x;
    }
  }

  GprHyperparameters best = unpack(best_p);
  const double best_lml = profiled(best, &best.mean);
  if (!(best_lml >= initial_lml)) best = start;

  GprModel model = GprModel::condition(inputs, targets, best, options.jitter_start,
                                       options.jitter_max);
  if (report) {
    report->initial_lml = initial_lml;
    report->final_lml = model.log_marginal_likelihood();
    report->evaluations = evaluations;
  }
  return model;
}

}  // namespace mergetest
