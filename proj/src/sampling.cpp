#include "mergetest/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mergetest/errors.hpp"

namespace mergetest {

int case_dim(int level) { return level >= 2 ? 3 : 2; }

std::vector<double> normalize(const TestCase& c, const PoolRanges& pool) {
  std::vector<double> out{(c.x_pov0 - pool.x_pov_min) / (pool.x_pov_max - pool.x_pov_min),
                          (c.v_pov0 - pool.v_pov_min) / (pool.v_pov_max - pool.v_pov_min)};
  if (c.level >= 2) out.push_back((c.psi - pool.psi_min) / (pool.psi_max - pool.psi_min));
  return out;
}

TestCase denormalize(std::span<const double> coords, int level, const PoolRanges& pool) {
  if (static_cast<int>(coords.size()) != case_dim(level)) {
    throw std::invalid_argument("normalized case has the wrong dimension for its level");
  }
  TestCase c;
  c.level = level;
  c.x_pov0 = pool.x_pov_min + coords[0] * (pool.x_pov_max - pool.x_pov_min);
  c.v_pov0 = pool.v_pov_min + coords[1] * (pool.v_pov_max - pool.v_pov_min);
  if (level >= 2) {
    c.psi = pool.psi_min + coords[2] * (pool.psi_max - pool.psi_min);
    // psi_max is excluded from the pool.
    if (c.psi >= pool.psi_max) c.psi = std::nextafter(pool.psi_max, pool.psi_min);
  }
  return c;
}

TestCase sample_uniform_case(int level, const PoolRanges& pool, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> u(static_cast<std::size_t>(case_dim(level)));
  for (auto& v : u) v = unit(rng);
  return denormalize(u, level, pool);
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

void SamplerConfig::validate() const {
  if (total < 0 || batch <= 0) throw std::invalid_argument("sampler needs N >= 0 and n > 0");
  if (total % batch != 0) throw std::invalid_argument("sampler budget N must be a multiple of n");
  if (candidates < 10 * batch) throw std::invalid_argument("candidate pool p must be >= 10n");
  if (!(epsilon0 > 0.0 && epsilon0 <= 1.0)) throw std::invalid_argument("eps0 must lie in (0,1]");
  if (!(alpha > 0.9 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0.9,1)");
  if (!(exponents.z1 > exponents.z2) || !(exponents.z3 < exponents.z4)) {
    throw std::invalid_argument("exponents need z1 > z2 and z3 < z4");
  }
  if (levels.empty()) throw std::invalid_argument("sampler needs at least one POV level");
  for (int l : levels) {
    if (l < 0 || l > 2) throw std::invalid_argument("POV levels are 0, 1 and 2");
  }
  if (batch < static_cast<int>(levels.size()) * 2) {
    throw std::invalid_argument("first batch must give every level at least two cases");
  }
}

double exploration_fraction(int batch_index, double epsilon0, double alpha) {
  return epsilon0 * std::pow(alpha, batch_index - 1);
}

QuerySplit split_queries(int n, double epsilon) {
  constexpr double kTol = 1e-9;
  const double explore_exact = epsilon * n;
  const double exploit_exact = n - explore_exact;
  QuerySplit s;
  s.exploit = static_cast<int>(std::floor(exploit_exact + kTol));
  s.explore = static_cast<int>(std::floor(explore_exact + kTol));
  const int leftover = n - s.exploit - s.explore;
  if (leftover > 0) {
    const double rem_exploit = exploit_exact - s.exploit;
    const double rem_explore = explore_exact - s.explore;
    if (rem_exploit > rem_explore + kTol) {
      s.exploit += leftover;
    } else {
      s.explore += leftover;
    }
  }
  return s;
}

QueryQuality query_quality(double challenge, double sigma_normalized, const QueryExponents& z) {
  return {std::pow(challenge, z.z1) * std::pow(sigma_normalized, z.z2),
          std::pow(challenge, z.z3) * std::pow(sigma_normalized, z.z4)};
}

std::string to_string(ChallengeScale s) { return s == ChallengeScale::rank ? "rank" : "range"; }

ChallengeScale challenge_scale_from_string(const std::string& s) {
  if (s == "rank") return ChallengeScale::rank;
  if (s == "range") return ChallengeScale::range;
  throw std::invalid_argument("unknown challenge scale '" + s + "' (rank or range)");
}

std::vector<QueryQuality> query_quality(std::span<const Posterior> posteriors,
                                        const QueryExponents& z, ChallengeScale scale) {
  const std::size_t p = posteriors.size();
  std::vector<QueryQuality> out(p);
  if (p == 0) return out;

  std::vector<double> means(p);
  double max_std = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    means[j] = posteriors[j].mean;
    max_std = std::max(max_std, posteriors[j].stddev());
  }
  std::vector<double> sorted = means;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  const double floor = 1.0 / static_cast<double>(p);
  for (std::size_t j = 0; j < p; ++j) {
    double challenge = 1.0;
    if (scale == ChallengeScale::rank) {
      const auto rank = static_cast<double>(
          std::lower_bound(sorted.begin(), sorted.end(), means[j]) - sorted.begin());
      challenge = (static_cast<double>(p) - rank) / static_cast<double>(p);
    } else if (hi > lo) {
      challenge = std::max(floor, (hi - means[j]) / (hi - lo));
    }
    const double sigma = max_std > 0.0 ? posteriors[j].stddev() / max_std : 1.0;
    out[j] = query_quality(challenge, sigma, z);
  }
  return out;
}

std::vector<double> allocation_proportions(std::span<const double> failure_fraction, double xi) {
  std::vector<double> w(failure_fraction.size());
  if (w.empty()) return w;
  const double top = *std::max_element(failure_fraction.begin(), failure_fraction.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    w[k] = std::exp(xi * (failure_fraction[k] - top));
    sum += w[k];
  }
  for (auto& v : w) v /= sum;
  return w;
}

std::vector<int> allocate_levels(std::span<const double> failure_fraction, double xi, int n) {
  const std::vector<double> prop = allocation_proportions(failure_fraction, xi);
  std::vector<int> alloc(prop.size(), 0);
  std::vector<double> remainder(prop.size(), 0.0);
  int assigned = 0;
  for (std::size_t k = 0; k < prop.size(); ++k) {
    const double exact = prop[k] * n;
    alloc[k] = static_cast<int>(std::floor(exact + 1e-9));
    remainder[k] = exact - alloc[k];
    assigned += alloc[k];
  }
  std::vector<std::size_t> order(prop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b] + 1e-12;
  });
  for (std::size_t r = 0; assigned < n; r = (r + 1) % order.size()) {
    ++alloc[order[r]];
    ++assigned;
  }
  return alloc;
}

std::vector<int> equal_allocation(std::size_t levels, int n) {
  const std::vector<double> zeros(levels, 0.0);
  return allocate_levels(zeros, 0.0, n);
}

namespace {

double squared_distance(const Eigen::MatrixXd& x, Eigen::Index a, Eigen::Index b) {
  return (x.row(a) - x.row(b)).squaredNorm();
}

std::vector<Eigen::Index> ranking(const std::vector<QueryQuality>& q, bool exploit) {
  std::vector<Eigen::Index> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto& qa = q[static_cast<std::size_t>(a)];
    const auto& qb = q[static_cast<std::size_t>(b)];
    return exploit ? qa.exploit > qb.exploit : qa.explore > qb.explore;
  });
  return order;
}

}  // namespace

std::vector<TestCase> intra_level_batch(int batch_index, int count, int level,
                                        const GprModel* model, const SamplerConfig& cfg,
                                        const PoolRanges& pool, std::mt19937_64& rng,
                                        IntraBatchInfo* info) {
  if (batch_index < 1) throw std::invalid_argument("batch index starts at 1");
  std::vector<TestCase> out;
  if (count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));

  if (batch_index == 1) {
    for (int j = 0; j < count; ++j) out.push_back(sample_uniform_case(level, pool, rng));
    if (info) *info = {0.0, {0, count}, false};
    return out;
  }
  if (model == nullptr) {
    throw ProtocolError("adaptive batch " + std::to_string(batch_index) +
                        " requested without a fitted GPR model");
  }

  const int dim = case_dim(level);
  if (model->dim() != dim) throw ProtocolError("GPR model dimension does not match the level");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd candidates(cfg.candidates, dim);
  for (int j = 0; j < cfg.candidates; ++j) {
    for (int d = 0; d < dim; ++d) candidates(j, d) = unit(rng);
  }
  const std::vector<Posterior> post = model->predict(candidates);
  const std::vector<QueryQuality> quality = query_quality(post, cfg.exponents, cfg.challenge);

  const double eps = exploration_fraction(batch_index, cfg.epsilon0, cfg.alpha);
  const QuerySplit split = split_queries(count, eps);
  if (info) *info = {eps, split, true};

  std::vector<char> taken(static_cast<std::size_t>(cfg.candidates), 0);
  std::vector<Eigen::Index> chosen;
  const double min_sep_sq = cfg.dedup_radius * cfg.dedup_radius;

  const auto exploit_order = ranking(quality, true);
  std::vector<Eigen::Index> exploit_picks;
  for (Eigen::Index j : exploit_order) {
    if (static_cast<int>(exploit_picks.size()) == split.exploit) break;
    bool separated = true;
    for (Eigen::Index k : exploit_picks) {
      if (squared_distance(candidates, j, k) < min_sep_sq) {
        separated = false;
        break;
      }
    }
    if (separated) {
      exploit_picks.push_back(j);
      taken[static_cast<std::size_t>(j)] = 1;
    }
  }
  // Not enough separated candidates: fall back to the unrestricted ranking.
  for (Eigen::Index j : exploit_order) {
    if (static_cast<int>(exploit_picks.size()) == split.exploit) break;
    if (!taken[static_cast<std::size_t>(j)]) {
      exploit_picks.push_back(j);
      taken[static_cast<std::size_t>(j)] = 1;
    }
  }
  chosen = exploit_picks;

  int explored = 0;
  for (Eigen::Index j : ranking(quality, false)) {
    if (explored == split.explore) break;
    if (taken[static_cast<std::size_t>(j)]) continue;
    taken[static_cast<std::size_t>(j)] = 1;
    chosen.push_back(j);
    ++explored;
  }

  std::vector<double> coords(static_cast<std::size_t>(dim));
  for (Eigen::Index j : chosen) {
    for (int d = 0; d < dim; ++d) coords[static_cast<std::size_t>(d)] = candidates(j, d);
    out.push_back(denormalize(coords, level, pool));
  }
  return out;
}

}  // namespace mergetest
