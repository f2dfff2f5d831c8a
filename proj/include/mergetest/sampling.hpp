#pragma once

// Test-case pool, GPR-guided intra-level batch selection and softmax
// allocation of each batch across POV levels.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "mergetest/gpr.hpp"
#include "mergetest/trainer.hpp"

namespace mergetest {

struct TestCase {
  double x_pov0 = 0.0;
  double v_pov0 = 0.0;
  double psi = 0.0;  // only meaningful for level 2
  int level = 1;

  InitialCondition initial() const { return {x_pov0, v_pov0}; }
};

// Level 0/1 cases live in (x_pov0, v_pov0); level 2 adds psi.
int case_dim(int level);
std::vector<double> normalize(const TestCase& c, const PoolRanges& pool);
TestCase denormalize(std::span<const double> coords, int level, const PoolRanges& pool);
TestCase sample_uniform_case(int level, const PoolRanges& pool, std::mt19937_64& rng);

// Independent generator for one (seed, a, b) stream.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct QueryExponents {
  double z1 = 3.0;  // exploit: challenge
  double z2 = 1.0;  // exploit: uncertainty
  double z3 = 1.0;  // explore: challenge
  double z4 = 3.0;  // explore: uncertainty
};

// How predicted means become challenge scores in (0, 1]: by rank within the
// candidate pool, or linearly across the pool's range of predicted means.
enum class ChallengeScale { rank, range };

std::string to_string(ChallengeScale s);
ChallengeScale challenge_scale_from_string(const std::string& s);

struct SamplerConfig {
  int total = 400;        // N
  int batch = 20;         // n
  int candidates = 2000;  // p
  double epsilon0 = 0.5;
  double alpha = 0.95;
  QueryExponents exponents;
  double xi = 5.0;
  double fail_threshold = -500.0;  // U(i,k) counts scores below this
  double dedup_radius = 0.01;
  ChallengeScale challenge = ChallengeScale::rank;
  std::vector<int> levels{1};
  std::uint64_t seed = 1;
  GprFitOptions gpr;

  int batches() const { return batch > 0 ? total / batch : 0; }
  void validate() const;
};

// exploration fraction eps0 * alpha^(i-1) for batch i >= 1.
double exploration_fraction(int batch_index, double epsilon0, double alpha);

struct QuerySplit {
  int exploit = 0;
  int explore = 0;
};

// Splits n into (1-eps)n exploit and eps*n explore queries by largest
// remainder; a tied remainder goes to explore.
QuerySplit split_queries(int n, double epsilon);

struct QueryQuality {
  double exploit = 0.0;
  double explore = 0.0;
};

// c^z1 s^z2 and c^z3 s^z4 for a challenge score c and normalized std s.
QueryQuality query_quality(double challenge, double sigma_normalized, const QueryExponents& z);

// Batch-level normalization. Rank: c = (p - rank)/p with rank the number of
// candidates whose predicted mean is strictly lower, so the lowest mean gets
// 1. Range: c = (max - mean)/(max - min), floored at 1/p. The std is
// normalized by its batch maximum. When every predicted mean is equal all
// challenges are 1 and ranking depends on the std alone.
std::vector<QueryQuality> query_quality(std::span<const Posterior> posteriors,
                                        const QueryExponents& z,
                                        ChallengeScale scale = ChallengeScale::rank);

// Softmax proportions exp(xi U_k) / sum_j exp(xi U_j).
std::vector<double> allocation_proportions(std::span<const double> failure_fraction, double xi);

// Integer allocation of n by largest remainder of the softmax proportions;
// equal remainders favour the lower index. Always sums to n.
std::vector<int> allocate_levels(std::span<const double> failure_fraction, double xi, int n);

// Equal split used for the first batch.
std::vector<int> equal_allocation(std::size_t levels, int n);

struct IntraBatchInfo {
  double epsilon = 0.0;
  QuerySplit split;
  bool adaptive = false;
};

// Alg. 1 body for one level: uniform for the first batch, otherwise p fresh
// uniform candidates ranked by the exploit/explore qualities of `model`.
// Throws ProtocolError when batch_index > 1 and no model is given.
std::vector<TestCase> intra_level_batch(int batch_index, int count, int level,
                                        const GprModel* model, const SamplerConfig& cfg,
                                        const PoolRanges& pool, std::mt19937_64& rng,
                                        IntraBatchInfo* info = nullptr);

}  // namespace mergetest
