#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "generators.hpp"
#include "mergetest/errors.hpp"
#include "mergetest/sampling.hpp"

using namespace mergetest;

namespace {

const PoolRanges kPool{};

// GP fitted to a bowl whose minimum sits at `centre` in normalized space.
GprModel bowl_model(const std::vector<double>& centre, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int dim = static_cast<int>(centre.size());
  Eigen::MatrixXd x(40, dim);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    double r2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      x(i, d) = testgen::uniform(rng, 0.0, 1.0);
      r2 += std::pow(x(i, d) - centre[static_cast<std::size_t>(d)], 2);
    }
    y(i) = -1000.0 * std::exp(-r2 / 0.02);
  }
  return fit_gpr(x, y);
}

bool in_pool(const TestCase& c) {
  return c.x_pov0 >= kPool.x_pov_min && c.x_pov0 <= kPool.x_pov_max &&
         c.v_pov0 >= kPool.v_pov_min && c.v_pov0 <= kPool.v_pov_max && c.psi >= kPool.psi_min &&
         c.psi < kPool.psi_max;
}

}  // namespace

TEST_CASE("case normalization") {
  CHECK(case_dim(0) == 2);
  CHECK(case_dim(1) == 2);
  CHECK(case_dim(2) == 3);
  const TestCase c{-275.0, 27.5, 0.25 * kPool.psi_max, 2};
  const auto n = normalize(c, kPool);
  REQUIRE(n.size() == 3);
  CHECK(n[0] == doctest::Approx(0.5));
  CHECK(n[1] == doctest::Approx(0.5));
  CHECK(n[2] == doctest::Approx(0.25));
  const TestCase back = denormalize(n, 2, kPool);
  CHECK(back.x_pov0 == doctest::Approx(c.x_pov0));
  CHECK(back.v_pov0 == doctest::Approx(c.v_pov0));
  CHECK(back.psi == doctest::Approx(c.psi));
  CHECK(back.level == 2);
  CHECK(normalize(TestCase{-275.0, 27.5, 1.0, 1}, kPool).size() == 2);
  const std::vector<double> top{1.0, 1.0, 1.0};
  CHECK(denormalize(top, 2, kPool).psi < kPool.psi_max);
  const std::vector<double> planar{0.0, 1.0};
  CHECK(denormalize(planar, 1, kPool).psi == 0.0);
}

TEST_CASE("random streams") {
  auto a = stream_rng(1, 2, 3);
  auto b = stream_rng(1, 2, 3);
  auto c = stream_rng(1, 2, 4);
  auto d = stream_rng(2, 2, 3);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("uniform cases cover the pool") {
  std::mt19937_64 rng(1);
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const TestCase c = sample_uniform_case(2, kPool, rng);
    CHECK(in_pool(c));
    sum += c.x_pov0;
  }
  const double width = kPool.x_pov_max - kPool.x_pov_min;
  const double sigma = width / std::sqrt(12.0 * n);
  CHECK(std::abs(sum / n - 0.5 * (kPool.x_pov_min + kPool.x_pov_max)) <= 3.0 * sigma);
}

TEST_CASE("exploration schedule") {
  CHECK(exploration_fraction(1, 0.5, 0.95) == 0.5);
  CHECK(exploration_fraction(2, 0.5, 0.95) == doctest::Approx(0.475));
  CHECK(exploration_fraction(21, 0.5, 0.95) == doctest::Approx(0.1792).epsilon(1e-3));
  for (int i = 1; i < 40; ++i) {
    CHECK(exploration_fraction(i + 1, 0.5, 0.95) < exploration_fraction(i, 0.5, 0.95));
  }
}

TEST_CASE("exploit/explore split") {
  const QuerySplit s = split_queries(20, 0.475);
  CHECK(s.exploit == 10);
  CHECK(s.explore == 10);
  const QuerySplit late = split_queries(20, exploration_fraction(21, 0.5, 0.95));
  CHECK(late.explore == 4);
  CHECK(late.exploit == 16);
  CHECK(split_queries(20, 0.5).explore == 10);
  CHECK(split_queries(7, 0.5).explore == 4);
  CHECK(split_queries(0, 0.3).explore == 0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = testgen::integer(rng, 0, 60);
    const double eps = testgen::uniform(rng, 0.0, 1.0);
    const QuerySplit q = split_queries(n, eps);
    CHECK(q.exploit + q.explore == n);
    CHECK(std::abs(q.explore - eps * n) <= 0.5 + 1e-9);
  }
}

TEST_CASE("query qualities") {
  const QueryExponents z;
  const QueryQuality q = query_quality(0.5, 0.9, z);
  CHECK(q.exploit == doctest::Approx(0.1125));
  CHECK(q.explore == doctest::Approx(0.3645));

  const std::vector<Posterior> same_mean{{-10.0, 4.0}, {-10.0, 1.0}};
  const auto a = query_quality(same_mean, z);
  CHECK(a[0].explore > a[1].explore);

  const std::vector<Posterior> same_std{{-800.0, 4.0}, {50.0, 4.0}};
  const auto b = query_quality(same_std, z);
  CHECK(b[0].exploit > b[1].exploit);
  CHECK(b[0].exploit == doctest::Approx(1.0));
}

TEST_CASE("range challenge scale") {
  const QueryExponents z;
  // Means -800, -400, 0 over a range of 800: challenges 1, 0.5 and the 1/p floor.
  const std::vector<Posterior> post{{-800.0, 1.0}, {-400.0, 1.0}, {0.0, 1.0}};
  const auto q = query_quality(post, z, ChallengeScale::range);
  CHECK(q[0].exploit == doctest::Approx(1.0));
  CHECK(q[1].exploit == doctest::Approx(0.125));
  CHECK(q[2].exploit == doctest::Approx(std::pow(1.0 / 3.0, 3.0)));
  const auto flat = query_quality(std::vector<Posterior>{{5.0, 1.0}, {5.0, 4.0}}, z,
                                  ChallengeScale::range);
  CHECK(flat[1].exploit == doctest::Approx(1.0));
  CHECK(flat[0].exploit == doctest::Approx(0.5));
  CHECK(challenge_scale_from_string(to_string(ChallengeScale::range)) == ChallengeScale::range);
  CHECK_THROWS_AS(challenge_scale_from_string("linear"), std::invalid_argument);
}

TEST_CASE("property: uncertainty ranking survives monotone transforms") {
  std::mt19937_64 rng(3);
  const QueryExponents z;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Posterior> post(50);
    for (auto& p : post) p = {-5.0, testgen::uniform(rng, 0.01, 4.0)};
    std::vector<Posterior> warped = post;
    for (auto& p : warped) p.variance = std::pow(p.variance, 3.0) + p.variance;
    const auto q1 = query_quality(post, z);
    const auto q2 = query_quality(warped, z);
    auto argmax = [](const std::vector<QueryQuality>& q, bool exploit) {
      return std::max_element(q.begin(), q.end(), [&](const auto& x, const auto& y) {
               return exploit ? x.exploit < y.exploit : x.explore < y.explore;
             }) - q.begin();
    };
    CHECK(argmax(q1, true) == argmax(q2, true));
    CHECK(argmax(q1, false) == argmax(q2, false));
  }
}

TEST_CASE("softmax level allocation") {
  const std::vector<double> u{0.0, 0.5, 0.5};
  const auto p = allocation_proportions(u, 2.0);
  CHECK(p[0] == doctest::Approx(0.155).epsilon(2e-3));
  CHECK(p[1] == doctest::Approx(0.422).epsilon(2e-3));
  CHECK(allocate_levels(u, 2.0, 40) == std::vector<int>{6, 17, 17});
  const std::vector<double> any{0.1, 0.9, 0.3};
  CHECK(allocate_levels(any, 0.0, 40) == std::vector<int>{14, 13, 13});
  CHECK(equal_allocation(3, 40) == std::vector<int>{14, 13, 13});
  CHECK(equal_allocation(1, 20) == std::vector<int>{20});
  const std::vector<double> zeros{0.0, 0.0, 0.0};
  CHECK(allocate_levels(zeros, 5.0, 40) == std::vector<int>{14, 13, 13});
}

TEST_CASE("property: allocations sum to the batch and follow the softmax") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 2000; ++trial) {
    const int levels = testgen::integer(rng, 1, 3);
    std::vector<double> u(static_cast<std::size_t>(levels));
    for (auto& x : u) x = testgen::uniform(rng, 0.0, 1.0);
    const double xi = testgen::uniform(rng, 0.0, 20.0);
    const int n = testgen::integer(rng, 1, 100);
    const auto alloc = allocate_levels(u, xi, n);
    CHECK(std::accumulate(alloc.begin(), alloc.end(), 0) == n);

    const auto p = allocation_proportions(u, xi);
    double norm = 0.0;
    for (double x : u) norm += std::exp(xi * x);
    for (std::size_t k = 0; k < u.size(); ++k) {
      CHECK(std::abs(p[k] - std::exp(xi * u[k]) / norm) <= 1e-12);
      CHECK(std::abs(alloc[k] - p[k] * n) < 1.0);
    }
  }
}

TEST_CASE("sampler configuration checks") {
  SamplerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.batches() == 20);
  auto broken = [&](auto edit) {
    SamplerConfig c;
    edit(c);
    return c;
  };
  CHECK_THROWS(broken([](SamplerConfig& c) { c.candidates = 100; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.alpha = 0.9; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.alpha = 1.0; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.exponents.z1 = 0.5; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.exponents.z4 = 0.5; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.total = 410; }).validate());
  CHECK_THROWS(broken([](SamplerConfig& c) { c.levels = {0, 1, 3}; }).validate());
}

TEST_CASE("first batch is uniform and needs no model") {
  SamplerConfig cfg;
  std::mt19937_64 rng(5);
  IntraBatchInfo info;
  const auto batch = intra_level_batch(1, 20, 1, nullptr, cfg, kPool, rng, &info);
  CHECK(batch.size() == 20);
  CHECK_FALSE(info.adaptive);
  for (const auto& c : batch) {
    CHECK(in_pool(c));
    CHECK(c.level == 1);
  }
}

TEST_CASE("adaptive batch without a model is a protocol error") {
  SamplerConfig cfg;
  std::mt19937_64 rng(6);
  CHECK_THROWS_AS(intra_level_batch(2, 20, 1, nullptr, cfg, kPool, rng), ProtocolError);
  const GprModel planar = bowl_model({0.5, 0.5}, 1);
  CHECK_THROWS_AS(intra_level_batch(2, 20, 2, &planar, cfg, kPool, rng), ProtocolError);
}

TEST_CASE("adaptive batch concentrates exploitation near the predicted minimum") {
  SamplerConfig cfg;
  const GprModel model = bowl_model({0.2, 0.7}, 2);
  std::mt19937_64 rng(7);
  IntraBatchInfo info;
  const auto batch = intra_level_batch(2, 20, 1, &model, cfg, kPool, rng, &info);
  REQUIRE(batch.size() == 20);
  CHECK(info.adaptive);
  CHECK(info.epsilon == doctest::Approx(0.475));
  CHECK(info.split.exploit == 10);
  CHECK(info.split.explore == 10);
  int near = 0;
  std::set<std::pair<double, double>> distinct;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    CHECK(in_pool(batch[j]));
    distinct.insert({batch[j].x_pov0, batch[j].v_pov0});
    const auto n = normalize(batch[j], kPool);
    if (j < 10 && std::hypot(n[0] - 0.2, n[1] - 0.7) < 0.2) ++near;
  }
  CHECK(distinct.size() == 20);
  CHECK(near >= 6);
}

TEST_CASE("property: batch sizes are exact for every level and batch") {
  std::mt19937_64 rng(8);
  SamplerConfig cfg;
  cfg.candidates = 300;
  const GprModel planar = bowl_model({0.6, 0.3}, 3);
  const GprModel spatial = bowl_model({0.6, 0.3, 0.5}, 4);
  for (int trial = 0; trial < 60; ++trial) {
    const int level = testgen::integer(rng, 0, 2);
    const int count = testgen::integer(rng, 0, 30);
    const int batch_index = testgen::integer(rng, 1, 25);
    const GprModel* model = level == 2 ? &spatial : &planar;
    IntraBatchInfo info;
    const auto batch = intra_level_batch(batch_index, count, level, model, cfg, kPool, rng, &info);
    CHECK(static_cast<int>(batch.size()) == count);
    CHECK(info.split.exploit + info.split.explore == count);
    for (const auto& c : batch) {
      CHECK(in_pool(c));
      CHECK(c.level == level);
    }
  }
}
