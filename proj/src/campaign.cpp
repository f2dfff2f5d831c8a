#include "mergetest/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "mergetest/errors.hpp"
#include "mergetest/parallel.hpp"

namespace mergetest {

std::vector<CaseOutcome> evaluate_cases(const std::vector<TestCase>& cases,
                                        const CaseScorer& scorer, int jobs) {
  std::vector<CaseOutcome> out(cases.size());
  parallel_for(cases.size(), jobs, [&](std::size_t i) { out[i] = scorer(cases[i]); });
  return out;
}

std::string to_string(CampaignMethod m) {
  switch (m) {
    case CampaignMethod::gpr: return "gpr";
    case CampaignMethod::uniform: return "uniform";
    case CampaignMethod::annealing: return "sa";
    case CampaignMethod::subset: return "subset";
    case CampaignMethod::ground_truth: return "ground-truth";
  }
  return "gpr";
}

CampaignMethod campaign_method_from_string(const std::string& s) {
  if (s == "gpr") return CampaignMethod::gpr;
  if (s == "uniform") return CampaignMethod::uniform;
  if (s == "sa") return CampaignMethod::annealing;
  if (s == "subset") return CampaignMethod::subset;
  if (s == "ground-truth") return CampaignMethod::ground_truth;
  throw std::invalid_argument("unknown campaign method '" + s +
                              "' (expected gpr, uniform, sa, subset or ground-truth)");
}

std::vector<CaseResult> CampaignRecord::cases() const {
  std::vector<CaseResult> out;
  for (const auto& b : batches) out.insert(out.end(), b.cases.begin(), b.cases.end());
  return out;
}

std::size_t CampaignRecord::size() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.cases.size();
  return n;
}

FmcResult level_fmc(const std::vector<CaseResult>& cases, int level, const PoolRanges& pool,
                    const FmcConfig& cfg) {
  std::vector<ScoredPoint> points;
  for (const auto& c : cases) {
    if (c.test.level == level) points.push_back({normalize(c.test, pool), c.score});
  }
  FmcResult r = fmc(points, cfg);
  r.dim = case_dim(level);
  return r;
}

namespace {

// Regroups a flat evaluation log into batches of `batch_size` per level.
void append_batched(CampaignRecord& record, const std::vector<CaseResult>& log, int batch_size) {
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto b = static_cast<std::size_t>(batch_size > 0 ? static_cast<int>(i) / batch_size : 0);
    while (record.batches.size() <= b) {
      BatchRecord br;
      br.index = static_cast<int>(record.batches.size()) + 1;
      br.allocation.assign(record.levels.size(), 0);
      record.batches.push_back(std::move(br));
    }
    CaseResult c = log[i];
    c.batch = static_cast<int>(b) + 1;
    auto& br = record.batches[b];
    const auto pos = std::find(record.levels.begin(), record.levels.end(), c.test.level);
    ++br.allocation[static_cast<std::size_t>(pos - record.levels.begin())];
    br.cases.push_back(c);
  }
}

std::vector<CaseResult> to_results(const std::vector<TestCase>& cases,
                                   const std::vector<CaseOutcome>& outcomes) {
  std::vector<CaseResult> out(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out[i] = {cases[i], 1, outcomes[i].score, outcomes[i].crashed};
  }
  return out;
}

nlohmann::json model_snapshot(const GprModel& m) {
  const auto& h = m.hyperparameters();
  return {{"signal_variance", h.signal_variance},
          {"lengthscales", h.lengthscales},
          {"noise_variance", h.noise_variance},
          {"mean", h.mean},
          {"jitter", m.jitter()},
          {"points", m.size()}};
}

// Stream ids keep the generators of different methods and stages apart.
enum Stream : std::uint64_t {
  kAdaptive = 1,
  kUniform = 2,
  kGroundTruth = 3,
  kAnnealing = 4,
  kSubset = 5,
};

std::uint64_t stream_id(Stream s, std::uint64_t index) { return (index << 4) | s; }

}  // namespace

CampaignRecord run_adaptive_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                     const PoolRanges& pool, const FmcConfig& fmc_cfg,
                                     const CampaignOptions& options) {
  cfg.validate();
  pool.validate();
  fmc_cfg.validate();
  CampaignRecord record;
  record.method = CampaignMethod::gpr;
  record.levels = cfg.levels;
  const std::size_t nl = cfg.levels.size();

  std::vector<std::optional<GprModel>> models(nl);
  std::vector<std::vector<std::vector<double>>> inputs(nl);
  std::vector<std::vector<double>> targets(nl);
  std::vector<double> failure_fraction(nl, 0.0);
  std::vector<CaseResult> all;

  for (int i = 1; i <= cfg.batches(); ++i) {
    try {
      BatchRecord batch;
      batch.index = i;
      batch.allocation = i == 1 ? equal_allocation(nl, cfg.batch)
                                : allocate_levels(failure_fraction, cfg.xi, cfg.batch);
      batch.epsilon = i == 1 ? 0.0 : exploration_fraction(i, cfg.epsilon0, cfg.alpha);

      std::vector<TestCase> cases;
      for (std::size_t k = 0; k < nl; ++k) {
        const int level = cfg.levels[k];
        std::mt19937_64 rng = stream_rng(cfg.seed, stream_id(kAdaptive, static_cast<std::uint64_t>(i)),
                                         static_cast<std::uint64_t>(level));
        const GprModel* model = models[k] ? &*models[k] : nullptr;
        auto picked = intra_level_batch(i, batch.allocation[k], level, model, cfg, pool, rng);
        cases.insert(cases.end(), picked.begin(), picked.end());
      }

      const auto outcomes = evaluate_cases(cases, scorer, options.jobs);
      batch.cases = to_results(cases, outcomes);
      std::vector<int> fails(nl, 0);
      for (auto& c : batch.cases) {
        c.batch = i;
        const auto k = static_cast<std::size_t>(
            std::find(cfg.levels.begin(), cfg.levels.end(), c.test.level) - cfg.levels.begin());
        inputs[k].push_back(normalize(c.test, pool));
        targets[k].push_back(c.score);
        if (c.score < cfg.fail_threshold) ++fails[k];
      }
      for (std::size_t k = 0; k < nl; ++k) {
        failure_fraction[k] =
            batch.allocation[k] > 0 ? static_cast<double>(fails[k]) / batch.allocation[k] : 0.0;
      }

      batch.models.assign(nl, nullptr);
      for (std::size_t k = 0; k < nl; ++k) {
        if (batch.allocation[k] == 0 || inputs[k].size() < 2) {
          if (models[k]) batch.models[k] = model_snapshot(*models[k]);
          continue;
        }
        const auto n = static_cast<Eigen::Index>(inputs[k].size());
        const auto d = static_cast<Eigen::Index>(inputs[k].front().size());
        Eigen::MatrixXd x(n, d);
        for (Eigen::Index r = 0; r < n; ++r) {
          for (Eigen::Index c = 0; c < d; ++c) x(r, c) = inputs[k][static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets[k].data(), n);
        std::optional<GprHyperparameters> warm;
        if (models[k]) warm = models[k]->hyperparameters();
        models[k] = fit_gpr(x, y, warm, cfg.gpr);
        batch.models[k] = model_snapshot(*models[k]);
      }

      all.insert(all.end(), batch.cases.begin(), batch.cases.end());
      record.batches.push_back(std::move(batch));
      if (options.fmc_trace) {
        std::vector<double> row;
        for (int level : cfg.levels) row.push_back(level_fmc(all, level, pool, fmc_cfg).coverage);
        record.fmc_trace.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("batch " + std::to_string(i) + ": " + e.what());
    }
  }
  return record;
}

CampaignRecord uniform_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                const PoolRanges& pool, const CampaignOptions& options) {
  cfg.validate();
  const std::vector<int> per_level = equal_allocation(cfg.levels.size(), cfg.total);
  CampaignRecord record;
  record.method = CampaignMethod::uniform;
  record.levels = cfg.levels;
  std::vector<TestCase> cases;
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    std::mt19937_64 rng =
        stream_rng(cfg.seed, kUniform, static_cast<std::uint64_t>(cfg.levels[k]));
    for (int j = 0; j < per_level[k]; ++j) {
      cases.push_back(sample_uniform_case(cfg.levels[k], pool, rng));
    }
  }
  append_batched(record, to_results(cases, evaluate_cases(cases, scorer, options.jobs)), cfg.batch);
  return record;
}

CampaignRecord ground_truth_campaign(const CaseScorer& scorer, const std::vector<int>& levels,
                                     const std::vector<int>& per_level, std::uint64_t seed,
                                     int batch_size, const PoolRanges& pool,
                                     const CampaignOptions& options) {
  if (levels.size() != per_level.size()) {
    throw std::invalid_argument("ground truth needs one case count per level");
  }
  CampaignRecord record;
  record.method = CampaignMethod::ground_truth;
  record.levels = levels;
  std::vector<TestCase> cases;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (per_level[k] < 0) throw std::invalid_argument("ground-truth case count must be >= 0");
    std::mt19937_64 rng = stream_rng(seed, kGroundTruth, static_cast<std::uint64_t>(levels[k]));
    for (int j = 0; j < per_level[k]; ++j) cases.push_back(sample_uniform_case(levels[k], pool, rng));
  }
  append_batched(record, to_results(cases, evaluate_cases(cases, scorer, options.jobs)),
                 batch_size);
  return record;
}

double reflect_unit(double x) {
  if (!std::isfinite(x)) return 0.5;
  double r = std::fmod(std::abs(x), 2.0);
  return r > 1.0 ? 2.0 - r : r;
}

void AnnealingConfig::validate() const {
  if (!(t_start > 0.0 && t_end > 0.0 && t_end <= t_start)) {
    throw std::invalid_argument("annealing needs 0 < t_end <= t_start");
  }
  if (!(step > 0.0)) throw std::invalid_argument("annealing step must be positive");
}

double metropolis_acceptance(double current, double proposed, double temperature) {
  if (proposed <= current) return 1.0;
  if (!(temperature > 0.0)) return 0.0;
  return std::exp(-(proposed - current) / temperature);
}

double annealing_temperature(const AnnealingConfig& cfg, int k, int total) {
  if (total <= 1) return cfg.t_start;
  const double frac = static_cast<double>(k) / static_cast<double>(total - 1);
  return cfg.t_start * std::pow(cfg.t_end / cfg.t_start, frac);
}

CampaignRecord annealing_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                  const AnnealingConfig& sa, const PoolRanges& pool,
                                  const CampaignOptions& options) {
  cfg.validate();
  sa.validate();
  const std::vector<int> budget = equal_allocation(cfg.levels.size(), cfg.total);
  CampaignRecord record;
  record.method = CampaignMethod::annealing;
  record.levels = cfg.levels;

  // Chains of different levels are independent.
  std::vector<std::vector<CaseResult>> logs(cfg.levels.size());
  parallel_for(cfg.levels.size(), options.jobs, [&](std::size_t k) {
    const int level = cfg.levels[k];
    const int n = budget[k];
    if (n == 0) return;
    std::mt19937_64 rng = stream_rng(cfg.seed, kAnnealing, static_cast<std::uint64_t>(level));
    std::normal_distribution<double> step(0.0, sa.step);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<double> x(static_cast<std::size_t>(case_dim(level)));
    for (auto& v : x) v = unit(rng);
    TestCase current = denormalize(x, level, pool);
    CaseOutcome current_out = scorer(current);
    logs[k].push_back({current, 1, current_out.score, current_out.crashed});

    for (int j = 1; j < n; ++j) {
      std::vector<double> y = x;
      for (auto& v : y) v = reflect_unit(v + step(rng));
      const TestCase proposal = denormalize(y, level, pool);
      const CaseOutcome out = scorer(proposal);
      logs[k].push_back({proposal, 1, out.score, out.crashed});
      const double temperature = annealing_temperature(sa, j, n);
      if (unit(rng) < metropolis_acceptance(current_out.score, out.score, temperature)) {
        x = std::move(y);
        current_out = out;
      }
    }
  });
  std::vector<CaseResult> log;
  for (const auto& l : logs) log.insert(log.end(), l.begin(), l.end());
  append_batched(record, log, cfg.batch);
  return record;
}

int SubsetConfig::seeds_per_stage() const {
  return std::max(1, static_cast<int>(std::lround(p0 * stage_size)));
}

void SubsetConfig::validate() const {
  if (stage_size < 2) throw std::invalid_argument("subset stage size must be >= 2");
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("subset quantile must lie in (0,1)");
  if (seeds_per_stage() >= stage_size) throw std::invalid_argument("subset quantile too large");
  if (!(proposal_sd > 0.0)) throw std::invalid_argument("subset proposal std must be positive");
}

namespace {

struct ChainSample {
  std::vector<double> x;
  double score = 0.0;
};

std::vector<CaseResult> subset_level(const CaseScorer& scorer, int level, int budget,
                                     const SamplerConfig& cfg, const SubsetConfig& ss,
                                     const PoolRanges& pool, int jobs, SubsetTrace& trace) {
  std::vector<CaseResult> log;
  if (budget <= 0) return log;
  const double lambda = cfg.fail_threshold;
  std::mt19937_64 master = stream_rng(cfg.seed, stream_id(kSubset, 0), static_cast<std::uint64_t>(level));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto dim = static_cast<std::size_t>(case_dim(level));

  // Stage 0: plain uniform sampling.
  const int m0 = std::min(ss.stage_size, budget);
  std::vector<TestCase> first;
  std::vector<ChainSample> samples;
  for (int j = 0; j < m0; ++j) {
    std::vector<double> x(dim);
    for (auto& v : x) v = unit(master);
    first.push_back(denormalize(x, level, pool));
    samples.push_back({std::move(x), 0.0});
  }
  const auto outcomes = evaluate_cases(first, scorer, jobs);
  for (int j = 0; j < m0; ++j) {
    samples[static_cast<std::size_t>(j)].score = outcomes[static_cast<std::size_t>(j)].score;
    log.push_back({first[static_cast<std::size_t>(j)], 1, outcomes[static_cast<std::size_t>(j)].score,
                   outcomes[static_cast<std::size_t>(j)].crashed});
  }
  int used = m0;
  const int nseeds = ss.seeds_per_stage();

  for (int stage = 1; used < budget; ++stage) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const ChainSample& a, const ChainSample& b) { return a.score < b.score; });
    double bound;
    std::vector<ChainSample> seeds;
    if (!trace.reached_failure) {
      const auto q = static_cast<std::size_t>(std::min<int>(nseeds, static_cast<int>(samples.size())) - 1);
      bound = q + 1 < samples.size() ? 0.5 * (samples[q].score + samples[q + 1].score)
                                     : samples[q].score;
      if (bound <= lambda) {
        bound = lambda;
        trace.reached_failure = true;
      } else {
        seeds.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(q) + 1);
      }
      trace.thresholds.push_back(bound);
    }
    if (trace.reached_failure) {
      bound = lambda;
      for (const auto& s : samples) {
        if (s.score >= lambda) break;
        const bool duplicate = std::any_of(seeds.begin(), seeds.end(),
                                           [&](const ChainSample& o) { return o.x == s.x; });
        if (!duplicate) seeds.push_back(s);
      }
      std::shuffle(seeds.begin(), seeds.end(), master);
      if (static_cast<int>(seeds.size()) > nseeds) seeds.resize(static_cast<std::size_t>(nseeds));
    }

    const int m = std::min(ss.stage_size, budget - used);
    const int chains = static_cast<int>(seeds.size());
    std::vector<std::vector<ChainSample>> states(seeds.size());
    std::vector<std::vector<CaseResult>> evals(seeds.size());
    const bool in_failure = trace.reached_failure;
    parallel_for(seeds.size(), jobs, [&](std::size_t c) {
      std::mt19937_64 rng = stream_rng(cfg.seed, stream_id(kSubset, static_cast<std::uint64_t>(stage)),
                                       (static_cast<std::uint64_t>(level) << 32) | c);
      std::normal_distribution<double> step(0.0, ss.proposal_sd);
      const int quota = m / chains + (static_cast<int>(c) < m % chains ? 1 : 0);
      ChainSample cur = seeds[c];
      int spent = 0;
      for (int attempt = 0; spent < quota && attempt < 100 * (quota + 1); ++attempt) {
        std::vector<double> y = cur.x;
        bool moved = false;
        for (auto& v : y) {
          const double cand = v + step(rng);
          // Uniform prior: a component move is accepted iff it stays in the pool.
          if (cand >= 0.0 && cand <= 1.0) {
            v = cand;
            moved = true;
          }
        }
        if (moved) {
          const TestCase tc = denormalize(y, level, pool);
          const CaseOutcome out = scorer(tc);
          evals[c].push_back({tc, 1, out.score, out.crashed});
          ++spent;
          const bool accept = in_failure ? out.score < bound : out.score <= bound;
          if (accept) cur = {std::move(y), out.score};
        }
        states[c].push_back(cur);
      }
    });

    std::vector<ChainSample> next = seeds;
    for (std::size_t c = 0; c < seeds.size(); ++c) {
      next.insert(next.end(), states[c].begin(), states[c].end());
      log.insert(log.end(), evals[c].begin(), evals[c].end());
      used += static_cast<int>(evals[c].size());
    }
    samples = std::move(next);
    if (seeds.empty()) break;
  }
  // A chain that exhausted its attempts leaves budget unused; top up uniformly.
  while (used < budget) {
    std::vector<double> x(dim);
    for (auto& v : x) v = unit(master);
    const TestCase tc = denormalize(x, level, pool);
    const CaseOutcome out = scorer(tc);
    log.push_back({tc, 1, out.score, out.crashed});
    ++used;
  }
  return log;
}

}  // namespace

CampaignRecord subset_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                               const SubsetConfig& ss, const PoolRanges& pool,
                               const CampaignOptions& options, std::vector<SubsetTrace>* traces) {
  cfg.validate();
  ss.validate();
  const std::vector<int> budget = equal_allocation(cfg.levels.size(), cfg.total);
  CampaignRecord record;
  record.method = CampaignMethod::subset;
  record.levels = cfg.levels;
  std::vector<CaseResult> log;
  std::vector<SubsetTrace> local(cfg.levels.size());
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    auto l = subset_level(scorer, cfg.levels[k], budget[k], cfg, ss, pool, options.jobs, local[k]);
    log.insert(log.end(), l.begin(), l.end());
  }
  if (traces) *traces = std::move(local);
  append_batched(record, log, cfg.batch);
  return record;
}

}  // namespace mergetest
