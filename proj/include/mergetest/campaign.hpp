#pragma once

// Test campaigns: the GPR-guided adaptive sampler and the uniform,
// simulated-annealing and subset-simulation baselines. Every method logs each
// evaluated case and produces a CampaignRecord.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mergetest/metrics.hpp"
#include "mergetest/sampling.hpp"

namespace mergetest {

struct CaseOutcome {
  double score = 0.0;
  bool crashed = false;
};

// Runs one test case. Must be safe to call concurrently.
using CaseScorer = std::function<CaseOutcome(const TestCase&)>;

struct CaseResult {
  TestCase test;
  int batch = 1;
  double score = 0.0;
  bool crashed = false;
};

// Scores `cases` with up to `jobs` workers; results keep the input order.
std::vector<CaseOutcome> evaluate_cases(const std::vector<TestCase>& cases,
                                        const CaseScorer& scorer, int jobs);

struct BatchRecord {
  int index = 1;
  std::vector<int> allocation;  // per campaign level, in `CampaignRecord::levels` order
  double epsilon = 0.0;
  std::vector<CaseResult> cases;
  std::vector<nlohmann::json> models;  // GPR fitted after this batch, per level (null if none)
};

enum class CampaignMethod { gpr, uniform, annealing, subset, ground_truth };

std::string to_string(CampaignMethod m);  // "gpr", "uniform", "sa", "subset", "ground-truth"
CampaignMethod campaign_method_from_string(const std::string& s);

struct CampaignRecord {
  CampaignMethod method = CampaignMethod::gpr;
  std::vector<int> levels;
  std::vector<BatchRecord> batches;
  // Cumulative FMC after each batch, per level (adaptive campaigns only).
  std::vector<std::vector<double>> fmc_trace;

  std::vector<CaseResult> cases() const;
  std::size_t size() const;
};

// FMC of the cases of one level, in that level's normalized space.
FmcResult level_fmc(const std::vector<CaseResult>& cases, int level, const PoolRanges& pool,
                    const FmcConfig& cfg);

struct CampaignOptions {
  int jobs = 1;
  bool fmc_trace = true;
};

// Adaptive campaign: equal split for the first batch, softmax reallocation on
// the previous batch's failure fractions afterwards, per-level Alg. 1
// selection and GPR refits. Errors are rethrown with the batch index.
CampaignRecord run_adaptive_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                     const PoolRanges& pool, const FmcConfig& fmc_cfg,
                                     const CampaignOptions& options = {});

// N i.i.d. uniform cases split evenly over the configured levels.
CampaignRecord uniform_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                const PoolRanges& pool, const CampaignOptions& options = {});

// Uniform sweep of `per_level` cases for each level, from its own RNG stream.
CampaignRecord ground_truth_campaign(const CaseScorer& scorer, const std::vector<int>& levels,
                                     const std::vector<int>& per_level, std::uint64_t seed,
                                     int batch_size, const PoolRanges& pool,
                                     const CampaignOptions& options = {});

struct AnnealingConfig {
  double t_start = 100.0;
  double t_end = 1.0;
  double step = 0.1;  // proposal std in normalized coordinates

  void validate() const;
};

// Metropolis acceptance for minimizing P.
double metropolis_acceptance(double current, double proposed, double temperature);

// Temperature of evaluation k of `total` on a geometric schedule.
double annealing_temperature(const AnnealingConfig& cfg, int k, int total);

// One annealing chain per level, sharing the budget evenly.
CampaignRecord annealing_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                                  const AnnealingConfig& sa, const PoolRanges& pool,
                                  const CampaignOptions& options = {});

struct SubsetConfig {
  int stage_size = 100;
  double p0 = 0.1;           // conditional quantile fraction
  double proposal_sd = 0.2;  // component-wise proposal std, normalized

  int seeds_per_stage() const;
  void validate() const;
};

struct SubsetTrace {
  std::vector<double> thresholds;  // intermediate thresholds, one per stage boundary
  bool reached_failure = false;
};

// Staged descent through score quantiles until `fail_threshold` is reached,
// then Markov chains restricted to the failure region until the budget runs
// out. Every evaluation is logged.
CampaignRecord subset_campaign(const CaseScorer& scorer, const SamplerConfig& cfg,
                               const SubsetConfig& ss, const PoolRanges& pool,
                               const CampaignOptions& options = {},
                               std::vector<SubsetTrace>* traces = nullptr);

// Reflects x into [0, 1].
double reflect_unit(double x);

}  // namespace mergetest
