#pragma once

// JSON (de)serialization of every configuration struct and the campaign
// config file. Readers start from the defaults, override the keys present and
// reject unknown keys with FormatError.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "mergetest/agents.hpp"
#include "mergetest/campaign.hpp"
#include "mergetest/gpr.hpp"
#include "mergetest/metrics.hpp"
#include "mergetest/rewards.hpp"
#include "mergetest/sampling.hpp"
#include "mergetest/sim.hpp"
#include "mergetest/trainer.hpp"

namespace mergetest {

struct GroundTruthConfig {
  int cases_level01 = 10000;
  int cases_level2 = 20000;

  int cases_for(int level) const { return level >= 2 ? cases_level2 : cases_level01; }
};

struct VutChoice {
  // "rb1", "rb2", "level0" or a path to a stored VUT policy.
  std::string select = "rb2";
  RuleBasedVutConfig design1 = RuleBasedVutConfig::design1();
  RuleBasedVutConfig design2 = RuleBasedVutConfig::design2();
};

struct CampaignConfig {
  ScenarioConfig scenario;
  RewardParams rewards;
  PoolRanges pool;
  SamplerConfig sampler;
  FmcConfig fmc;
  ScoreWeights weights;
  ScoreShape shape;  // thresholds follow `rewards`; the rest is read from "score"
  AnnealingConfig annealing;
  SubsetConfig subset;
  GroundTruthConfig ground_truth;
  VutChoice vut;
  std::filesystem::path library = "library/manifest.json";
  LibraryConfig training = LibraryConfig::defaults();

  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& c);
nlohmann::json to_json(const RewardParams& c);
nlohmann::json to_json(const PoolRanges& c);
nlohmann::json to_json(const GprFitOptions& c);
nlohmann::json to_json(const SamplerConfig& c);
nlohmann::json to_json(const FmcConfig& c);
nlohmann::json to_json(const RuleBasedVutConfig& c);
nlohmann::json to_json(const AnnealingConfig& c);
nlohmann::json to_json(const SubsetConfig& c);
// The full trainer config including scenario, rewards and pool.
nlohmann::json to_json(const TrainerConfig& c);
nlohmann::json to_json(const LibraryConfig& c);
nlohmann::json to_json(const CampaignConfig& c);

void from_json(const nlohmann::json& j, ScenarioConfig& c);
void from_json(const nlohmann::json& j, RewardParams& c);
void from_json(const nlohmann::json& j, PoolRanges& c);
void from_json(const nlohmann::json& j, GprFitOptions& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);
void from_json(const nlohmann::json& j, FmcConfig& c);
void from_json(const nlohmann::json& j, RuleBasedVutConfig& c);
void from_json(const nlohmann::json& j, AnnealingConfig& c);
void from_json(const nlohmann::json& j, SubsetConfig& c);
void from_json(const nlohmann::json& j, TrainerConfig& c);
void from_json(const nlohmann::json& j, CampaignConfig& c);

// Parses a campaign config; missing keys keep their defaults.
CampaignConfig campaign_config_from_json(const nlohmann::json& j);
CampaignConfig load_campaign_config(const std::filesystem::path& path);

// Trainer configs for the library stages, sharing the campaign's scenario,
// rewards and pool.
LibraryConfig library_config(const CampaignConfig& c);

std::string config_hash(const CampaignConfig& c);

}  // namespace mergetest
