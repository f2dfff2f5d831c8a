#pragma once

// Binds the POV library and a vehicle under test into a case scorer.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "mergetest/agents.hpp"
#include "mergetest/campaign.hpp"
#include "mergetest/metrics.hpp"
#include "mergetest/trainer.hpp"

namespace mergetest {

// The vehicle under test: a rule-based controller, the analytic level-0 VUT,
// or a stored VUT policy.
struct VutSelection {
  enum class Kind { rule_based, level0, policy };
  Kind kind = Kind::rule_based;
  RuleBasedVutConfig rule_based = RuleBasedVutConfig::design2();
  std::optional<StoredPolicy> policy;
  std::string label = "rb2";
};

struct ScenarioSetup {
  ScenarioConfig scenario;
  RewardParams rewards;
  ScoreWeights weights;
  ScoreShape shape;
};

// Runs the episode of one test case.
EpisodeOutcome run_case(const PovLibrary& library, const VutSelection& vut,
                        const ScenarioSetup& setup, const TestCase& test);

// Scorer over `library` and `vut`; both are shared and must outlive it.
CaseScorer make_case_scorer(std::shared_ptr<const PovLibrary> library,
                            std::shared_ptr<const VutSelection> vut, ScenarioSetup setup);

}  // namespace mergetest
