#include "mergetest/scenario.hpp"

#include <stdexcept>

namespace mergetest {

EpisodeOutcome run_case(const PovLibrary& library, const VutSelection& vut,
                        const ScenarioSetup& setup, const TestCase& test) {
  const StoredPolicy& pov = library.pov(test.level);
  const PolicyFn pov_fn =
      bind_policy(pov, test.level >= 2 ? std::optional<double>(test.psi) : std::nullopt);

  PolicyFn vut_fn;
  std::optional<RuleBasedVut> controller;
  switch (vut.kind) {
    case VutSelection::Kind::rule_based:
      controller.emplace(vut.rule_based);
      vut_fn = [&controller](const State& s) { return controller->act(s); };
      break;
    case VutSelection::Kind::level0:
      vut_fn = [](const State& s) { return level0_vut_action(s); };
      break;
    case VutSelection::Kind::policy:
      if (!vut.policy) throw std::invalid_argument("VUT policy selection has no policy loaded");
      vut_fn = bind_policy(*vut.policy);
      break;
  }
  return run_episode(pov_fn, vut_fn, test.initial(), setup.scenario, setup.rewards);
}

CaseScorer make_case_scorer(std::shared_ptr<const PovLibrary> library,
                            std::shared_ptr<const VutSelection> vut, ScenarioSetup setup) {
  return [library = std::move(library), vut = std::move(vut), setup](const TestCase& test) {
    const EpisodeOutcome outcome = run_case(*library, *vut, setup, test);
    const ScoreBreakdown b = score_episode(outcome, setup.weights, setup.shape);
    return CaseOutcome{b.total, b.crashed};
  };
}

}  // namespace mergetest
