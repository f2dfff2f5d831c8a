#include "mergetest/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mergetest/errors.hpp"
#include "mergetest/hash.hpp"

namespace mergetest {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object into existing values and reports any key
// that was never consumed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw FormatError(where_ + ": expected an object");
  }

  template <typename T>
  Reader& get(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        it->get_to(out);
      } catch (const json::exception& e) {
        throw FormatError(where_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void done() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw FormatError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

template <typename T>
void read_child(Reader& r, const char* key, T& out) {
  if (const json* c = r.child(key)) from_json(*c, out);
}

}  // namespace

json to_json(const ScenarioConfig& c) {
  return {{"dt", c.dt}, {"x_vut0", c.x_vut0}, {"v_vut0", c.v_vut0},
          {"t_max", c.t_max}, {"merge_point", c.merge_point}};
}

void from_json(const json& j, ScenarioConfig& c) {
  Reader r(j, "scenario");
  r.get("dt", c.dt).get("x_vut0", c.x_vut0).get("v_vut0", c.v_vut0).get("t_max", c.t_max)
      .get("merge_point", c.merge_point);
  r.done();
}

json to_json(const RewardParams& c) {
  return {{"v_HWmax", c.v_hw_max},
          {"v_HWmin", c.v_hw_min},
          {"v_min", c.v_min},
          {"TTC_min", c.ttc_min},
          {"dx_crash", c.dx_crash},
          {"dx_critical", c.dx_critical},
          {"dx_saturation", c.dx_saturation},
          {"w_POVe", c.w_pov_ego},
          {"w_VUTe", c.w_vut_ego},
          {"w_safe", c.w_safe}};
}

void from_json(const json& j, RewardParams& c) {
  Reader r(j, "rewards");
  r.get("v_HWmax", c.v_hw_max).get("v_HWmin", c.v_hw_min).get("v_min", c.v_min)
      .get("TTC_min", c.ttc_min).get("dx_crash", c.dx_crash).get("dx_critical", c.dx_critical)
      .get("dx_saturation", c.dx_saturation).get("w_POVe", c.w_pov_ego)
      .get("w_VUTe", c.w_vut_ego).get("w_safe", c.w_safe);
  r.done();
}

json to_json(const PoolRanges& c) {
  return {{"x_pov0", {c.x_pov_min, c.x_pov_max}},
          {"v_pov0", {c.v_pov_min, c.v_pov_max}},
          {"psi", {c.psi_min, c.psi_max}}};
}

void from_json(const json& j, PoolRanges& c) {
  Reader r(j, "pool");
  std::array<double, 2> x{c.x_pov_min, c.x_pov_max};
  std::array<double, 2> v{c.v_pov_min, c.v_pov_max};
  std::array<double, 2> p{c.psi_min, c.psi_max};
  r.get("x_pov0", x).get("v_pov0", v).get("psi", p);
  r.done();
  c.x_pov_min = x[0];
  c.x_pov_max = x[1];
  c.v_pov_min = v[0];
  c.v_pov_max = v[1];
  c.psi_min = p[0];
  c.psi_max = p[1];
}

json to_json(const GprFitOptions& c) {
  return {{"initial_lengthscale", c.initial_lengthscale},
          {"restarts", c.restarts},
          {"max_evaluations", c.max_evaluations},
          {"jitter_start", c.jitter_start},
          {"jitter_max", c.jitter_max},
          {"lengthscale_bounds", {c.bounds.lengthscale_min, c.bounds.lengthscale_max}},
          {"signal_variance_bounds", {c.bounds.signal_variance_min, c.bounds.signal_variance_max}},
          {"noise_variance_bounds", {c.bounds.noise_variance_min, c.bounds.noise_variance_max}}};
}

void from_json(const json& j, GprFitOptions& c) {
  Reader r(j, "sampler.gpr");
  std::array<double, 2> l{c.bounds.lengthscale_min, c.bounds.lengthscale_max};
  std::array<double, 2> s{c.bounds.signal_variance_min, c.bounds.signal_variance_max};
  std::array<double, 2> n{c.bounds.noise_variance_min, c.bounds.noise_variance_max};
  r.get("initial_lengthscale", c.initial_lengthscale).get("restarts", c.restarts)
      .get("max_evaluations", c.max_evaluations).get("jitter_start", c.jitter_start)
      .get("jitter_max", c.jitter_max).get("lengthscale_bounds", l)
      .get("signal_variance_bounds", s).get("noise_variance_bounds", n);
  r.done();
  c.bounds = {l[0], l[1], s[0], s[1], n[0], n[1]};
}

json to_json(const SamplerConfig& c) {
  return {{"N", c.total},
          {"n", c.batch},
          {"p", c.candidates},
          {"epsilon0", c.epsilon0},
          {"alpha", c.alpha},
          {"z", {c.exponents.z1, c.exponents.z2, c.exponents.z3, c.exponents.z4}},
          {"xi", c.xi},
          {"fail_threshold", c.fail_threshold},
          {"dedup_radius", c.dedup_radius},
          {"challenge", to_string(c.challenge)},
          {"levels", c.levels},
          {"seed", c.seed},
          {"gpr", to_json(c.gpr)}};
}

void from_json(const json& j, SamplerConfig& c) {
  Reader r(j, "sampler");
  std::array<double, 4> z{c.exponents.z1, c.exponents.z2, c.exponents.z3, c.exponents.z4};
  std::string challenge = to_string(c.challenge);
  r.get("N", c.total).get("n", c.batch).get("p", c.candidates).get("epsilon0", c.epsilon0)
      .get("alpha", c.alpha).get("z", z).get("xi", c.xi).get("fail_threshold", c.fail_threshold)
      .get("dedup_radius", c.dedup_radius).get("challenge", challenge).get("levels", c.levels)
      .get("seed", c.seed);
  read_child(r, "gpr", c.gpr);
  r.done();
  c.exponents = {z[0], z[1], z[2], z[3]};
  try {
    c.challenge = challenge_scale_from_string(challenge);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("sampler.challenge: ") + e.what());
  }
}

json to_json(const FmcConfig& c) {
  return {{"rho", c.rho},
          {"lambda", c.lambda},
          {"estimator", to_string(c.estimator)},
          {"mc_points", c.mc_points},
          {"mc_seed", c.mc_seed},
          {"grid_resolution", c.grid_resolution}};
}

void from_json(const json& j, FmcConfig& c) {
  Reader r(j, "fmc");
  std::string estimator = to_string(c.estimator);
  r.get("rho", c.rho).get("lambda", c.lambda).get("estimator", estimator)
      .get("mc_points", c.mc_points).get("mc_seed", c.mc_seed)
      .get("grid_resolution", c.grid_resolution);
  r.done();
  try {
    c.estimator = fmc_estimator_from_string(estimator);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("fmc.estimator: ") + e.what());
  }
}

json to_json(const RuleBasedVutConfig& c) {
  return {{"x_rb1", c.x_rb1},
          {"x_rb2", c.x_rb2},
          {"dx_safe", c.dx_safe},
          {"kp", c.kp},
          {"ki", c.ki},
          {"kd", c.kd},
          {"gap_setpoint", c.gap_setpoint},
          {"dt", c.dt},
          {"reference_accel", c.reference.accel},
          {"reference_cruise_speed", c.reference.cruise_speed}};
}

void from_json(const json& j, RuleBasedVutConfig& c) {
  Reader r(j, "vut rule-based");
  r.get("x_rb1", c.x_rb1).get("x_rb2", c.x_rb2).get("dx_safe", c.dx_safe).get("kp", c.kp)
      .get("ki", c.ki).get("kd", c.kd).get("gap_setpoint", c.gap_setpoint).get("dt", c.dt)
      .get("reference_accel", c.reference.accel)
      .get("reference_cruise_speed", c.reference.cruise_speed);
  r.done();
}

json to_json(const AnnealingConfig& c) {
  return {{"t_start", c.t_start}, {"t_end", c.t_end}, {"step", c.step}};
}

void from_json(const json& j, AnnealingConfig& c) {
  Reader r(j, "annealing");
  r.get("t_start", c.t_start).get("t_end", c.t_end).get("step", c.step);
  r.done();
}

json to_json(const SubsetConfig& c) {
  return {{"stage_size", c.stage_size}, {"p0", c.p0}, {"proposal_sd", c.proposal_sd}};
}

void from_json(const json& j, SubsetConfig& c) {
  Reader r(j, "subset");
  r.get("stage_size", c.stage_size).get("p0", c.p0).get("proposal_sd", c.proposal_sd);
  r.done();
}

namespace {

json trainer_fields(const TrainerConfig& c) {
  return {{"gamma", c.gamma},
          {"replay_capacity", c.replay_capacity},
          {"minibatch", c.minibatch},
          {"target_sync_steps", c.target_sync_steps},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"epsilon_decay_steps", c.epsilon_decay_steps},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"grad_clip", c.grad_clip},
          {"huber_delta", c.huber_delta},
          {"reward_scale", c.reward_scale},
          {"episodes", c.episodes},
          {"warmup_steps", c.warmup_steps},
          {"train_every", c.train_every},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

void read_trainer_fields(Reader& r, TrainerConfig& c) {
  r.get("gamma", c.gamma).get("replay_capacity", c.replay_capacity)
      .get("minibatch", c.minibatch).get("target_sync_steps", c.target_sync_steps)
      .get("epsilon_start", c.epsilon_start).get("epsilon_end", c.epsilon_end)
      .get("epsilon_decay_steps", c.epsilon_decay_steps).get("learning_rate", c.learning_rate)
      .get("momentum", c.momentum).get("grad_clip", c.grad_clip)
      .get("huber_delta", c.huber_delta).get("reward_scale", c.reward_scale)
      .get("episodes", c.episodes).get("warmup_steps", c.warmup_steps)
      .get("train_every", c.train_every).get("hidden", c.hidden).get("seed", c.seed);
}

void read_stage(const json* j, const char* name, TrainerConfig& c) {
  if (!j) return;
  Reader r(*j, std::string("training.") + name);
  read_trainer_fields(r, c);
  r.done();
}

}  // namespace

json to_json(const TrainerConfig& c) {
  json j = trainer_fields(c);
  j["pool"] = to_json(c.pool);
  j["scenario"] = to_json(c.scenario);
  j["rewards"] = to_json(c.rewards);
  return j;
}

void from_json(const json& j, TrainerConfig& c) {
  Reader r(j, "trainer");
  read_trainer_fields(r, c);
  read_child(r, "pool", c.pool);
  read_child(r, "scenario", c.scenario);
  read_child(r, "rewards", c.rewards);
  r.done();
}

json to_json(const LibraryConfig& c) {
  return {{"pov1", to_json(c.pov1)}, {"vut1", to_json(c.vut1)}, {"pov2", to_json(c.pov2)}};
}

json to_json(const CampaignConfig& c) {
  json score = {{"mu_crash", c.weights.crash},
                {"mu_safety", c.weights.safety},
                {"mu_task", c.weights.task},
                {"speed_tolerance", c.shape.speed_tolerance},
                {"comfort_accel", c.shape.comfort_accel},
                {"harsh_accel", c.shape.harsh_accel}};
  return {{"scenario", to_json(c.scenario)},
          {"rewards", to_json(c.rewards)},
          {"pool", to_json(c.pool)},
          {"sampler", to_json(c.sampler)},
          {"fmc", to_json(c.fmc)},
          {"score", std::move(score)},
          {"annealing", to_json(c.annealing)},
          {"subset", to_json(c.subset)},
          {"ground_truth",
           {{"cases_level01", c.ground_truth.cases_level01},
            {"cases_level2", c.ground_truth.cases_level2}}},
          {"vut",
           {{"select", c.vut.select},
            {"design1", to_json(c.vut.design1)},
            {"design2", to_json(c.vut.design2)}}},
          {"library", c.library.generic_string()},
          {"training",
           {{"pov1", trainer_fields(c.training.pov1)},
            {"vut1", trainer_fields(c.training.vut1)},
            {"pov2", trainer_fields(c.training.pov2)}}}};
}

void from_json(const json& j, CampaignConfig& c) {
  Reader r(j, "config");
  read_child(r, "scenario", c.scenario);
  read_child(r, "rewards", c.rewards);
  read_child(r, "pool", c.pool);
  read_child(r, "sampler", c.sampler);
  read_child(r, "fmc", c.fmc);
  read_child(r, "annealing", c.annealing);
  read_child(r, "subset", c.subset);
  if (const json* s = r.child("score")) {
    Reader sr(*s, "score");
    sr.get("mu_crash", c.weights.crash).get("mu_safety", c.weights.safety)
        .get("mu_task", c.weights.task).get("speed_tolerance", c.shape.speed_tolerance)
        .get("comfort_accel", c.shape.comfort_accel).get("harsh_accel", c.shape.harsh_accel);
    sr.done();
  }
  if (const json* g = r.child("ground_truth")) {
    Reader gr(*g, "ground_truth");
    gr.get("cases_level01", c.ground_truth.cases_level01)
        .get("cases_level2", c.ground_truth.cases_level2);
    gr.done();
  }
  if (const json* v = r.child("vut")) {
    Reader vr(*v, "vut");
    vr.get("select", c.vut.select);
    read_child(vr, "design1", c.vut.design1);
    read_child(vr, "design2", c.vut.design2);
    vr.done();
  }
  std::string library = c.library.generic_string();
  r.get("library", library);
  c.library = library;
  if (const json* t = r.child("training")) {
    Reader tr(*t, "training");
    read_stage(tr.child("pov1"), "pov1", c.training.pov1);
    read_stage(tr.child("vut1"), "vut1", c.training.vut1);
    read_stage(tr.child("pov2"), "pov2", c.training.pov2);
    tr.done();
  }
  r.done();

  // Score thresholds track the reward thresholds.
  const ScoreShape from_rewards = ScoreShape::from_rewards(c.rewards);
  c.shape.ttc_min = from_rewards.ttc_min;
  c.shape.gap_crash = from_rewards.gap_crash;
  c.shape.gap_critical = from_rewards.gap_critical;
  c.shape.gap_good = from_rewards.gap_good;
  c.shape.speed_band_min = from_rewards.speed_band_min;
  c.shape.speed_band_max = from_rewards.speed_band_max;
}

void CampaignConfig::validate() const {
  scenario.validate();
  rewards.validate();
  pool.validate();
  sampler.validate();
  fmc.validate();
  weights.validate();
  annealing.validate();
  subset.validate();
  if (ground_truth.cases_level01 < 0 || ground_truth.cases_level2 < 0) {
    throw std::invalid_argument("ground-truth case counts must be >= 0");
  }
  vut.design1.validate(scenario.x_vut0);
  vut.design2.validate(scenario.x_vut0);
}

CampaignConfig campaign_config_from_json(const json& j) {
  CampaignConfig c;
  from_json(j, c);
  c.validate();
  return c;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return campaign_config_from_json(j);
}

LibraryConfig library_config(const CampaignConfig& c) {
  LibraryConfig lib = c.training;
  for (TrainerConfig* t : {&lib.pov1, &lib.vut1, &lib.pov2}) {
    t->scenario = c.scenario;
    t->rewards = c.rewards;
    t->pool = c.pool;
  }
  return lib;
}

std::string config_hash(const CampaignConfig& c) { return fnv1a64_hex(to_json(c).dump()); }

}  // namespace mergetest
