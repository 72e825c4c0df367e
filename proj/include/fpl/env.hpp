#pragma once

// Multi-fulfillment MDPs: environments whose reward is a vector of
// fulfillments in [0,1], one per named objective.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpl/config.hpp"
#include "fpl/semantics.hpp"
#include "fpl/toy.hpp"

namespace fpl {

using Vec = std::vector<double>;

struct StepResult {
  Vec next_state;
  Vec reward;
  bool terminated = false;
  bool truncated = false;
};

struct EnvSpec {
  std::string name;
  std::size_t observation_dim = 0;
  std::size_t action_dim = 0;
  Vec action_low;
  Vec action_high;
  std::vector<std::string> objective_names;
  std::size_t max_episode_steps = 0;
  std::string bundled_fpl;
};

class MfEnv {
public:
  virtual ~MfEnv() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vec reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const double> action) = 0;
  virtual std::unique_ptr<MfEnv> clone() const = 0;

  /// The bundled FPL text compiled against this environment's objectives.
  UtilitySpec utility_spec(Mode mode = Mode::strict) const {
    return make_spec_for(spec(), spec().bundled_fpl, mode);
  }

  static UtilitySpec make_spec_for(const EnvSpec& env, std::string_view fpl_text, Mode mode) {
    auto file = parse_spec_file(fpl_text);
    auto order = file.objectives.empty() ? env.objective_names : file.objectives;
    if (order != env.objective_names)
      throw SpecError("spec objectives do not match environment '" + env.name + "'");
    return UtilitySpec(std::move(file.formula), std::move(order), mode);
  }

protected:
  void check_action(std::span<const double> action) const {
    if (action.size() != spec().action_dim)
      throw std::invalid_argument(spec().name + ": expected action of dimension " +
                                  std::to_string(spec().action_dim) + ", got " +
                                  std::to_string(action.size()));
  }
};

struct PendulumParams {
  double g = 10.0;
  double m = 1.0;
  double l = 1.0;
  double dt = 0.05;
  double max_speed = 8.0;
  double max_torque = 2.0;
  std::size_t horizon = 200;
};

/// Swing-up pendulum, theta = 0 upright. Rewards are
/// f_angle = (1 + cos theta) / 2 and f_actuation = 1 - |tau| / max_torque,
/// both measured at the state the action is applied in.
class PendulumEnv final : public MfEnv {
public:
  static constexpr const char* default_fpl = "f_angle^2 &{-1} f_actuation";

  explicit PendulumEnv(PendulumParams params = {}) : params_(params) {
    spec_.name = "pendulum";
    spec_.observation_dim = 3;
    spec_.action_dim = 1;
    spec_.action_low = {-params_.max_torque};
    spec_.action_high = {params_.max_torque};
    spec_.objective_names = {"f_angle", "f_actuation"};
    spec_.max_episode_steps = params_.horizon;
    spec_.bundled_fpl = default_fpl;
  }

  const EnvSpec& spec() const override { return spec_; }
  EnvSpec& mutable_spec() { return spec_; }
  const PendulumParams& params() const { return params_; }

  Vec reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    theta_ = angle(rng);
    theta_dot_ = speed(rng);
    steps_ = 0;
    return observation();
  }

  StepResult step(std::span<const double> action) override {
    check_action(action);
    const auto& p = params_;
    const double torque = std::clamp(action[0], -p.max_torque, p.max_torque);

    StepResult out;
    out.reward = {(1.0 + std::cos(theta_)) / 2.0,
                  std::clamp(1.0 - std::abs(torque) / p.max_torque, 0.0, 1.0)};

    const double accel =
        3.0 * p.g / (2.0 * p.l) * std::sin(theta_) + 3.0 / (p.m * p.l * p.l) * torque;
    theta_dot_ = std::clamp(theta_dot_ + accel * p.dt, -p.max_speed, p.max_speed);
    theta_ = wrap_angle(theta_ + theta_dot_ * p.dt);
    ++steps_;

    out.next_state = observation();
    out.truncated = steps_ >= p.horizon;
    return out;
  }

  std::unique_ptr<MfEnv> clone() const override { return std::make_unique<PendulumEnv>(*this); }

  void set_state(double theta, double theta_dot) {
    theta_ = wrap_angle(theta);
    theta_dot_ = theta_dot;
  }
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

  /// Rod about its pivot: (1/2)(m l^2 / 3) w^2 + m g (l / 2) cos theta.
  double energy() const {
    const auto& p = params_;
    return 0.5 * (p.m * p.l * p.l / 3.0) * theta_dot_ * theta_dot_ +
           p.m * p.g * (p.l / 2.0) * std::cos(theta_);
  }

  Vec observation() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

  /// Into (-pi, pi].
  static double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::fmod(a + std::numbers::pi, two_pi);
    if (r < 0.0) r += two_pi;
    r -= std::numbers::pi;
    return r == -std::numbers::pi ? std::numbers::pi : r;
  }

private:
  PendulumParams params_;
  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t steps_ = 0;
};

struct ToyEnvParams {
  double alpha = 0.8;
  double rate = 0.1;
  double init_low = 0.3;
  double init_high = 0.7;
  std::size_t horizon = 50;
};

/// The two-objective competitive toy as an MF-MDP. State (b0, b1); each
/// action component nudges one base value by rate * a, a in [-1, 1]; the
/// reward is (f0, f1) at the resulting state.
class ToyEnv final : public MfEnv {
public:
  static constexpr const char* default_fpl = "f0 &{-1} f1";

  explicit ToyEnv(ToyEnvParams params = {}) : params_(params) {
    spec_.name = "toy";
    spec_.observation_dim = 2;
    spec_.action_dim = 2;
    spec_.action_low = {-1.0, -1.0};
    spec_.action_high = {1.0, 1.0};
    spec_.objective_names = {"f0", "f1"};
    spec_.max_episode_steps = params_.horizon;
    spec_.bundled_fpl = default_fpl;
  }

  const EnvSpec& spec() const override { return spec_; }
  EnvSpec& mutable_spec() { return spec_; }

  Vec reset(std::uint64_t seed) override {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(params_.init_low, params_.init_high);
    state_.alpha = params_.alpha;
    state_.b0 = init(rng);
    state_.b1 = init(rng);
    steps_ = 0;
    return {state_.b0, state_.b1};
  }

  StepResult step(std::span<const double> action) override {
    check_action(action);
    state_.b0 = std::clamp(state_.b0 + params_.rate * std::clamp(action[0], -1.0, 1.0), 0.0, 1.0);
    state_.b1 = std::clamp(state_.b1 + params_.rate * std::clamp(action[1], -1.0, 1.0), 0.0, 1.0);
    ++steps_;
    const auto f = toy::toy_fulfillments(state_);
    StepResult out;
    out.next_state = {state_.b0, state_.b1};
    out.reward = {std::clamp(f.f0, 0.0, 1.0), std::clamp(f.f1, 0.0, 1.0)};
    out.truncated = steps_ >= params_.horizon;
    return out;
  }

  std::unique_ptr<MfEnv> clone() const override { return std::make_unique<ToyEnv>(*this); }

  const toy::ToyState& state() const { return state_; }

private:
  ToyEnvParams params_;
  EnvSpec spec_;
  toy::ToyState state_;
  std::size_t steps_ = 0;
};

/// Builds a named environment. `cfg` may override physics constants and the
/// horizon; keys it does not recognise are rejected.
inline std::unique_ptr<MfEnv> make_env(const std::string& name, const KeyValues& cfg = {}) {
  if (name == "pendulum") {
    PendulumParams p;
    p.g = cfg.get_double("g", p.g);
    p.m = cfg.get_double("m", p.m);
    p.l = cfg.get_double("l", p.l);
    p.dt = cfg.get_double("dt", p.dt);
    p.max_speed = cfg.get_double("max_speed", p.max_speed);
    p.max_torque = cfg.get_double("max_torque", p.max_torque);
    p.horizon = cfg.get_uint("horizon", p.horizon);
    cfg.get_string("name", name);
    cfg.reject_unknown();
    if (p.horizon == 0 || !(p.dt > 0.0) || !(p.max_torque > 0.0) || !(p.m > 0.0) || !(p.l > 0.0))
      throw ConfigError("pendulum: invalid physics constants");
    return std::make_unique<PendulumEnv>(p);
  }
  if (name == "toy") {
    ToyEnvParams p;
    p.alpha = cfg.get_double("alpha", p.alpha);
    p.rate = cfg.get_double("rate", p.rate);
    p.init_low = cfg.get_double("init_low", p.init_low);
    p.init_high = cfg.get_double("init_high", p.init_high);
    p.horizon = cfg.get_uint("horizon", p.horizon);
    cfg.get_string("name", name);
    cfg.reject_unknown();
    if (p.horizon == 0 || !(p.alpha >= 0.0 && p.alpha <= 1.0) ||
        !(0.0 <= p.init_low && p.init_low <= p.init_high && p.init_high <= 1.0))
      throw ConfigError("toy: invalid parameters");
    return std::make_unique<ToyEnv>(p);
  }
  throw std::invalid_argument("unknown environment '" + name + "'");
}

/// Loads an environment bundle directory: `env.cfg` (must name the
/// environment) and an optional `spec.fpl` replacing the bundled formula.
inline std::unique_ptr<MfEnv> load_env_bundle(const std::filesystem::path& dir) {
  const auto cfg = KeyValues::load((dir / "env.cfg").string());
  const auto name = cfg.get_string("name", "");
  if (name.empty()) throw ConfigError((dir / "env.cfg").string() + ": missing 'name'");
  auto env = make_env(name, cfg);

  const auto spec_path = dir / "spec.fpl";
  if (std::filesystem::exists(spec_path)) {
    const auto text = read_file(spec_path.string());
    // validate against the objective layout before accepting it
    MfEnv::make_spec_for(env->spec(), text, Mode::relaxed);
    if (auto* p = dynamic_cast<PendulumEnv*>(env.get())) p->mutable_spec().bundled_fpl = text;
    if (auto* t = dynamic_cast<ToyEnv*>(env.get())) t->mutable_spec().bundled_fpl = text;
  }
  return env;
}

/// A name from make_env or a path to a bundle directory.
inline std::unique_ptr<MfEnv> resolve_env(const std::string& name_or_dir) {
  if (std::filesystem::is_directory(name_or_dir)) return load_env_bundle(name_or_dir);
  return make_env(name_or_dir);
}

} // namespace fpl
