#pragma once

// Balanced Policy Gradient: a deterministic actor-critic whose critic
// predicts one discounted fulfillment (FQ-value) per objective and whose
// actor ascends an FPL utility of those predictions.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fpl/checkpoint.hpp"
#include "fpl/config.hpp"
#include "fpl/env.hpp"
#include "fpl/mlp.hpp"
#include "fpl/replay.hpp"
#include "fpl/semantics.hpp"

namespace fpl::bpg {

using nn::Matrix;
using nn::Mlp;

/// How exploration noise scales with the previous episode's utility J.
/// `performance` uses sigma * max(J, floor); `inverse` uses
/// sigma * max(1 - J, floor).
enum class NoiseMode { performance, inverse };

struct BpgConfig {
  double gamma = 0.98;
  double alpha_fv = 0.75;
  double sigma = 0.05;
  double j_floor = 0.1;
  NoiseMode noise_mode = NoiseMode::performance;
  std::size_t batch_size = 128;
  std::size_t buffer_capacity = 100000;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double tau = 0.005;
  std::size_t train_iters_per_episode = 0; // 0: one per collected step
  std::size_t total_env_steps = 50000;
  std::uint64_t seed = 0;
  std::size_t hidden_units = 64;
  std::size_t hidden_layers = 2;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double grad_clip = 1.0;
};

/// y = (1 - g) r + g FQ_targ(s', pi_targ(s')), without the bootstrap term
/// for terminated transitions. Writes batch.td_target and returns it.
inline const Matrix& td_targets(Batch& batch, const Mlp& critic_target, const Mlp& actor_target,
                                double gamma) {
  const Matrix next_actions = actor_target.forward(batch.next_states).output();
  Matrix critic_in(batch.next_states.rows() + next_actions.rows(), batch.size());
  critic_in << batch.next_states, next_actions;
  const Matrix next_fq = critic_target.forward(critic_in).output();

  batch.td_target.resize(batch.rewards.rows(), batch.size());
  for (Eigen::Index c = 0; c < batch.size(); ++c) {
    const bool bootstrap = batch.terminated(c) == 0.0;
    for (Eigen::Index r = 0; r < batch.rewards.rows(); ++r) {
      const double reward = batch.rewards(r, c);
      batch.td_target(r, c) =
          bootstrap ? next_fq(r, c) + (1.0 - gamma) * (reward - next_fq(r, c))
                    : (1.0 - gamma) * reward;
    }
  }
  return batch.td_target;
}

/// Root-mean-square over every element: the p = 2 power mean of |residual|.
inline double rms(const Matrix& residual) {
  if (residual.size() == 0) return 0.0;
  return std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
}

/// d rms / d residual.
inline Matrix rms_grad(const Matrix& residual) {
  const double l = rms(residual);
  if (l == 0.0) return Matrix::Zero(residual.rows(), residual.cols());
  return residual / (static_cast<double>(residual.size()) * l);
}

inline Matrix critic_input(const Matrix& states, const Matrix& actions) {
  Matrix in(states.rows() + actions.rows(), states.cols());
  in << states, actions;
  return in;
}

struct CriticLosses {
  double l_td = 0.0;
  double l_fv = 0.0;
  double mean_abs_fq_fv = 0.0;
  nn::MlpGrad grad; // of l_td + alpha_fv * l_fv w.r.t. the critic parameters
};

/// Both critic losses on a batch whose TD targets are already filled in.
inline CriticLosses critic_losses(const Batch& batch, const Mlp& critic, double alpha_fv) {
  if (batch.size() == 0) throw std::invalid_argument("critic_losses: empty batch");
  const auto cache = critic.forward(critic_input(batch.states, batch.actions));
  const Matrix& fq = cache.output();
  const Matrix td_res = batch.td_target - fq;
  const Matrix fv_res = batch.fv_obs - fq;

  CriticLosses out;
  out.l_td = rms(td_res);
  out.l_fv = rms(fv_res);
  out.mean_abs_fq_fv = fv_res.cwiseAbs().mean();
  const Matrix d_fq = -rms_grad(td_res) - alpha_fv * rms_grad(fv_res);
  out.grad = critic.backward(cache, d_fq);
  return out;
}

struct ActorObjective {
  double j = 0.0;
  Eigen::VectorXd utilities;
  nn::MlpGrad grad; // dJ / d actor parameters
};

/// J = RMS over the batch of u(FQ(s, pi(s))), with its gradient chained
/// through the utility, the critic's action input and the actor.
inline ActorObjective actor_objective(const Matrix& states, const Mlp& actor, const Mlp& critic,
                                      const UtilitySpec& spec) {
  if (critic.output_dim() != spec.size())
    throw SpecError("actor_objective: critic emits " + std::to_string(critic.output_dim()) +
                    " values but the spec has " + std::to_string(spec.size()) + " objectives");
  const auto actor_cache = actor.forward(states);
  const Matrix& actions = actor_cache.output();
  const auto critic_cache = critic.forward(critic_input(states, actions));
  const Matrix& fq = critic_cache.output();

  const Eigen::Index n = states.cols();
  ActorObjective out;
  out.utilities.resize(n);
  std::vector<double> column(static_cast<std::size_t>(fq.rows()));
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < fq.rows(); ++r) column[static_cast<std::size_t>(r)] = fq(r, c);
    out.utilities(c) = spec.evaluate(column);
  }
  out.j = std::sqrt(out.utilities.squaredNorm() / static_cast<double>(n));

  Matrix d_fq = Matrix::Zero(fq.rows(), n);
  if (out.j > 0.0) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const double dj_du = out.utilities(c) / (static_cast<double>(n) * out.j);
      for (Eigen::Index r = 0; r < fq.rows(); ++r) column[static_cast<std::size_t>(r)] = fq(r, c);
      const auto du = spec.gradient(column);
      for (Eigen::Index r = 0; r < fq.rows(); ++r) d_fq(r, c) = dj_du * du[static_cast<std::size_t>(r)];
    }
  }
  const auto critic_grad = critic.backward(critic_cache, d_fq);
  const Matrix d_actions = critic_grad.input.bottomRows(actions.rows());
  out.grad = actor.backward(actor_cache, d_actions);
  return out;
}

struct CurveRow {
  std::size_t episode = 0;
  std::size_t env_steps = 0;
  std::vector<double> mean_fulfillment;
  double mean_utility = 0.0;
  double l_td = 0.0;
  double l_fv = 0.0;
  double fq_fv_gap = 0.0;
};

inline void write_curve_header(std::ostream& os, const std::vector<std::string>& objectives) {
  os << "episode,env_steps";
  for (const auto& name : objectives) os << ",mean_" << name;
  os << ",mean_utility,l_td,l_fv,fq_fv_gap\n";
}

inline void write_curve_row(std::ostream& os, const CurveRow& row) {
  const auto prec = os.precision(12);
  os << row.episode << ',' << row.env_steps;
  for (double f : row.mean_fulfillment) os << ',' << f;
  os << ',' << row.mean_utility << ',' << row.l_td << ',' << row.l_fv << ',' << row.fq_fv_gap
     << '\n';
  os.precision(prec);
}

class TrainingDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct TrainReport {
  std::vector<CurveRow> curve;
  std::size_t episodes = 0;
  std::size_t env_steps = 0;
  std::size_t updates = 0;
  std::size_t td_target_violations = 0;
  double j_prev = 0.0;
};

/// Owns the networks, replay buffer and RNG of one training run.
/// Single-threaded; deterministic for a given environment, spec and config.
class Trainer {
public:
  Trainer(std::unique_ptr<MfEnv> env, UtilitySpec spec, BpgConfig cfg)
      : env_(std::move(env)), spec_(std::move(spec)), cfg_(cfg), rng_(cfg.seed),
        actor_(make_actor(env_->spec(), cfg_, rng_)),
        critic_(make_critic(env_->spec(), cfg_, rng_)), buffer_(cfg_.buffer_capacity) {
    if (!(cfg_.gamma >= 0.0 && cfg_.gamma < 1.0))
      throw std::invalid_argument("BpgConfig: gamma must lie in [0,1)");
    if (!(cfg_.alpha_fv >= 0.0)) throw std::invalid_argument("BpgConfig: alpha_fv must be >= 0");
    if (!(cfg_.tau >= 0.0 && cfg_.tau <= 1.0))
      throw std::invalid_argument("BpgConfig: tau must lie in [0,1]");
    if (cfg_.batch_size == 0) throw std::invalid_argument("BpgConfig: batch_size must be positive");
    if (spec_.objective_order() != env_->spec().objective_names)
      throw SpecError("utility spec objectives do not match environment '" + env_->spec().name +
                      "'");
    actor_opt_ = nn::Optimizer(actor_.online, cfg_.optimizer, cfg_.actor_lr, cfg_.grad_clip);
    critic_opt_ = nn::Optimizer(critic_.online, cfg_.optimizer, cfg_.critic_lr, cfg_.grad_clip);
  }

  static Mlp make_actor(const EnvSpec& env, const BpgConfig& cfg, std::mt19937_64& rng) {
    std::vector<std::size_t> sizes{env.observation_dim};
    for (std::size_t i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden_units);
    sizes.push_back(env.action_dim);
    return Mlp(sizes, nn::OutputActivation::tanh_scaled, rng, env.action_low, env.action_high);
  }

  static Mlp make_critic(const EnvSpec& env, const BpgConfig& cfg, std::mt19937_64& rng) {
    std::vector<std::size_t> sizes{env.observation_dim + env.action_dim};
    for (std::size_t i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden_units);
    sizes.push_back(env.objective_names.size());
    return Mlp(sizes, nn::OutputActivation::logistic, rng);
  }

  const BpgConfig& config() const { return cfg_; }
  const UtilitySpec& spec() const { return spec_; }
  const MfEnv& env() const { return *env_; }
  const nn::TargetPair& actor() const { return actor_; }
  const nn::TargetPair& critic() const { return critic_; }
  nn::TargetPair& critic() { return critic_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const TrainReport& report() const { return report_; }

  double noise_scale() const {
    const double j = cfg_.noise_mode == NoiseMode::performance ? report_.j_prev
                                                               : 1.0 - report_.j_prev;
    return std::max(j, cfg_.j_floor);
  }

  bool done() const { return report_.env_steps >= cfg_.total_env_steps; }

  /// Collects one episode, finalizes its FV-obs and runs the training
  /// iterations that follow it. Returns the learning-curve row.
  CurveRow run_episode() {
    const auto& es = env_->spec();
    const std::uint64_t episode_seed = rng_();
    Vec state = env_->reset(episode_seed);

    CurveRow row;
    row.episode = report_.episodes;
    row.mean_fulfillment.assign(es.objective_names.size(), 0.0);
    double utility_sum = 0.0;
    std::size_t steps = 0;

    while (report_.env_steps < cfg_.total_env_steps) {
      const Mlp behaviour = nn::perturb_params(actor_.online, cfg_.sigma, noise_scale(), rng_);
      const auto a = behaviour.forward_one(state);
      Vec action(a.data(), a.data() + a.size());
      for (std::size_t d = 0; d < action.size(); ++d)
        action[d] = std::clamp(action[d], es.action_low[d], es.action_high[d]);

      StepResult sr = env_->step(action);
      ++report_.env_steps;
      for (std::size_t d = 0; d < sr.reward.size(); ++d) row.mean_fulfillment[d] += sr.reward[d];
      utility_sum += spec_.evaluate(sr.reward);

      const bool last = sr.terminated || sr.truncated || report_.env_steps >= cfg_.total_env_steps;
      Transition t;
      t.state = std::move(state);
      t.action = std::move(action);
      t.reward = std::move(sr.reward);
      t.next_state = sr.next_state;
      t.terminated = sr.terminated;
      // the step budget ends the episode the same way a horizon does
      t.truncated = sr.truncated || (last && !sr.terminated);
      t.episode_id = report_.episodes;
      t.step_index = steps;
      buffer_.add(std::move(t));
      state = std::move(sr.next_state);
      ++steps;
      if (last) break;
    }
    if (steps == 0) return row;

    buffer_.close_episode(cfg_.gamma);
    for (double& f : row.mean_fulfillment) f /= static_cast<double>(steps);
    row.mean_utility = utility_sum / static_cast<double>(steps);
    report_.j_prev = std::clamp(row.mean_utility, 0.0, 1.0);

    const std::size_t iters = cfg_.train_iters_per_episode ? cfg_.train_iters_per_episode : steps;
    for (std::size_t i = 0; i < iters; ++i) {
      const auto stats = train_iteration();
      row.l_td += stats.l_td;
      row.l_fv += stats.l_fv;
      row.fq_fv_gap += stats.mean_abs_fq_fv;
    }
    row.l_td /= static_cast<double>(iters);
    row.l_fv /= static_cast<double>(iters);
    row.fq_fv_gap /= static_cast<double>(iters);

    ++report_.episodes;
    row.env_steps = report_.env_steps;
    report_.curve.push_back(row);
    return row;
  }

  /// Runs episodes until the step budget is spent. Each curve row is
  /// written to `curve` when given.
  const TrainReport& train(std::ostream* curve = nullptr) {
    if (curve) write_curve_header(*curve, env_->spec().objective_names);
    while (!done()) {
      const auto row = run_episode();
      if (curve) write_curve_row(*curve, row);
    }
    return report_;
  }

  struct IterationStats {
    double l_td = 0.0;
    double l_fv = 0.0;
    double mean_abs_fq_fv = 0.0;
    double j = 0.0;
  };

  /// One critic step on l_td + alpha_fv l_fv, one actor ascent step on J,
  /// then Polyak updates of both targets.
  IterationStats train_iteration() {
    Batch batch = buffer_.sample(cfg_.batch_size, rng_);
    td_targets(batch, critic_.target, actor_.target, cfg_.gamma);
    for (Eigen::Index i = 0; i < batch.td_target.size(); ++i) {
      const double y = batch.td_target.data()[i];
      if (!(y >= 0.0 && y <= 1.0)) ++report_.td_target_violations;
    }

    auto losses = critic_losses(batch, critic_.online, cfg_.alpha_fv);
    if (!std::isfinite(losses.l_td) || !std::isfinite(losses.l_fv))
      fail("non-finite critic loss", losses.l_td, losses.l_fv);
    critic_opt_.step(critic_.online, std::move(losses.grad));

    auto objective = actor_objective(batch.states, actor_.online, critic_.online, spec_);
    if (!std::isfinite(objective.j)) fail("non-finite actor objective", losses.l_td, losses.l_fv);
    objective.grad.scale(-1.0);
    actor_opt_.step(actor_.online, std::move(objective.grad));

    nn::polyak_update(critic_, cfg_.tau);
    nn::polyak_update(actor_, cfg_.tau);
    ++report_.updates;
    return {losses.l_td, losses.l_fv, losses.mean_abs_fq_fv, objective.j};
  }

  /// Directory receiving a state dump if training diverges.
  void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }

private:
  [[noreturn]] void fail(const std::string& what, double l_td, double l_fv) {
    std::ostringstream dump;
    dump << std::setprecision(17) << "error: " << what << "\nenv: " << env_->spec().name
         << "\nspec: " << format(spec_.formula()) << "\nseed: " << cfg_.seed
         << "\nepisodes: " << report_.episodes << "\nenv_steps: " << report_.env_steps
         << "\nupdates: " << report_.updates << "\nl_td: " << l_td << "\nl_fv: " << l_fv
         << "\nj_prev: " << report_.j_prev << "\nbuffer: " << buffer_.size() << '\n';
    auto norm = [](const Mlp& m) {
      double s = 0.0;
      for (double w : m.flat_parameters()) s += w * w;
      return std::sqrt(s);
    };
    dump << "actor_param_norm: " << norm(actor_.online) << "\ncritic_param_norm: "
         << norm(critic_.online) << '\n';
    if (!dump_dir_.empty()) {
      std::ofstream out(dump_dir_ / "nan_dump.txt");
      out << dump.str();
      nn::save_checkpoint((dump_dir_ / "nan_actor.ckpt").string(), actor_.online);
      nn::save_checkpoint((dump_dir_ / "nan_critic.ckpt").string(), critic_.online);
    }
    throw TrainingDiverged(dump.str());
  }

  std::unique_ptr<MfEnv> env_;
  UtilitySpec spec_;
  BpgConfig cfg_;
  std::mt19937_64 rng_;
  nn::TargetPair actor_;
  nn::TargetPair critic_;
  ReplayBuffer buffer_;
  nn::Optimizer actor_opt_;
  nn::Optimizer critic_opt_;
  TrainReport report_;
  std::filesystem::path dump_dir_;
};

struct EvalReport {
  std::vector<double> mean_fulfillment; // time average over whole episodes
  std::vector<double> tail_fulfillment; // time average over the last tail_steps of each episode
  double utility = 0.0;                 // spec utility of mean_fulfillment
  std::vector<Vec> episode_fv;          // FV-obs of each episode's first step
};

/// Noise-free rollouts of `actor`. Episode e resets with seed + e.
inline EvalReport evaluate_policy(MfEnv& env, const Mlp& actor, const UtilitySpec& spec,
                                  std::size_t episodes, std::uint64_t seed,
                                  std::size_t tail_steps = 100, double gamma = 0.98) {
  const auto& es = env.spec();
  const std::size_t dims = es.objective_names.size();
  EvalReport out;
  out.mean_fulfillment.assign(dims, 0.0);
  out.tail_fulfillment.assign(dims, 0.0);
  if (episodes == 0) return out;

  for (std::size_t e = 0; e < episodes; ++e) {
    Vec state = env.reset(seed + e);
    std::vector<Vec> rewards;
    bool truncated = false;
    for (;;) {
      const auto a = actor.forward_one(state);
      Vec action(a.data(), a.data() + a.size());
      for (std::size_t d = 0; d < action.size(); ++d)
        action[d] = std::clamp(action[d], es.action_low[d], es.action_high[d]);
      auto sr = env.step(action);
      rewards.push_back(sr.reward);
      state = std::move(sr.next_state);
      if (sr.terminated || sr.truncated) {
        truncated = sr.truncated && !sr.terminated;
        break;
      }
    }
    const std::size_t n = rewards.size();
    const std::size_t tail_begin = n > tail_steps ? n - tail_steps : 0;
    for (std::size_t d = 0; d < dims; ++d) {
      double total = 0.0, tail = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        total += rewards[t][d];
        if (t >= tail_begin) tail += rewards[t][d];
      }
      out.mean_fulfillment[d] += total / static_cast<double>(n);
      out.tail_fulfillment[d] += tail / static_cast<double>(n - tail_begin);
    }
    out.episode_fv.push_back(compute_fv_obs(rewards, gamma, truncated).front());
  }
  for (std::size_t d = 0; d < dims; ++d) {
    out.mean_fulfillment[d] /= static_cast<double>(episodes);
    out.tail_fulfillment[d] /= static_cast<double>(episodes);
  }
  out.utility = spec.evaluate(out.mean_fulfillment);
  return out;
}

/// Mean |FQ(s, a) - FV_obs| over noise-free held-out episodes of the
/// trainer's current actor. Held-out seeds never coincide with training
/// resets, which draw full 64-bit seeds.
inline double fq_error(const Trainer& trainer, std::size_t episodes, std::uint64_t seed) {
  auto env = trainer.env().clone();
  const auto& es = env->spec();
  const Mlp& actor = trainer.actor().online;
  const Mlp& critic = trainer.critic().online;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t e = 0; e < episodes; ++e) {
    Vec state = env->reset(seed + e);
    std::vector<Vec> states, actions, rewards;
    bool truncated = false;
    for (;;) {
      const auto a = actor.forward_one(state);
      Vec action(a.data(), a.data() + a.size());
      for (std::size_t d = 0; d < action.size(); ++d)
        action[d] = std::clamp(action[d], es.action_low[d], es.action_high[d]);
      auto sr = env->step(action);
      states.push_back(state);
      actions.push_back(action);
      rewards.push_back(sr.reward);
      state = std::move(sr.next_state);
      if (sr.terminated || sr.truncated) {
        truncated = sr.truncated && !sr.terminated;
        break;
      }
    }
    const auto fv = compute_fv_obs(rewards, trainer.config().gamma, truncated);
    const auto cols = static_cast<Eigen::Index>(states.size());
    Matrix s(static_cast<Eigen::Index>(es.observation_dim), cols);
    Matrix a(static_cast<Eigen::Index>(es.action_dim), cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto i = static_cast<std::size_t>(c);
      s.col(c) = Eigen::Map<const Eigen::VectorXd>(states[i].data(), s.rows());
      a.col(c) = Eigen::Map<const Eigen::VectorXd>(actions[i].data(), a.rows());
    }
    const Matrix fq = critic.forward(critic_input(s, a)).output();
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < fq.rows(); ++r) {
        total += std::abs(fq(r, c) - fv[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]);
        ++count;
      }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

struct ProbeResult {
  double err_with_fv = 0.0;
  double err_without_fv = 0.0;
};

inline constexpr std::size_t probe_episodes = 5;
inline constexpr std::uint64_t probe_seed = 1'000'000;

/// Trains once with `config_on` and once with `config_off` (which should
/// differ only in alpha_fv) and measures each critic's FQ error on
/// held-out rollouts.
inline ProbeResult q_error_probe(const MfEnv& env, const UtilitySpec& spec,
                                 const BpgConfig& config_on, const BpgConfig& config_off) {
  auto run = [&](const BpgConfig& cfg) {
    Trainer trainer(env.clone(), spec, cfg);
    trainer.train();
    return fq_error(trainer, probe_episodes, probe_seed);
  };
  return {run(config_on), run(config_off)};
}

} // namespace fpl::bpg
