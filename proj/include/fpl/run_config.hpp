#pragma once

// Training run configuration files: flat `key = value` text naming an
// environment (built-in name or bundle directory), an optional FPL spec
// file and any BpgConfig overrides. Relative paths resolve against the
// config file's directory.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>

#include "fpl/bpg.hpp"
#include "fpl/config.hpp"
#include "fpl/env.hpp"

namespace fpl {

struct RunConfig {
  std::string env_ref = "pendulum";
  std::string spec_path; // empty: the environment's bundled spec
  Mode mode = Mode::strict;
  bpg::BpgConfig bpg;
  std::size_t eval_episodes = 5;

  std::unique_ptr<MfEnv> make_env() const { return resolve_env(env_ref); }

  UtilitySpec make_spec(const MfEnv& env) const {
    if (spec_path.empty()) return env.utility_spec(mode);
    return MfEnv::make_spec_for(env.spec(), read_file(spec_path), mode);
  }
};

inline bpg::NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "performance") return bpg::NoiseMode::performance;
  if (s == "inverse") return bpg::NoiseMode::inverse;
  throw ConfigError("noise_mode must be 'performance' or 'inverse', got '" + s + "'");
}

inline nn::OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return nn::OptimizerKind::adam;
  if (s == "sgd") return nn::OptimizerKind::sgd;
  throw ConfigError("optimizer must be 'adam' or 'sgd', got '" + s + "'");
}

inline Mode parse_mode(const std::string& s) {
  if (s == "strict") return Mode::strict;
  if (s == "relaxed") return Mode::relaxed;
  throw ConfigError("mode must be 'strict' or 'relaxed', got '" + s + "'");
}

inline RunConfig parse_run_config(const KeyValues& kv, const std::filesystem::path& base_dir) {
  RunConfig rc;
  auto& c = rc.bpg;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path.string() : (base_dir / path).string();
  };

  rc.env_ref = kv.get_string("env", rc.env_ref);
  // a bundle directory is given as a path; bare names stay names
  if (rc.env_ref.find('/') != std::string::npos || std::filesystem::is_directory(base_dir / rc.env_ref))
    rc.env_ref = resolve(rc.env_ref);
  if (kv.contains("spec_file")) rc.spec_path = resolve(kv.get_string("spec_file", ""));
  rc.mode = parse_mode(kv.get_string("mode", "strict"));
  rc.eval_episodes = kv.get_uint("eval_episodes", rc.eval_episodes);

  c.gamma = kv.get_double("gamma", c.gamma);
  c.alpha_fv = kv.get_double("alpha_fv", c.alpha_fv);
  c.sigma = kv.get_double("sigma", c.sigma);
  c.j_floor = kv.get_double("j_floor", c.j_floor);
  c.noise_mode = parse_noise_mode(kv.get_string("noise_mode", "performance"));
  c.batch_size = kv.get_uint("batch_size", c.batch_size);
  c.buffer_capacity = kv.get_uint("buffer_capacity", c.buffer_capacity);
  c.actor_lr = kv.get_double("actor_lr", c.actor_lr);
  c.critic_lr = kv.get_double("critic_lr", c.critic_lr);
  c.tau = kv.get_double("tau", c.tau);
  c.train_iters_per_episode = kv.get_uint("train_iters_per_episode", c.train_iters_per_episode);
  c.total_env_steps = kv.get_uint("total_env_steps", c.total_env_steps);
  c.seed = kv.get_uint("seed", c.seed);
  c.hidden_units = kv.get_uint("hidden_units", c.hidden_units);
  c.hidden_layers = kv.get_uint("hidden_layers", c.hidden_layers);
  c.optimizer = parse_optimizer(kv.get_string("optimizer", "adam"));
  c.grad_clip = kv.get_double("grad_clip", c.grad_clip);
  kv.reject_unknown();
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  const auto kv = KeyValues::load(path);
  return parse_run_config(kv, std::filesystem::path(path).parent_path());
}

/// Canonical text of every setting that influences a run.
inline std::string canonical_text(const RunConfig& rc, const std::string& spec_text) {
  const auto& c = rc.bpg;
  std::ostringstream os;
  os << std::setprecision(17) << "env=" << rc.env_ref << "\nspec=" << spec_text
     << "\nmode=" << (rc.mode == Mode::strict ? "strict" : "relaxed") << "\ngamma=" << c.gamma
     << "\nalpha_fv=" << c.alpha_fv << "\nsigma=" << c.sigma << "\nj_floor=" << c.j_floor
     << "\nnoise_mode=" << (c.noise_mode == bpg::NoiseMode::performance ? "performance" : "inverse")
     << "\nbatch_size=" << c.batch_size << "\nbuffer_capacity=" << c.buffer_capacity
     << "\nactor_lr=" << c.actor_lr << "\ncritic_lr=" << c.critic_lr << "\ntau=" << c.tau
     << "\ntrain_iters_per_episode=" << c.train_iters_per_episode
     << "\ntotal_env_steps=" << c.total_env_steps << "\nseed=" << c.seed
     << "\nhidden_units=" << c.hidden_units << "\nhidden_layers=" << c.hidden_layers
     << "\noptimizer=" << (c.optimizer == nn::OptimizerKind::adam ? "adam" : "sgd")
     << "\ngrad_clip=" << c.grad_clip << '\n';
  return os.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

} // namespace fpl
