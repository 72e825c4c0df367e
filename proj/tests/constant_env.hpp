#pragma once

#include <memory>
#include <span>
#include <string>

#include "fpl/env.hpp"

namespace test {

/// A single state that never changes and a constant reward vector.
class ConstantEnv final : public fpl::MfEnv {
public:
  explicit ConstantEnv(fpl::Vec reward, std::size_t horizon = 50) : reward_(std::move(reward)) {
    spec_.name = "constant";
    spec_.observation_dim = 1;
    spec_.action_dim = 1;
    spec_.action_low = {-1.0};
    spec_.action_high = {1.0};
    spec_.objective_names = {"a", "b"};
    spec_.max_episode_steps = horizon;
    spec_.bundled_fpl = "a &{-1} b";
  }
  const fpl::EnvSpec& spec() const override { return spec_; }
  fpl::Vec reset(std::uint64_t) override {
    steps_ = 0;
    return {0.5};
  }
  fpl::StepResult step(std::span<const double> action) override {
    check_action(action);
    ++steps_;
    return {{0.5}, reward_, false, steps_ >= spec_.max_episode_steps};
  }
  std::unique_ptr<fpl::MfEnv> clone() const override { return std::make_unique<ConstantEnv>(*this); }

private:
  fpl::Vec reward_;
  fpl::EnvSpec spec_;
  std::size_t steps_ = 0;
};

} // namespace test
