#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "fpl/env.hpp"

namespace fpl::bpg {

struct Transition {
  Vec state;
  Vec action;
  Vec reward;
  Vec next_state;
  bool terminated = false;
  bool truncated = false;
  std::uint64_t episode_id = 0;
  std::size_t step_index = 0;
  Vec fv_obs; // empty until the episode closes
};

/// Observed fulfillment values: the normalized discounted tail return of
/// each step,
///   FV_t = (1 - g) sum_{k=t}^{n-1} g^(k-t) r_k + [truncated] r_{n-1} g^(n-t),
/// where a truncated episode continues with its last reward forever.
inline std::vector<Vec> compute_fv_obs(const std::vector<Vec>& rewards, double gamma,
                                       bool truncated) {
  if (rewards.empty()) throw std::invalid_argument("compute_fv_obs: empty episode");
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("compute_fv_obs: gamma must lie in [0,1)");
  const std::size_t dims = rewards.front().size();
  for (const auto& r : rewards) {
    if (r.size() != dims) throw std::invalid_argument("compute_fv_obs: ragged reward vectors");
    for (double x : r)
      if (!(x >= 0.0 && x <= 1.0))
        throw std::invalid_argument("compute_fv_obs: reward outside [0,1]");
  }

  std::vector<Vec> fv(rewards.size(), Vec(dims));
  Vec tail = truncated ? rewards.back() : Vec(dims, 0.0);
  for (std::size_t t = rewards.size(); t-- > 0;) {
    for (std::size_t d = 0; d < dims; ++d) {
      // tail + (1 - g)(r - tail) keeps a constant sequence exactly fixed
      tail[d] = std::clamp(tail[d] + (1.0 - gamma) * (rewards[t][d] - tail[d]), 0.0, 1.0);
    }
    fv[t] = tail;
  }
  return fv;
}

/// A sampled minibatch, one column per transition.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::MatrixXd rewards;
  Eigen::MatrixXd next_states;
  Eigen::MatrixXd fv_obs;
  Eigen::VectorXd terminated; // 1.0 where the bootstrap term is dropped
  Eigen::MatrixXd td_target;  // filled by td_targets()

  Eigen::Index size() const { return states.cols(); }
};

/// Episode-aware ring buffer. Transitions are staged until their episode
/// closes; only then do they receive FV-obs and become sampleable.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void add(Transition t) { pending_.push_back(std::move(t)); }

  /// Finalizes the staged episode. The bootstrap term applies when the
  /// last staged transition is truncated rather than terminated.
  void close_episode(double gamma) {
    if (pending_.empty()) return;
    std::vector<Vec> rewards;
    rewards.reserve(pending_.size());
    for (const auto& t : pending_) rewards.push_back(t.reward);
    const bool truncated = pending_.back().truncated && !pending_.back().terminated;
    auto fv = compute_fv_obs(rewards, gamma, truncated);
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      pending_[i].fv_obs = std::move(fv[i]);
      if (ready_.size() < capacity_) {
        ready_.push_back(std::move(pending_[i]));
      } else {
        ready_[next_] = std::move(pending_[i]);
      }
      next_ = (next_ + 1) % capacity_;
    }
    pending_.clear();
  }

  std::size_t size() const { return ready_.size(); }
  std::size_t pending() const { return pending_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return ready_.at(i); }

  /// Uniform sampling with replacement from finalized transitions.
  Batch sample(std::size_t n, std::mt19937_64& rng) const {
    if (ready_.empty()) throw std::logic_error("ReplayBuffer::sample: no finalized transitions");
    std::uniform_int_distribution<std::size_t> pick(0, ready_.size() - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    return gather(idx);
  }

  Batch gather(const std::vector<std::size_t>& idx) const {
    const auto& first = ready_.at(idx.front());
    const auto cols = static_cast<Eigen::Index>(idx.size());
    Batch b;
    b.states.resize(static_cast<Eigen::Index>(first.state.size()), cols);
    b.actions.resize(static_cast<Eigen::Index>(first.action.size()), cols);
    b.rewards.resize(static_cast<Eigen::Index>(first.reward.size()), cols);
    b.next_states.resize(static_cast<Eigen::Index>(first.next_state.size()), cols);
    b.fv_obs.resize(static_cast<Eigen::Index>(first.fv_obs.size()), cols);
    b.terminated.resize(cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& t = ready_.at(idx[static_cast<std::size_t>(c)]);
      b.states.col(c) = Eigen::Map<const Eigen::VectorXd>(t.state.data(), b.states.rows());
      b.actions.col(c) = Eigen::Map<const Eigen::VectorXd>(t.action.data(), b.actions.rows());
      b.rewards.col(c) = Eigen::Map<const Eigen::VectorXd>(t.reward.data(), b.rewards.rows());
      b.next_states.col(c) =
          Eigen::Map<const Eigen::VectorXd>(t.next_state.data(), b.next_states.rows());
      b.fv_obs.col(c) = Eigen::Map<const Eigen::VectorXd>(t.fv_obs.data(), b.fv_obs.rows());
      b.terminated(c) = t.terminated ? 1.0 : 0.0;
    }
    return b;
  }

private:
  std::size_t capacity_;
  std::vector<Transition> ready_;
  std::vector<Transition> pending_;
  std::size_t next_ = 0;
};

} // namespace fpl::bpg
