#include <cmath>
#include <random>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "fpl/bpg.hpp"
#include "constant_env.hpp"
#include "support.hpp"

using namespace fpl;
using namespace fpl::bpg;
using Catch::Approx;

namespace {

nn::Mlp constant_critic(std::size_t in, std::vector<double> values) {
  std::mt19937_64 rng(0);
  nn::Mlp net({in, values.size()}, nn::OutputActivation::logistic, rng);
  net.for_each_parameter([](double& w) { w = 0.0; });
  for (std::size_t i = 0; i < values.size(); ++i)
    net.biases(0)(static_cast<Eigen::Index>(i)) = std::log(values[i] / (1.0 - values[i]));
  return net;
}

Batch one_column(Vec s, Vec a, Vec r, bool terminated) {
  ReplayBuffer buf(4);
  Transition t;
  t.state = s;
  t.action = std::move(a);
  t.reward = std::move(r);
  t.next_state = std::move(s);
  t.terminated = terminated;
  t.truncated = !terminated;
  buf.add(t);
  buf.close_episode(0.9);
  return buf.gather({0});
}

} // namespace

TEST_CASE("compute_fv_obs examples") {
  const auto ones = compute_fv_obs(std::vector<Vec>(37, Vec{1.0, 1.0}), 0.98, true);
  for (const auto& v : ones) {
    CHECK(v[0] == 1.0);
    CHECK(v[1] == 1.0);
  }
  for (const auto& v : compute_fv_obs(std::vector<Vec>(10, Vec{0.0}), 0.9, false)) CHECK(v[0] == 0.0);

  const auto fv = compute_fv_obs({{1.0}, {0.0}, {1.0}}, 0.5, false);
  CHECK(fv[0][0] == Approx(0.625).epsilon(1e-15));
  CHECK(fv[1][0] == Approx(0.25).epsilon(1e-15));
  CHECK(fv[2][0] == Approx(0.5).epsilon(1e-15));

  // truncated: the last reward continues forever
  const auto tr = compute_fv_obs({{0.0}, {0.4}}, 0.5, true);
  CHECK(tr[1][0] == Approx(0.4));
  CHECK(tr[0][0] == Approx(0.2));

  CHECK_THROWS_AS(compute_fv_obs({}, 0.9, true), std::invalid_argument);
  CHECK_THROWS_AS(compute_fv_obs({{1.2}}, 0.9, true), std::invalid_argument);
}

TEST_CASE("compute_fv_obs matches the tail-sum formula") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 40;
    const double g = test::random_vector(rng, 1, 0.0, 0.99)[0];
    const bool truncated = trial % 2 == 0;
    std::vector<Vec> r;
    for (std::size_t t = 0; t < n; ++t) r.push_back(test::random_vector(rng, 2, 0.0, 1.0));
    const auto fv = compute_fv_obs(r, g, truncated);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t d = 0; d < 2; ++d) {
        double s = 0.0;
        for (std::size_t k = t; k < n; ++k) s += (1 - g) * std::pow(g, double(k - t)) * r[k][d];
        if (truncated) s += r[n - 1][d] * std::pow(g, double(n - t));
        CHECK(fv[t][d] == Approx(s).margin(1e-12));
        CHECK(fv[t][d] >= 0.0);
        CHECK(fv[t][d] <= 1.0);
      }
  }
}

TEST_CASE("td_targets examples") {
  std::mt19937_64 rng(1);
  nn::Mlp actor({1, 1}, nn::OutputActivation::tanh_scaled, rng, {-1.0}, {1.0});

  auto b = one_column({0.5}, {0.0}, {1.0, 1.0}, false);
  CHECK(td_targets(b, constant_critic(2, {1.0 - 1e-16, 1.0 - 1e-16}), actor, 0.9)
            .isApprox(Matrix::Ones(2, 1), 1e-12));

  auto t = one_column({0.5}, {0.0}, {0.0, 0.0}, true);
  CHECK(td_targets(t, constant_critic(2, {0.8, 0.8}), actor, 0.9).isZero());

  auto m = one_column({0.5}, {0.0}, {0.5, 0.5}, false);
  const auto& y = td_targets(m, constant_critic(2, {0.8, 0.8}), actor, 0.9);
  CHECK(y(0, 0) == Approx(0.77).epsilon(1e-12));
}

TEST_CASE("critic losses") {
  CHECK(rms(Matrix::Constant(3, 4, -0.2)) == Approx(0.2));
  Matrix r(1, 2);
  r << 0.3, -0.4;
  CHECK(rms(r) == Approx(0.35355339).epsilon(1e-8));
  Matrix u(1, 2);
  u << 0.0, 1.0;
  CHECK(rms(u) == Approx(std::sqrt(0.5)));

  auto critic = constant_critic(2, {0.3, 0.6});
  auto b = one_column({0.5}, {0.0}, {0.3, 0.6}, false);
  b.td_target = critic.forward(critic_input(b.states, b.actions)).output();
  b.fv_obs = b.td_target;
  const auto perfect = critic_losses(b, critic, 0.75);
  CHECK(perfect.l_td == 0.0);
  CHECK(perfect.l_fv == 0.0);
  CHECK(perfect.grad.squared_norm() == 0.0);

  // combined gradient = gradient of l_td + alpha l_fv, checked numerically
  std::mt19937_64 rng(3);
  nn::Mlp net({3, 5, 2}, nn::OutputActivation::logistic, rng);
  Batch batch;
  batch.states = Matrix::Random(2, 6);
  batch.actions = Matrix::Random(1, 6);
  batch.td_target = (Matrix::Random(2, 6).array() * 0.5 + 0.5).matrix();
  batch.fv_obs = (Matrix::Random(2, 6).array() * 0.5 + 0.5).matrix();
  const double alpha = 0.75;
  const auto losses = critic_losses(batch, net, alpha);
  auto loss = [&](const nn::Mlp& m) {
    const auto l = critic_losses(batch, m, alpha);
    return l.l_td + alpha * l.l_fv;
  };
  const auto p = net.flat_parameters();
  std::vector<double> analytic;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (Eigen::Index i = 0; i < losses.grad.weights[l].rows(); ++i)
      for (Eigen::Index j = 0; j < losses.grad.weights[l].cols(); ++j)
        analytic.push_back(losses.grad.weights[l](i, j));
    for (Eigen::Index i = 0; i < losses.grad.biases[l].size(); ++i)
      analytic.push_back(losses.grad.biases[l](i));
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto q = p;
    q[k] += 1e-6;
    nn::Mlp up = net;
    up.set_flat_parameters(q);
    q[k] -= 2e-6;
    nn::Mlp down = net;
    down.set_flat_parameters(q);
    CHECK(test::relative_error(analytic[k], (loss(up) - loss(down)) / 2e-6) < 1e-4);
  }
}

TEST_CASE("actor objective examples") {
  std::mt19937_64 rng(5);
  nn::Mlp actor({1, 4, 1}, nn::OutputActivation::tanh_scaled, rng, {-1.0}, {1.0});
  const Matrix states = Matrix::Random(1, 8);

  const auto half = actor_objective(states, actor, constant_critic(2, {0.5}), UtilitySpec(parse("a")));
  CHECK(half.j == Approx(0.5).epsilon(1e-14));

  nn::Mlp critic({2, 4, 2}, nn::OutputActivation::logistic, rng);
  const auto leaf = actor_objective(states, actor, critic, UtilitySpec(parse("b &{-1} (a^1)")));
  const auto single = actor_objective(states, actor, constant_critic(2, {0.3}), UtilitySpec(parse("x")));
  CHECK(single.j == Approx(0.3).epsilon(1e-14));
  CHECK(leaf.j > 0.0);
  CHECK(leaf.j < 1.0);

  nn::Mlp one({2, 4, 1}, nn::OutputActivation::logistic, rng);
  const auto first = actor_objective(states, actor, one, UtilitySpec(parse("a")));
  const Matrix q = one.forward(critic_input(states, actor.forward(states).output())).output();
  CHECK(first.j == Approx(rms(q)).epsilon(1e-14));

  CHECK_THROWS_AS(actor_objective(states, actor, critic, UtilitySpec(parse("a"))), SpecError);
}

TEST_CASE("actor gradient chain matches finite differences") {
  // Frozen miniature: 4 actor parameters, a small critic and a conjunction.
  std::mt19937_64 rng(21);
  nn::Mlp actor({3, 1}, nn::OutputActivation::tanh_scaled, rng, {-2.0}, {2.0});
  REQUIRE(actor.parameter_count() == 4);
  nn::Mlp critic({4, 3, 2}, nn::OutputActivation::logistic, rng);
  const UtilitySpec spec(parse("a^2 &{-1} b"));
  const Matrix states = Matrix::Random(3, 5);

  const auto obj = actor_objective(states, actor, critic, spec);
  std::vector<double> analytic;
  for (Eigen::Index j = 0; j < 3; ++j) analytic.push_back(obj.grad.weights[0](0, j));
  analytic.push_back(obj.grad.biases[0](0));

  const auto p = actor.flat_parameters();
  for (std::size_t k = 0; k < 4; ++k) {
    auto q = p;
    q[k] += 1e-6;
    nn::Mlp up = actor;
    up.set_flat_parameters(q);
    q[k] -= 2e-6;
    nn::Mlp down = actor;
    down.set_flat_parameters(q);
    const double fd = (actor_objective(states, up, critic, spec).j -
                       actor_objective(states, down, critic, spec).j) / 2e-6;
    CHECK(test::relative_error(analytic[k], fd) < 1e-3);
  }
}

TEST_CASE("replay buffer only serves finalized transitions") {
  ReplayBuffer buf(3);
  std::mt19937_64 rng(0);
  Transition t;
  t.state = {0.0};
  t.action = {0.0};
  t.reward = {1.0};
  t.next_state = {0.0};
  buf.add(t);
  buf.add(t);
  CHECK(buf.pending() == 2);
  CHECK(buf.size() == 0);
  CHECK_THROWS_AS(buf.sample(4, rng), std::logic_error);
  buf.close_episode(0.9);
  CHECK(buf.size() == 2);
  CHECK(buf.pending() == 0);
  CHECK(buf.at(0).fv_obs[0] == Approx(0.19).epsilon(1e-14));

  t.reward = {0.5};
  t.truncated = true;
  buf.add(t);
  buf.add(t);
  CHECK(buf.sample(16, rng).size() == 16);
  buf.close_episode(0.9);
  CHECK(buf.size() == 3); // ring: the oldest entry was overwritten
  CHECK(buf.at(0).fv_obs == Vec{0.5});
  const auto b = buf.sample(64, rng);
  CHECK(b.fv_obs.rows() == 1);
}

TEST_CASE("training with no step budget") {
  BpgConfig cfg;
  cfg.total_env_steps = 0;
  auto env = make_env("toy");
  Trainer trainer(env->clone(), env->utility_spec(), cfg);
  std::ostringstream csv;
  const auto& report = trainer.train(&csv);
  CHECK(report.episodes == 0);
  CHECK(report.updates == 0);
  CHECK(csv.str() == "episode,env_steps,mean_f0,mean_f1,mean_utility,l_td,l_fv,fq_fv_gap\n");
}

TEST_CASE("training is deterministic") {
  BpgConfig cfg;
  cfg.total_env_steps = 5000;
  cfg.seed = 3;
  auto env = make_env("toy");
  auto run = [&] {
    Trainer trainer(env->clone(), env->utility_spec(), cfg);
    std::ostringstream csv;
    trainer.train(&csv);
    CHECK(trainer.report().td_target_violations == 0);
    CHECK(trainer.report().episodes == 100);
    return csv.str();
  };
  const auto a = run();
  CHECK(a == run());
}

TEST_CASE("one-state MDP: the critic converges to the constant reward") {
  const Vec c{0.3, 0.7};
  BpgConfig cfg;
  cfg.total_env_steps = 10000;
  cfg.hidden_units = 16;
  cfg.critic_lr = 3e-4;
  cfg.tau = 0.05;
  cfg.gamma = 0.9;
  test::ConstantEnv env(c);
  Trainer trainer(env.clone(), env.utility_spec(), cfg);
  trainer.train();
  const Matrix s = Matrix::Constant(1, 1, 0.5);
  const Matrix in = critic_input(s, trainer.actor().online.forward(s).output());
  const Matrix fq = trainer.critic().online.forward(in).output();
  CHECK(std::abs(fq(0, 0) - c[0]) < 1e-3);
  CHECK(std::abs(fq(1, 0) - c[1]) < 1e-3);
  CHECK(trainer.report().td_target_violations == 0);
}

TEST_CASE("evaluate_policy") {
  auto env = make_env("pendulum");
  auto spec = env->utility_spec();
  std::mt19937_64 rng(2);
  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    auto actor = Trainer::make_actor(env->spec(), BpgConfig{}, rng);
    const auto r = evaluate_policy(*env, actor, spec, 3, 100 + i);
    total += r.mean_fulfillment[0] / 10.0;
    CHECK(r.episode_fv.size() == 3);
    CHECK(r.utility == Approx(spec.evaluate(r.mean_fulfillment)));
  }
  CHECK(std::abs(total - 0.5) < 0.25);

  auto actor = Trainer::make_actor(env->spec(), BpgConfig{}, rng);
  const auto a = evaluate_policy(*env, actor, spec, 2, 9);
  const auto b = evaluate_policy(*env, actor, spec, 2, 9);
  CHECK(a.mean_fulfillment == b.mean_fulfillment);
  CHECK(a.tail_fulfillment == b.tail_fulfillment);
}

TEST_CASE("config validation") {
  auto env = make_env("toy");
  BpgConfig cfg;
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(Trainer(env->clone(), env->utility_spec(), cfg), std::invalid_argument);
  CHECK_THROWS_AS(Trainer(env->clone(), UtilitySpec(parse("f1 &{-1} f0")), BpgConfig{}), SpecError);
}
