#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "fpl/env.hpp"

using namespace fpl;
using Catch::Approx;

TEST_CASE("pendulum rewards at known states") {
  PendulumEnv env;
  env.reset(0);
  env.set_state(0.0, 0.0);
  auto r = env.step(std::vector<double>{0.0});
  CHECK(r.reward[0] == 1.0);
  CHECK(r.reward[1] == 1.0);
  CHECK_FALSE(r.terminated);

  env.set_state(std::numbers::pi, 0.0);
  r = env.step(std::vector<double>{2.0});
  CHECK(r.reward[0] == Approx(0.0).margin(1e-15));
  CHECK(r.reward[1] == 0.0);

  env.set_state(0.0, 0.0);
  r = env.step(std::vector<double>{-5.0}); // clipped
  CHECK(r.reward[1] == 0.0);
  CHECK(env.theta_dot() == Approx(-0.3));
  CHECK(env.theta() == Approx(-0.015));
}

TEST_CASE("pendulum dynamics follow semi-implicit Euler") {
  PendulumEnv env;
  env.reset(0);
  env.set_state(0.5, 1.0);
  env.step(std::vector<double>{1.0});
  const double w = 1.0 + (15.0 * std::sin(0.5) + 3.0) * 0.05;
  CHECK(env.theta_dot() == Approx(w).epsilon(1e-14));
  CHECK(env.theta() == Approx(0.5 + w * 0.05).epsilon(1e-14));

  env.set_state(0.0, 7.99);
  env.step(std::vector<double>{2.0});
  CHECK(env.theta_dot() == 8.0);
}

TEST_CASE("pendulum reset and truncation") {
  PendulumEnv env;
  const auto a = env.reset(42);
  const auto b = env.reset(42);
  CHECK(a == b);
  CHECK(std::hypot(a[0], a[1]) == Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(a[2]) <= 1.0);

  double mean = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    env.reset(s);
    mean += env.theta() / 100.0;
  }
  CHECK(std::abs(mean) < 0.3);

  env.reset(1);
  for (int t = 1; t <= 200; ++t) {
    const auto r = env.step(std::vector<double>{0.0});
    CHECK(r.truncated == (t == 200));
    CHECK_FALSE(r.terminated);
  }
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("pendulum rewards stay in the unit square") {
  PendulumEnv env;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> theta(-4.0, 4.0), speed(-8.0, 8.0), torque(-3.0, 3.0);
  env.reset(0);
  for (int i = 0; i < 100000; ++i) {
    env.set_state(theta(rng), speed(rng));
    const auto r = env.step(std::vector<double>{torque(rng)});
    REQUIRE(r.reward[0] >= 0.0);
    REQUIRE(r.reward[0] <= 1.0);
    REQUIRE(r.reward[1] >= 0.0);
    REQUIRE(r.reward[1] <= 1.0);
    REQUIRE(std::abs(env.theta()) <= std::numbers::pi);
    REQUIRE(std::abs(env.theta_dot()) <= 8.0);
  }
}

TEST_CASE("unforced pendulum does not gain energy") {
  // Semi-implicit Euler conserves the shadow energy E + (dt/2) w (m g l/2) sin(theta)
  // rather than E itself; E oscillates around it by O(dt) within a swing.
  PendulumEnv env;
  const double dt = env.params().dt;
  auto shadow = [&] {
    return env.energy() + 0.5 * dt * env.theta_dot() * 5.0 * std::sin(env.theta());
  };
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> theta(-3.1, 3.1), speed(-2.0, 2.0);
  for (int ep = 0; ep < 50; ++ep) {
    env.reset(0);
    env.set_state(theta(rng), speed(rng));
    const double e0 = env.energy();
    const double s0 = shadow();
    double prev = s0;
    for (int t = 1; t < 200; ++t) {
      env.step(std::vector<double>{0.0});
      CHECK(shadow() <= prev + 2e-2);
      CHECK(shadow() - s0 <= 1e-2 * t);
      CHECK(env.energy() - e0 <= 1e-2 * t + 1.0);
      prev = shadow();
    }
    CHECK(std::abs(shadow() - s0) < 0.1);
  }
}

TEST_CASE("wrap_angle") {
  CHECK(PendulumEnv::wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(PendulumEnv::wrap_angle(-std::numbers::pi) == std::numbers::pi);
  CHECK(PendulumEnv::wrap_angle(3.0 * std::numbers::pi / 2.0) ==
        Approx(-std::numbers::pi / 2.0));
  CHECK(PendulumEnv::wrap_angle(0.25) == 0.25);
}

TEST_CASE("make_env") {
  auto p = make_env("pendulum");
  CHECK(p->spec().objective_names == std::vector<std::string>{"f_angle", "f_actuation"});
  CHECK(p->spec().bundled_fpl == "f_angle^2 &{-1} f_actuation");
  CHECK(p->utility_spec().objective_order() == p->spec().objective_names);

  auto t = make_env("toy");
  CHECK(t->spec().action_dim == 2);
  CHECK(t->spec().objective_names == std::vector<std::string>{"f0", "f1"});
  CHECK(free_variables(parse(t->spec().bundled_fpl)) == t->spec().objective_names);

  CHECK_THROWS_AS(make_env("unknown"), std::invalid_argument);
  CHECK_THROWS_AS(make_env("pendulum", KeyValues::parse("gravity = 9.8", "cfg")), ConfigError);
  CHECK(make_env("pendulum", KeyValues::parse("horizon = 10", "cfg"))->spec().max_episode_steps ==
        10);
}

TEST_CASE("toy environment") {
  ToyEnv env;
  const auto s = env.reset(3);
  CHECK(s == env.reset(3));
  CHECK(s[0] >= 0.3);
  CHECK(s[0] <= 0.7);
  const auto r = env.step(std::vector<double>{1.0, -1.0});
  CHECK(env.state().b0 == Approx(s[0] + 0.1));
  CHECK(env.state().b1 == Approx(s[1] - 0.1));
  const auto f = toy::toy_fulfillments(env.state());
  CHECK(r.reward[0] == f.f0);
  CHECK(r.reward[1] == f.f1);
  for (int t = 2; t <= 50; ++t) CHECK(env.step(std::vector<double>{5.0, 5.0}).truncated == (t == 50));
  CHECK(env.state().b0 == 1.0);
}

TEST_CASE("environment bundles") {
  const auto dir = std::filesystem::temp_directory_path() / "fpl_bundle_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "env.cfg") << "# slower pendulum\nname = pendulum\nhorizon = 100\ng = 9.8\n";
    std::ofstream(dir / "spec.fpl") << "f_angle &{0} f_actuation\n";
  }
  auto env = resolve_env(dir.string());
  CHECK(env->spec().max_episode_steps == 100);
  CHECK(env->utility_spec().evaluate(std::vector<double>{0.25, 1.0}) == Approx(0.5));

  std::ofstream(dir / "spec.fpl") << "f_angle &{0} speed\n";
  CHECK_THROWS_AS(load_env_bundle(dir), SpecError);
  std::ofstream(dir / "env.cfg") << "horizon = 100\n";
  CHECK_THROWS_AS(load_env_bundle(dir), ConfigError);
  std::filesystem::remove_all(dir);
}
