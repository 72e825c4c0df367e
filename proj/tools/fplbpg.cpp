#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fpl/bpg.hpp"
#include "fpl/checkpoint.hpp"
#include "fpl/parser.hpp"
#include "fpl/run_config.hpp"
#include "fpl/semantics.hpp"
#include "fpl/toy.hpp"

namespace fs = std::filesystem;
using namespace fpl;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_domain = 1;
constexpr int exit_usage = 2;

struct Options {
  std::string spec_file;
  std::string config_file;
  std::string checkpoint;
  std::string env = "pendulum";
  std::string out;
  std::string bindings_file;
  std::vector<std::string> bindings;
  bool strict = false;
  bool relaxed = false;
  double target = 0.9;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::size_t episodes = 5;
  std::size_t jobs = 0;
  double b0 = toy::ToyState{}.b0;
  double b1 = toy::ToyState{}.b1;
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

Mode mode_of(const Options& o) { return o.relaxed ? Mode::relaxed : Mode::strict; }

std::vector<std::uint64_t> seed_list(const Options& o, std::uint64_t fallback) {
  if (o.seeds.empty()) return {o.seed.value_or(fallback)};
  const auto dots = o.seeds.find("..");
  if (dots == std::string::npos) throw UsageError("--seeds expects <a>..<b>");
  try {
    std::size_t used = 0;
    const auto lo = std::stoull(o.seeds.substr(0, dots), &used);
    if (used != dots) throw UsageError("--seeds expects <a>..<b>");
    const auto rest = o.seeds.substr(dots + 2);
    const auto hi = std::stoull(rest, &used);
    if (used != rest.size() || hi < lo) throw UsageError("--seeds expects <a>..<b> with a <= b");
    std::vector<std::uint64_t> out;
    for (auto s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  } catch (const std::logic_error&) {
    throw UsageError("--seeds expects <a>..<b>");
  }
}

UtilitySpec load_spec(const Options& o) {
  return make_spec(read_file(o.spec_file), mode_of(o));
}

std::map<std::string, double> load_bindings(const Options& o) {
  std::map<std::string, double> out;
  if (!o.bindings_file.empty()) {
    const auto kv = KeyValues::load(o.bindings_file);
    for (const auto& [k, v] : kv.entries()) out[k] = kv.get_double(k, 0.0);
  }
  for (const auto& b : o.bindings) {
    const auto eq = b.find('=');
    if (eq == std::string::npos) throw UsageError("binding '" + b + "' is not name=value");
    const auto kv = KeyValues::parse(b, "binding");
    const std::string name(trim(b.substr(0, eq)));
    out[name] = kv.get_double(name, 0.0);
  }
  return out;
}

int cmd_check(const Options& o) {
  const auto text = read_file(o.spec_file);
  std::vector<Diagnostic> diags;
  try {
    const auto file = parse_spec_file(text);
    diags = validate(file.formula, mode_of(o));
    if (!has_errors(diags)) UtilitySpec(file.formula, file.objectives, mode_of(o));
  } catch (const ParseError& e) {
    diags.push_back({Severity::error, e.pos(), e.message()});
  } catch (const SpecError& e) {
    diags.push_back({Severity::error, {1, 1}, e.what()});
  }
  for (const auto& d : diags) std::cout << format_diagnostic(o.spec_file, d) << '\n';
  if (has_errors(diags)) return exit_domain;
  std::cout << o.spec_file << ": ok\n";
  return exit_ok;
}

int cmd_eval(const Options& o) {
  const auto spec = load_spec(o);
  std::cout << spec.evaluate(load_bindings(o)) << '\n';
  return exit_ok;
}

int cmd_grad(const Options& o) {
  const auto spec = load_spec(o);
  const auto g = spec.gradient(load_bindings(o));
  for (const auto& name : spec.objective_order()) std::cout << name << ' ' << g.at(name) << '\n';
  return exit_ok;
}

int cmd_bound(const Options& o) {
  const auto spec = load_spec(o);
  for (const auto& e : bound_report(spec, o.target)) {
    if (e.guaranteed)
      std::cout << e.name << " >= " << e.bound << '\n';
    else
      std::cout << e.name << ": no lower-bound guarantee\n";
  }
  return exit_ok;
}

int cmd_toy(const Options& o) {
  const auto spec = load_spec(o);
  toy::ToyState init{o.b0, o.b1, o.alpha.value_or(toy::ToyState{}.alpha)};
  if (!(init.alpha >= 0.0 && init.alpha <= 1.0) || !(init.b0 >= 0.0 && init.b0 <= 1.0) ||
      !(init.b1 >= 0.0 && init.b1 <= 1.0))
    throw std::invalid_argument("toy: alpha, b0 and b1 must lie in [0,1]");
  toy::ToyConfig cfg;
  if (o.lr) cfg.lr = *o.lr;
  if (o.steps) cfg.steps = *o.steps;
  const auto trace = toy::toy_run(spec, init, cfg);

  if (o.out.empty() || o.out == "-") {
    toy::write_trace_csv(std::cout, trace);
    return exit_ok;
  }
  std::ofstream csv(o.out);
  if (!csv) throw ConfigError("cannot write '" + o.out + "'");
  toy::write_trace_csv(csv, trace);
  const auto& last = trace.back();
  std::cout << "f0 " << last.f0 << "\nf1 " << last.f1 << "\nutility " << last.utility
            << "\nregime " << toy::to_string(toy::classify(trace)) << "\ncrossing "
            << toy::priority_crossing(trace) << '\n';
  return exit_ok;
}

struct SeedResult {
  std::uint64_t seed = 0;
  std::size_t episodes = 0;
  std::vector<double> tail;
  double utility = 0.0;
  std::string error;
};

SeedResult train_one(const RunConfig& base, std::uint64_t seed, const fs::path& dir) {
  SeedResult res;
  res.seed = seed;
  RunConfig rc = base;
  rc.bpg.seed = seed;
  auto env = rc.make_env();
  const auto spec = rc.make_spec(*env);
  fs::create_directories(dir);

  bpg::Trainer trainer(env->clone(), spec, rc.bpg);
  trainer.set_dump_dir(dir);
  std::ofstream curve(dir / "curve.csv");
  if (!curve) throw ConfigError("cannot write '" + (dir / "curve.csv").string() + "'");
  const auto& report = trainer.train(&curve);
  nn::save_checkpoint((dir / "actor.ckpt").string(), trainer.actor().online);
  nn::save_checkpoint((dir / "critic.ckpt").string(), trainer.critic().online);

  const auto eval = bpg::evaluate_policy(*env, trainer.actor().online, spec, rc.eval_episodes,
                                         bpg::probe_seed, 100, rc.bpg.gamma);
  const std::string canon = canonical_text(rc, format(spec.formula()));
  std::ofstream manifest(dir / "manifest.txt");
  manifest << std::setprecision(12) << "config_hash = " << std::hex << std::setw(16)
           << std::setfill('0') << fnv1a(canon) << std::dec << std::setfill(' ')
           << "\nenv = " << env->spec().name << "\nspec = " << format(spec.formula())
           << "\nseed = " << seed << "\nenv_steps = " << report.env_steps
           << "\nepisodes = " << report.episodes << "\nupdates = " << report.updates << '\n';
  for (std::size_t d = 0; d < eval.tail_fulfillment.size(); ++d)
    manifest << "eval_tail_" << env->spec().objective_names[d] << " = " << eval.tail_fulfillment[d]
             << '\n';
  manifest << "eval_utility = " << eval.utility << '\n';

  res.episodes = report.episodes;
  res.tail = eval.tail_fulfillment;
  res.utility = eval.utility;
  return res;
}

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& work) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) work(i);
    });
  for (auto& t : pool) t.join();
}

RunConfig load_config_with_overrides(const Options& o) {
  auto rc = load_run_config(o.config_file);
  if (o.steps) rc.bpg.total_env_steps = *o.steps;
  if (o.alpha) rc.bpg.alpha_fv = *o.alpha;
  if (o.relaxed) rc.mode = Mode::relaxed;
  if (o.strict) rc.mode = Mode::strict;
  // fail on a bad env or spec before any training starts
  auto env = rc.make_env();
  rc.make_spec(*env);
  return rc;
}

int cmd_train(const Options& o) {
  const auto rc = load_config_with_overrides(o);
  const auto seeds = seed_list(o, rc.bpg.seed);
  const fs::path out = o.out.empty() ? fs::path("run") : fs::path(o.out);

  std::vector<SeedResult> results(seeds.size());
  parallel_for(seeds.size(), o.jobs, [&](std::size_t i) {
    const fs::path dir = seeds.size() == 1 ? out : out / ("seed_" + std::to_string(seeds[i]));
    try {
      results[i] = train_one(rc, seeds[i], dir);
    } catch (const std::exception& e) {
      results[i].seed = seeds[i];
      results[i].error = e.what();
    }
  });

  int code = exit_ok;
  for (const auto& r : results) {
    if (!r.error.empty()) {
      std::cerr << "seed " << r.seed << ": " << r.error << '\n';
      code = exit_domain;
      continue;
    }
    std::cout << "seed " << r.seed << " episodes " << r.episodes;
    for (double t : r.tail) std::cout << ' ' << t;
    std::cout << " utility " << r.utility << '\n';
  }
  return code;
}

int cmd_rollout(const Options& o) {
  const auto actor = nn::load_checkpoint(o.checkpoint);
  auto env = resolve_env(o.env);
  const auto spec = o.spec_file.empty()
                        ? env->utility_spec(mode_of(o))
                        : MfEnv::make_spec_for(env->spec(), read_file(o.spec_file), mode_of(o));
  if (actor.input_dim() != env->spec().observation_dim ||
      actor.output_dim() != env->spec().action_dim)
    throw std::invalid_argument("checkpoint does not fit environment '" + env->spec().name + "'");
  const auto r = bpg::evaluate_policy(*env, actor, spec, o.episodes, o.seed.value_or(0));
  const auto& names = env->spec().objective_names;
  for (std::size_t d = 0; d < names.size(); ++d)
    std::cout << "mean_" << names[d] << ' ' << r.mean_fulfillment[d] << "\ntail_" << names[d] << ' '
              << r.tail_fulfillment[d] << '\n';
  std::cout << "utility " << r.utility << '\n';
  return exit_ok;
}

int cmd_qprobe(const Options& o) {
  const auto rc = load_config_with_overrides(o);
  const auto seeds = seed_list(o, rc.bpg.seed);
  struct Row {
    std::uint64_t seed;
    bpg::ProbeResult r;
  };
  std::vector<Row> rows(seeds.size());
  std::mutex failure_lock;
  std::string failure;
  parallel_for(seeds.size(), o.jobs, [&](std::size_t i) {
    try {
      auto on = rc.bpg;
      on.seed = seeds[i];
      auto off = on;
      off.alpha_fv = 0.0;
      auto env = rc.make_env();
      rows[i] = {seeds[i], bpg::q_error_probe(*env, rc.make_spec(*env), on, off)};
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_lock);
      failure = e.what();
    }
  });
  if (!failure.empty()) throw std::runtime_error(failure);

  std::ofstream file;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw ConfigError("cannot write '" + o.out + "'");
  }
  std::ostream& csv = o.out.empty() ? std::cout : file;
  csv << std::setprecision(12) << "seed,alpha_fv,err_with_fv,err_without_fv,ratio\n";
  for (const auto& row : rows)
    csv << row.seed << ',' << rc.bpg.alpha_fv << ',' << row.r.err_with_fv << ','
        << row.r.err_without_fv << ',' << row.r.err_with_fv / row.r.err_without_fv << '\n';
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fulfillment priority logic and balanced policy gradient"};
  app.require_subcommand(1);
  Options o;

  auto add_mode = [&](CLI::App* c) {
    auto* s = c->add_flag("--strict", o.strict, "Reject p > 0 (default)");
    c->add_flag("--relaxed", o.relaxed, "Allow p > 0 with a warning")->excludes(s);
  };
  auto add_spec = [&](CLI::App* c) {
    c->add_option("spec", o.spec_file, "FPL spec file")->required()->check(CLI::ExistingFile);
    add_mode(c);
  };
  auto add_bindings = [&](CLI::App* c) {
    c->add_option("assignments", o.bindings, "name=value pairs");
    c->add_option("--bindings", o.bindings_file, "File with one name = value per line")
        ->check(CLI::ExistingFile);
  };
  auto add_config = [&](CLI::App* c) {
    c->add_option("config", o.config_file, "Run config file")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", o.seed, "Seed");
    c->add_option("--seeds", o.seeds, "Seed range <a>..<b>");
    c->add_option("--steps", o.steps, "Override total_env_steps");
    c->add_option("--alpha", o.alpha, "Override alpha_fv");
    c->add_option("--out", o.out, "Output path");
    c->add_option("--jobs", o.jobs, "Parallel worker slots (default: one per core)");
    add_mode(c);
  };

  auto* check = app.add_subcommand("check", "Validate a spec file");
  add_spec(check);
  auto* eval = app.add_subcommand("eval", "Evaluate a spec's utility");
  add_spec(eval);
  add_bindings(eval);
  auto* grad = app.add_subcommand("grad", "Utility gradient per objective");
  add_spec(grad);
  add_bindings(grad);
  auto* bound = app.add_subcommand("bound", "Minimum fulfillments implied by a target utility");
  add_spec(bound);
  bound->add_option("--target", o.target, "Target utility in [0,1]");
  auto* toyc = app.add_subcommand("toy", "Gradient ascent on the two-objective toy system");
  add_spec(toyc);
  toyc->add_option("--alpha", o.alpha, "Competition strength");
  toyc->add_option("--lr", o.lr, "Step size");
  toyc->add_option("--steps", o.steps, "Number of steps");
  toyc->add_option("--b0", o.b0, "Initial b0");
  toyc->add_option("--b1", o.b1, "Initial b1");
  toyc->add_option("--out", o.out, "Trace CSV (stdout when omitted)");
  auto* train = app.add_subcommand("train", "Train with balanced policy gradient");
  add_config(train);
  auto* rollout = app.add_subcommand("rollout", "Evaluate a saved actor");
  rollout->add_option("checkpoint", o.checkpoint, "Actor checkpoint")->required()->check(CLI::ExistingFile);
  rollout->add_option("--env", o.env, "Environment name or bundle directory");
  rollout->add_option("--episodes", o.episodes, "Evaluation episodes");
  rollout->add_option("--seed", o.seed, "First reset seed");
  rollout->add_option("--spec", o.spec_file, "FPL spec overriding the bundled one")
      ->check(CLI::ExistingFile);
  add_mode(rollout);
  auto* qprobe = app.add_subcommand("qprobe", "FQ error with and without the FV loss");
  add_config(qprobe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  std::cout << std::setprecision(12);
  try {
    if (*check) return cmd_check(o);
    if (*eval) return cmd_eval(o);
    if (*grad) return cmd_grad(o);
    if (*bound) return cmd_bound(o);
    if (*toyc) return cmd_toy(o);
    if (*train) return cmd_train(o);
    if (*rollout) return cmd_rollout(o);
    if (*qprobe) return cmd_qprobe(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n' << app.help();
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_domain;
  }
  return exit_usage;
}
