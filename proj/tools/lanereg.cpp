// Command-line front end: train, eval, compare, sweep-cvrate, validate, export.
//
// Outputs land under --out; relative paths are resolved against $LANEREG_OUT_ROOT when set.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lanereg/harness/run.hpp"

namespace fs = std::filesystem;
using lanereg::harness::RunManifest;

namespace {

struct Options {
  std::string config;
  std::string scenario;
  std::string demand;
  std::optional<double> cv_rate;
  std::string seeds;
  std::optional<int> episodes;
  std::optional<long long> steps;
  std::optional<std::uint64_t> train_seed;
  std::string out;
  std::string checkpoint;
  std::optional<int> jobs;
  bool baseline = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON manifest to start from");
  cmd->add_option("--scenario", o.scenario, "stable_flow | lane_degrade | vehicle_stop");
  cmd->add_option("--demand", o.demand, "low | high | congested_high");
  cmd->add_option("--cv-rate", o.cv_rate, "share of connected vehicles")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--seeds", o.seeds, "evaluation seeds, e.g. 1-30 or 3,5,8");
  cmd->add_option("--episodes", o.episodes, "evaluate seeds 1..N")->check(CLI::NonNegativeNumber);
  cmd->add_option("--steps", o.steps, "training env steps")->check(CLI::NonNegativeNumber);
  cmd->add_option("--train-seed", o.train_seed, "training run seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
  cmd->add_option("--jobs", o.jobs, "evaluation worker threads")->check(CLI::PositiveNumber);
}

RunManifest build_manifest(const Options& o, const std::string& verb) {
  RunManifest m;
  if (!o.config.empty()) {
    std::ifstream is(o.config);
    if (!is) throw lanereg::ConfigError("cannot read " + o.config);
    m = RunManifest::from_json(nlohmann::json::parse(is));
  }
  if (!o.scenario.empty()) m.scenario.kind = lanereg::env::parse_scenario(o.scenario);
  if (!o.demand.empty()) m.scenario.demand = lanereg::roadsim::parse_demand_level(o.demand);
  if (o.cv_rate) m.scenario.cv_rate = *o.cv_rate;
  if (o.episodes) m.seeds = RunManifest::default_seeds(*o.episodes);
  if (!o.seeds.empty()) m.seeds = lanereg::harness::parse_seed_list(o.seeds);
  if (o.steps) m.train.total_steps = *o.steps;
  if (o.train_seed) m.train.seed = *o.train_seed;
  if (o.jobs) m.jobs = *o.jobs;
  if (!o.checkpoint.empty()) m.checkpoint = o.checkpoint;
  m.scenario.validate();
  m.train.validate();

  fs::path out = o.out;
  if (out.empty()) {
    std::ostringstream name;
    name << verb << '-' << lanereg::env::to_string(m.scenario.kind) << '-' << lanereg::roadsim::to_string(m.scenario.demand)
         << "-cv" << m.scenario.cv_rate;
    out = name.str();
  }
  if (const char* root = std::getenv("LANEREG_OUT_ROOT"); root && out.is_relative()) out = fs::path(root) / out;
  m.out_dir = out;
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-based lane-change regulation toolkit"};
  app.require_subcommand(1);

  Options o;
  std::vector<double> rates{0.0, 0.5, 1.0};
  std::uint64_t export_seed = 1;

  auto* train = app.add_subcommand("train", "train a shared Double DQN policy");
  add_common(train, o);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or the all-allow baseline)");
  add_common(eval, o);
  eval->add_flag("--baseline", o.baseline, "evaluate the all-allow baseline instead of a checkpoint");
  auto* compare = app.add_subcommand("compare", "paired policy vs baseline comparison");
  add_common(compare, o);
  auto* sweep = app.add_subcommand("sweep-cvrate", "train and compare at several CV penetration rates");
  add_common(sweep, o);
  sweep->add_option("--rates", rates, "penetration rates")->delimiter(',');
  auto* validate = app.add_subcommand("validate", "run the built-in oracle checks");
  add_common(validate, o);
  auto* exp = app.add_subcommand("export", "write trajectory, grid-state and action logs of one episode");
  add_common(exp, o);
  exp->add_flag("--baseline", o.baseline, "run the all-allow baseline instead of a checkpoint");
  exp->add_option("--seed", export_seed, "episode seed");

  CLI11_PARSE(app, argc, argv);

  try {
    auto* cmd = app.get_subcommands().front();
    const RunManifest m = build_manifest(o, cmd->get_name());
    if (cmd == train) return lanereg::harness::cmd_train(m, std::cout);
    if (cmd == eval) return lanereg::harness::cmd_eval(m, o.baseline, std::cout);
    if (cmd == compare) return lanereg::harness::cmd_compare(m, std::cout);
    if (cmd == sweep) return lanereg::harness::cmd_sweep_cvrate(m, rates, std::cout);
    if (cmd == validate) return lanereg::harness::cmd_validate(m, std::cout);
    if (cmd == exp) return lanereg::harness::cmd_export(m, export_seed, o.baseline, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
