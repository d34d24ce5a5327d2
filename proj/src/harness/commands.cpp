#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "lanereg/gridstate.hpp"
#include "lanereg/harness/run.hpp"
#include "lanereg/harness/stats.hpp"
#include "lanereg/harness/svg.hpp"
#include "lanereg/harness/validate.hpp"
#include "lanereg/qlearner/train.hpp"

namespace lanereg::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << std::setprecision(10);
  return os;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

// Copies a CSV produced elsewhere, appending a config_hash column to every row.
void write_csv_with_hash(const fs::path& path, const std::string& csv, const std::string& hash) {
  auto os = open_out(path);
  std::istringstream is(csv);
  std::string line;
  bool header = true;
  while (std::getline(is, line)) {
    os << line << ',' << (header ? "config_hash" : hash) << '\n';
    header = false;
  }
}

void write_manifest(const RunManifest& m) { open_out(m.out_dir / "manifest.json") << m.to_json().dump(2) << '\n'; }

std::string rate_label(double rate) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << rate;
  return os.str();
}

double field_of(const EpisodeOutcome& o, double metrics::EpisodeMetrics::*f) { return o.metrics ? (*o.metrics).*f : kNaN; }

struct MetricColumn {
  const char* name;
  double metrics::EpisodeMetrics::*field;
};

constexpr MetricColumn kMetricColumns[] = {
    {"avg_speed", &metrics::EpisodeMetrics::avg_speed},
    {"co2_per_vehicle", &metrics::EpisodeMetrics::co2_per_vehicle},
    {"mean_ttc_exposure", &metrics::EpisodeMetrics::mean_ttc_exposure},
    {"tet", &metrics::EpisodeMetrics::tet},
    {"lane_changes_per_vehicle", &metrics::EpisodeMetrics::lane_changes_per_vehicle},
};

void write_episode_csv(const fs::path& path, const std::vector<EpisodeOutcome>& outcomes, const std::string& hash) {
  auto os = open_out(path);
  os << "seed";
  for (const auto& c : kMetricColumns) os << ',' << c.name;
  os << ",vehicles,despawned,lane_changes,mean_reward,mean_r1,mean_r2,fault,config_hash\n";
  for (const auto& o : outcomes) {
    os << o.seed;
    for (const auto& c : kMetricColumns) os << ',' << field_of(o, c.field);
    os << ',' << (o.metrics ? o.metrics->vehicles : 0) << ',' << (o.metrics ? o.metrics->despawned : 0) << ','
       << (o.metrics ? o.metrics->lane_changes : 0) << ',' << o.mean_reward << ',' << o.mean_r1 << ',' << o.mean_r2
       << ',' << (o.fault ? 1 : 0) << ',' << hash << '\n';
  }
}

void write_summary_csv(const fs::path& path, const std::vector<EpisodeOutcome>& outcomes, const std::string& hash) {
  auto os = open_out(path);
  os << "metric,mean,std,n,config_hash\n";
  auto row = [&](const char* name, const std::vector<double>& v) {
    int n = 0;
    for (double x : v) n += std::isnan(x) ? 0 : 1;
    os << name << ',' << (n ? mean(v) : kNaN) << ',' << stddev(v) << ',' << n << ',' << hash << '\n';
  };
  for (const auto& c : kMetricColumns) {
    std::vector<double> v;
    for (const auto& o : outcomes) v.push_back(field_of(o, c.field));
    row(c.name, v);
  }
  std::vector<double> r;
  for (const auto& o : outcomes) r.push_back(o.mean_reward);
  row("mean_reward", r);
}

metrics::ActionRateTable merged_action_rates(const std::vector<EpisodeOutcome>& outcomes) {
  metrics::ActionRateTable total;
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const auto& t = o.metrics->action_rates;
    if (total.size() < t.size()) total.resize(t.size());
    for (std::size_t l = 0; l < t.size(); ++l) {
      total[l].samples += t[l].samples;
      total[l].left_allowed += t[l].left_allowed;
      total[l].right_allowed += t[l].right_allowed;
      total[l].both_allowed += t[l].both_allowed;
      total[l].any_allowed += t[l].any_allowed;
      total[l].left_only += t[l].left_only;
      total[l].right_only += t[l].right_only;
    }
  }
  return total;
}

void write_action_rates(const fs::path& dir, const std::vector<EpisodeOutcome>& outcomes, const std::string& title,
                        const std::string& hash) {
  const auto table = merged_action_rates(outcomes);
  auto os = open_out(dir / "action_rates.csv");
  os << "lane,samples,left_allowed,right_allowed,any_allowed,left_only,right_only,config_hash\n";
  std::vector<std::string> lanes;
  Series left{"left allowed", {}, {}}, right{"right allowed", {}, {}}, any{"any allowed", {}, {}};
  for (std::size_t l = 0; l < table.size(); ++l) {
    const auto& c = table[l];
    os << l + 1 << ',' << c.samples << ',' << c.left_rate() << ',' << c.right_rate() << ',' << c.any_rate() << ','
       << c.left_only_rate() << ',' << c.right_only_rate() << ',' << hash << '\n';
    lanes.push_back("lane " + std::to_string(l + 1));
    left.y.push_back(c.left_rate());
    right.y.push_back(c.right_rate());
    any.y.push_back(c.any_rate());
  }
  write_text(dir / "action_rates.svg",
             bar_chart({title, "lane", "share of grid-steps", "config " + hash}, lanes, {left, right, any}));
}

struct Comparison {
  std::vector<EpisodeOutcome> baseline;
  std::vector<EpisodeOutcome> policy;
  std::vector<Uplift> uplifts;
};

Comparison compare_arms(const RunManifest& m, const qlearner::Net& policy) {
  Comparison c;
  c.baseline = evaluate(m, nullptr);
  c.policy = evaluate(m, &policy);
  c.uplifts = paired_uplifts(c.baseline, c.policy);
  return c;
}

struct UpliftColumn {
  const char* name;
  double Uplift::*field;
  double metrics::EpisodeMetrics::*metric;
};

constexpr UpliftColumn kUpliftColumns[] = {
    {"speed", &Uplift::speed, &metrics::EpisodeMetrics::avg_speed},
    {"co2", &Uplift::co2, &metrics::EpisodeMetrics::co2_per_vehicle},
    {"ttc_exposure", &Uplift::ttc, &metrics::EpisodeMetrics::mean_ttc_exposure},
    {"tet", &Uplift::tet, &metrics::EpisodeMetrics::tet},
    {"lane_changes", &Uplift::lane_changes, &metrics::EpisodeMetrics::lane_changes_per_vehicle},
};

void write_comparison(const fs::path& dir, const Comparison& c, const std::string& hash, std::ostream& log) {
  {
    auto os = open_out(dir / "compare_episodes.csv");
    os << "seed";
    for (const auto& u : kUpliftColumns) os << ",baseline_" << u.name << ",policy_" << u.name << ",uplift_" << u.name;
    os << ",config_hash\n";
    for (std::size_t i = 0; i < c.uplifts.size(); ++i) {
      os << c.uplifts[i].seed;
      for (const auto& u : kUpliftColumns) {
        os << ',' << field_of(c.baseline[i], u.metric) << ',' << field_of(c.policy[i], u.metric) << ','
           << c.uplifts[i].*u.field;
      }
      os << ',' << hash << '\n';
    }
  }
  auto os = open_out(dir / "compare_summary.csv");
  os << "metric,baseline_mean,policy_mean,uplift_mean_pct,uplift_std_pct,n,paired_t,p_value,config_hash\n";
  std::vector<std::pair<std::string, std::vector<double>>> groups;
  for (const auto& u : kUpliftColumns) {
    std::vector<double> base, pol, up;
    for (std::size_t i = 0; i < c.uplifts.size(); ++i) {
      base.push_back(field_of(c.baseline[i], u.metric));
      pol.push_back(field_of(c.policy[i], u.metric));
      up.push_back(c.uplifts[i].*u.field);
    }
    const TTest t = paired_t(base, pol);
    os << u.name << ',' << mean(base) << ',' << mean(pol) << ',' << mean(up) << ',' << stddev(up) << ',' << t.n << ','
       << t.t << ',' << t.p << ',' << hash << '\n';
    log << std::left << std::setw(14) << u.name << " baseline " << std::setw(10) << mean(base) << " policy "
        << std::setw(10) << mean(pol) << " uplift " << std::setw(9) << mean(up) << "% p=" << t.p << '\n';
    groups.emplace_back(u.name, up);
  }
  write_text(dir / "compare_uplift.svg",
             box_plot({"Per-episode uplift over the all-allow baseline", "metric", "uplift (%)", "config " + hash},
                      groups));
}

int fail(std::ostream& log, const std::exception& e) {
  log << "error: " << e.what() << '\n';
  return 2;
}

}  // namespace

int cmd_train(const RunManifest& m, std::ostream& log) {
  try {
    const std::string hash = hash_hex(m.config_hash());
    fs::create_directories(m.out_dir);
    write_manifest(m);
    env::RegulationEnv env(m.scenario, m.env, m.weights);
    qlearner::DoubleDqn learner(m.train.dqn_params(), m.train.seed);
    learner.set_dump_path(m.out_dir / "nonfinite_dump.txt");
    auto csv = open_out(m.out_dir / "train_log.csv");
    csv << "episode,steps,mean_reward,mean_r1,mean_r2,epsilon,loss,config_hash\n";
    qlearner::TrainHooks hooks;
    hooks.on_checkpoint = [&](long long step, const qlearner::DoubleDqn& l) {
      std::ostringstream name;
      name << "step_" << std::setw(8) << std::setfill('0') << step << ".bin";
      qlearner::save_checkpoint(m.out_dir / "checkpoints" / name.str(), l.online(), step, m.config_hash());
    };
    hooks.on_episode = [&](const qlearner::EpisodeLog& r) {
      csv << r.episode << ',' << r.steps << ',' << r.mean_reward << ',' << r.mean_r1 << ',' << r.mean_r2 << ','
          << r.epsilon << ',' << r.loss << ',' << hash << '\n';
      csv.flush();
      if (r.faulted) log << "episode " << r.episode << " faulted and was dropped: " << r.fault << '\n';
      if (r.episode % 10 == 0) {
        log << "episode " << r.episode << " steps " << r.steps << " reward " << r.mean_reward << " eps " << r.epsilon
            << " loss " << r.loss << '\n';
      }
    };
    const auto result = qlearner::train(env, m.train, learner, hooks);
    qlearner::save_checkpoint(m.out_dir / "policy.bin", learner.online(), result.env_steps, m.config_hash());

    Series total{"mean reward", {}, {}}, r1{"speed index r1", {}, {}}, r2{"V/C index r2", {}, {}};
    for (const auto& r : result.log) {
      total.x.push_back(r.episode);
      total.y.push_back(r.mean_reward);
      r1.x.push_back(r.episode);
      r1.y.push_back(r.mean_r1);
      r2.x.push_back(r.episode);
      r2.y.push_back(r.mean_r2);
    }
    write_text(m.out_dir / "train_reward.svg",
               line_chart({"Training reward per episode", "episode", "mean agent reward", "config " + hash},
                          {total, r1, r2}));
    log << "trained " << result.env_steps << " env steps, " << result.train_steps << " gradient steps, "
        << result.log.size() << " episodes (" << result.faulted_episodes << " faulted); config " << hash << '\n';
    return 0;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

int cmd_eval(const RunManifest& m, bool baseline, std::ostream& log) {
  try {
    const std::string hash = hash_hex(m.config_hash());
    std::optional<qlearner::Net> policy;
    if (!baseline) policy = load_policy(m);
    fs::create_directories(m.out_dir);
    write_manifest(m);
    const auto outcomes = evaluate(m, policy ? &*policy : nullptr);
    write_episode_csv(m.out_dir / "eval_episodes.csv", outcomes, hash);
    write_summary_csv(m.out_dir / "eval_summary.csv", outcomes, hash);
    write_action_rates(m.out_dir, outcomes, baseline ? "Action rates (all-allow baseline)" : "Action rates (policy)",
                       hash);
    std::vector<double> speed;
    int faults = 0;
    for (const auto& o : outcomes) {
      speed.push_back(field_of(o, &metrics::EpisodeMetrics::avg_speed));
      faults += o.fault ? 1 : 0;
    }
    log << (baseline ? "baseline" : "policy") << " over " << outcomes.size() << " episodes: avg speed "
        << (outcomes.empty() ? kNaN : mean(speed)) << " +- " << stddev(speed) << " m/s, " << faults << " faulted\n";
    return 0;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

int cmd_compare(const RunManifest& m, std::ostream& log) {
  try {
    const std::string hash = hash_hex(m.config_hash());
    const auto policy = load_policy(m);
    fs::create_directories(m.out_dir);
    write_manifest(m);
    const auto c = compare_arms(m, policy);
    write_episode_csv(m.out_dir / "baseline_episodes.csv", c.baseline, hash);
    write_episode_csv(m.out_dir / "policy_episodes.csv", c.policy, hash);
    write_comparison(m.out_dir, c, hash, log);
    write_action_rates(m.out_dir, c.policy, "Action rates (policy)", hash);
    return 0;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

int cmd_sweep_cvrate(const RunManifest& m, const std::vector<double>& rates, std::ostream& log) {
  try {
    for (double r : rates) {
      if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("cv rates must lie in [0, 1]");
    }
    fs::create_directories(m.out_dir);
    auto csv = open_out(m.out_dir / "sweep_cvrate.csv");
    csv << "cv_rate,train_reward_final,speed_uplift_pct,speed_p_value,lane_change_reduction_pct,co2_reduction_pct,"
           "config_hash\n";
    Series reward{"final training reward", {}, {}}, speed{"speed uplift (%)", {}, {}};
    for (double rate : rates) {
      RunManifest mm = m;
      mm.scenario.cv_rate = rate;
      mm.out_dir = m.out_dir / ("rate_" + rate_label(rate));
      mm.checkpoint = mm.out_dir / "policy.bin";
      log << "== cv_rate " << rate_label(rate) << '\n';
      if (const int rc = cmd_train(mm, log); rc != 0) return rc;
      std::ifstream tl(mm.out_dir / "train_log.csv");
      const auto episodes = qlearner::read_train_log_csv(tl);
      std::vector<double> tail;
      for (std::size_t i = episodes.size() - std::min(episodes.size(), std::max<std::size_t>(1, episodes.size() / 5));
           i < episodes.size(); ++i) {
        tail.push_back(episodes[i].mean_reward);
      }
      const auto c = compare_arms(mm, load_policy(mm));
      const std::string hash = hash_hex(mm.config_hash());
      write_comparison(mm.out_dir, c, hash, log);
      std::vector<double> sp, lc, co2, b, p;
      for (std::size_t i = 0; i < c.uplifts.size(); ++i) {
        sp.push_back(c.uplifts[i].speed);
        lc.push_back(c.uplifts[i].lane_changes);
        co2.push_back(c.uplifts[i].co2);
        b.push_back(field_of(c.baseline[i], &metrics::EpisodeMetrics::avg_speed));
        p.push_back(field_of(c.policy[i], &metrics::EpisodeMetrics::avg_speed));
      }
      const double final_reward = mean(tail);
      csv << rate << ',' << final_reward << ',' << mean(sp) << ',' << paired_t(b, p).p << ',' << mean(lc) << ','
          << mean(co2) << ',' << hash << '\n';
      csv.flush();
      reward.x.push_back(rate);
      reward.y.push_back(final_reward);
      speed.x.push_back(rate);
      speed.y.push_back(mean(sp));
    }
    const std::string note = "base config " + hash_hex(m.config_hash());
    write_text(m.out_dir / "sweep_reward.svg",
               line_chart({"Training reward vs penetration rate", "CV penetration rate", "mean agent reward", note},
                          {reward}));
    write_text(m.out_dir / "sweep_speed.svg",
               line_chart({"Speed uplift vs penetration rate", "CV penetration rate", "uplift (%)", note}, {speed}));
    return 0;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

int cmd_validate(const RunManifest& m, std::ostream& log) {
  try {
    const auto checks = run_validation(m.scenario.idm);
    fs::create_directories(m.out_dir);
    auto csv = open_out(m.out_dir / "validate.csv");
    csv << "check,passed,measured,tolerance,detail\n";
    bool ok = true;
    for (const auto& c : checks) {
      ok = ok && c.passed;
      log << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured " << c.measured << "  tolerance " << c.tolerance
          << "  " << c.detail << '\n';
      csv << c.name << ',' << (c.passed ? 1 : 0) << ',' << c.measured << ',' << c.tolerance << ",\"" << c.detail
          << "\"\n";
    }
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

int cmd_export(const RunManifest& m, std::uint64_t seed, bool baseline, std::ostream& log) {
  try {
    std::optional<qlearner::Net> policy;
    if (!baseline) policy = load_policy(m);
    fs::create_directories(m.out_dir);
    write_manifest(m);
    env::RegulationEnv env(m.scenario, m.env, m.weights);
    env.reset(seed);
    env.world().enable_trajectory_log(true);
    env.enable_action_log(true);
    const std::string hash = hash_hex(m.config_hash());
    std::ostringstream grid_csv;
    grid_csv << std::setprecision(10);
    write_grid_csv(grid_csv, env.world().time(), env.field(), true);
    ActionField field = ActionField::allow_all(env.grid());
    while (!env.done()) {
      if (policy) {
        const auto acts = [&] {
          qlearner::Net::Matrix obs =
              Eigen::Map<const qlearner::Net::Matrix>(env.observations().data(), policy->input_size(), env.agents());
          return policy->forward(obs);
        }();
        for (int c = 0; c < env.agents(); ++c) {
          field.cells()[static_cast<std::size_t>(c)] = GridAction::from_index(qlearner::argmax_lowest(acts.col(c)));
        }
      }
      const auto res = env.step(field);
      if (res.fault) {
        log << "episode faulted: " << *res.fault << '\n';
        break;
      }
      write_grid_csv(grid_csv, env.world().time(), env.field(), false);
    }
    write_csv_with_hash(m.out_dir / "grid_states.csv", grid_csv.str(), hash);
    {
      std::ostringstream os;
      os << std::setprecision(10);
      env.world().write_trajectory_csv(os);
      write_csv_with_hash(m.out_dir / "trajectory.csv", os.str(), hash);
    }
    {
      std::ostringstream os;
      os << std::setprecision(10);
      env.write_action_log_csv(os);
      write_csv_with_hash(m.out_dir / "actions.csv", os.str(), hash);
    }
    log << "exported seed " << seed << " (" << env.world().trajectory().size() << " trajectory rows) to "
        << m.out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    return fail(log, e);
  }
}

}  // namespace lanereg::harness
