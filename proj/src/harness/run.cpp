#include "lanereg/harness/run.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lanereg::harness {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

qlearner::TrainConfig RunManifest::desk_train_config() {
  qlearner::TrainConfig c;
  c.total_steps = 50000;
  return c;
}

std::vector<std::uint64_t> RunManifest::default_seeds(int n) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

nlohmann::json RunManifest::config_json() const {
  return {{"scenario", scenario}, {"env", env}, {"weights", weights}, {"train", train}};
}

std::uint64_t RunManifest::config_hash() const { return fnv1a64(config_json().dump()); }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j = config_json();
  j["seeds"] = seeds;
  j["checkpoint"] = checkpoint.string();
  j["out_dir"] = out_dir.string();
  j["jobs"] = jobs;
  j["config_hash"] = hash_hex(config_hash());
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  if (j.contains("scenario")) m.scenario = j.at("scenario").get<env::ScenarioConfig>();
  if (j.contains("env")) m.env = j.at("env").get<env::EnvConfig>();
  if (j.contains("weights")) m.weights = j.at("weights").get<env::RewardWeights>();
  if (j.contains("train")) m.train = j.at("train").get<qlearner::TrainConfig>();
  if (j.contains("seeds")) m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("checkpoint")) m.checkpoint = j.at("checkpoint").get<std::string>();
  if (j.contains("out_dir")) m.out_dir = j.at("out_dir").get<std::string>();
  m.jobs = j.value("jobs", m.jobs);
  return m;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::istringstream is(text);
  std::string part;
  while (std::getline(is, part, ',')) {
    if (part.empty()) continue;
    const auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto lo = std::stoull(part.substr(0, dash));
        const auto hi = std::stoull(part.substr(dash + 1));
        if (hi < lo) throw ConfigError("empty seed range " + part);
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list entry '" + part + "'");
    }
  }
  return out;
}

EpisodeOutcome run_episode(const RunManifest& m, std::uint64_t seed, const qlearner::Net* policy) {
  EpisodeOutcome out;
  out.seed = seed;
  env::RegulationEnv env(m.scenario, m.env, m.weights);
  try {
    env.reset(seed);
  } catch (const InvariantViolation& e) {
    out.fault = e.what();
    return out;
  }
  ActionField field = ActionField::allow_all(env.grid());
  double r = 0.0, r1 = 0.0, r2 = 0.0;
  long long n = 0;
  while (!env.done()) {
    if (policy) {
      const qlearner::Net::Matrix obs =
          Eigen::Map<const qlearner::Net::Matrix>(env.observations().data(), policy->input_size(), env.agents());
      const qlearner::Net::Matrix q = policy->forward(obs);
      for (int c = 0; c < env.agents(); ++c) {
        field.cells()[static_cast<std::size_t>(c)] = GridAction::from_index(qlearner::argmax_lowest(q.col(c)));
      }
    }
    const auto res = env.step(field);
    if (res.fault) {
      out.fault = *res.fault;
      break;
    }
    for (std::size_t c = 0; c < res.rewards.size(); ++c) {
      r += res.rewards[c];
      r1 += res.speed_rewards[c];
      r2 += res.density_rewards[c];
    }
    n += static_cast<long long>(res.rewards.size());
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.mean_reward = n ? r / static_cast<double>(n) : nan;
  out.mean_r1 = n ? r1 / static_cast<double>(n) : nan;
  out.mean_r2 = n ? r2 / static_cast<double>(n) : nan;
  if (!out.fault) out.metrics = env.metrics();
  return out;
}

std::vector<EpisodeOutcome> evaluate(const RunManifest& m, const qlearner::Net* policy) {
  std::vector<EpisodeOutcome> out(m.seeds.size());
  const int jobs = std::max(1, std::min<int>(m.jobs, static_cast<int>(m.seeds.size())));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < m.seeds.size(); ++i) out[i] = run_episode(m, m.seeds[i], policy);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < m.seeds.size(); i = next++) out[i] = run_episode(m, m.seeds[i], policy);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double gain(double base, double pol) { return base == 0.0 ? kNaN : 100.0 * (pol - base) / base; }
double reduction(double base, double pol) {
  if (base == 0.0) return pol == 0.0 ? 0.0 : kNaN;
  return 100.0 * (base - pol) / base;
}

}  // namespace

std::vector<Uplift> paired_uplifts(const std::vector<EpisodeOutcome>& baseline,
                                   const std::vector<EpisodeOutcome>& policy) {
  if (baseline.size() != policy.size()) throw std::invalid_argument("paired_uplifts: arms have different episode counts");
  std::vector<Uplift> out;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    if (baseline[i].seed != policy[i].seed) throw std::invalid_argument("paired_uplifts: unpaired seeds");
    Uplift u;
    u.seed = baseline[i].seed;
    if (!baseline[i].metrics || !policy[i].metrics) {
      u.speed = u.co2 = u.ttc = u.tet = u.lane_changes = kNaN;
    } else {
      const auto& b = *baseline[i].metrics;
      const auto& p = *policy[i].metrics;
      u.speed = gain(b.avg_speed, p.avg_speed);
      u.co2 = reduction(b.co2_per_vehicle, p.co2_per_vehicle);
      u.ttc = reduction(b.mean_ttc_exposure, p.mean_ttc_exposure);
      u.tet = reduction(b.tet, p.tet);
      u.lane_changes = reduction(b.lane_changes_per_vehicle, p.lane_changes_per_vehicle);
    }
    out.push_back(u);
  }
  return out;
}

std::vector<double> any_allowed_by_lane(const std::vector<EpisodeOutcome>& outcomes) {
  metrics::ActionRateTable total;
  for (const auto& o : outcomes) {
    if (!o.metrics) continue;
    const auto& t = o.metrics->action_rates;
    if (total.size() < t.size()) total.resize(t.size());
    for (std::size_t l = 0; l < t.size(); ++l) {
      total[l].samples += t[l].samples;
      total[l].any_allowed += t[l].any_allowed;
    }
  }
  std::vector<double> out;
  for (const auto& l : total) out.push_back(l.any_rate());
  return out;
}

qlearner::Net load_policy(const RunManifest& m) {
  if (m.checkpoint.empty()) throw ConfigError("no checkpoint given");
  const auto ck = qlearner::load_checkpoint(m.checkpoint);
  if (ck.config_hash != m.config_hash()) {
    throw ConfigError("checkpoint " + m.checkpoint.string() + " was trained under config " + hash_hex(ck.config_hash) +
                      ", manifest hashes to " + hash_hex(m.config_hash()));
  }
  return qlearner::network_from(ck);
}

}  // namespace lanereg::harness
