#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lanereg/harness/run.hpp"
#include "lanereg/harness/stats.hpp"
#include "lanereg/harness/svg.hpp"
#include "lanereg/qlearner/dqn.hpp"

using namespace lanereg;
using namespace lanereg::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lanereg_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

RunManifest small_manifest(const fs::path& out) {
  RunManifest m;
  m.env.episode_length = 25;
  m.train.total_steps = 60;
  m.train.batch_size = 4;
  m.train.checkpoint_interval = 50;
  m.seeds = {1, 2};
  m.out_dir = out;
  return m;
}

qlearner::Net allow_all_policy() {
  qlearner::DoubleDqn dqn({}, 1);
  auto net = dqn.online();
  const int last = net.layers() - 1;
  net.weight(last).setZero();
  net.bias(last).setZero();
  net.bias(last)(3) = 1.0f;
  return net;
}

metrics::EpisodeMetrics fake(double speed, double co2, double ttc, double tet, double lc) {
  metrics::EpisodeMetrics m;
  m.avg_speed = speed;
  m.co2_per_vehicle = co2;
  m.mean_ttc_exposure = ttc;
  m.tet = tet;
  m.lane_changes_per_vehicle = lc;
  return m;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("summary statistics") {
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0, NAN};
    CHECK(mean(xs) == doctest::Approx(2.5));
    CHECK(stddev(xs) == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
    const std::vector<double> x{0, 1, 2, 3, 4, 5}, y{1, 3, 5, 7, 100, 11};
    CHECK(theil_sen_slope(x, y) == doctest::Approx(2.0));
  }

  TEST_CASE("Student t tail probabilities") {
    CHECK(incomplete_beta(2.0, 3.0, 0.4) == doctest::Approx(0.5248).epsilon(1e-4));
    CHECK(t_two_sided_p(0.0, 10) == doctest::Approx(1.0));
    CHECK(t_two_sided_p(2.228138851986, 10) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(t_two_sided_p(2.045229642, 29) == doctest::Approx(0.05).epsilon(1e-6));
    const std::vector<double> before{1, 2, 3, 4, 5}, after{2, 2.5, 4, 4.4, 6.2};
    const auto t = paired_t(before, after);
    CHECK(t.n == 5);
    CHECK(t.mean == doctest::Approx(0.82));
    CHECK(t.p < 0.05);
    const std::vector<double> zeros(6, 0.0);
    CHECK(one_sample_t(zeros).p == doctest::Approx(1.0));
  }

  TEST_CASE("seed lists") {
    CHECK(parse_seed_list("1-3,10") == std::vector<std::uint64_t>{1, 2, 3, 10});
    CHECK(parse_seed_list("7") == std::vector<std::uint64_t>{7});
    CHECK(RunManifest::default_seeds(3) == std::vector<std::uint64_t>{1, 2, 3});
    CHECK_THROWS(parse_seed_list("5-2"));
    CHECK_THROWS(parse_seed_list("a"));
  }

  TEST_CASE("config hash follows the configuration, not the paths or seeds") {
    RunManifest a;
    RunManifest b = a;
    b.seeds = {4, 5};
    b.out_dir = "elsewhere";
    CHECK(a.config_hash() == b.config_hash());
    b.scenario.cv_rate = 0.5;
    CHECK(a.config_hash() != b.config_hash());
    const auto c = RunManifest::from_json(b.to_json());
    CHECK(c.config_hash() == b.config_hash());
    CHECK(c.seeds == b.seeds);
    CHECK(hash_hex(0xabcULL) == "0000000000000abc");
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  }

  TEST_CASE("training twice from one manifest gives identical logs; zero steps keeps only the initial checkpoint") {
    const auto d1 = scratch("train1"), d2 = scratch("train2"), d0 = scratch("train0");
    auto m = small_manifest(d1);
    std::ostringstream log;
    REQUIRE(cmd_train(m, log) == 0);
    m.out_dir = d2;
    REQUIRE(cmd_train(m, log) == 0);
    const auto l1 = lines(d1 / "train_log.csv");
    CHECK(l1 == lines(d2 / "train_log.csv"));
    REQUIRE(l1.size() == 4);
    const std::string hash = hash_hex(m.config_hash());
    CHECK(l1[0].ends_with("config_hash"));
    CHECK(l1[1].ends_with(hash));
    CHECK(fs::exists(d1 / "checkpoints" / "step_00000050.bin"));
    CHECK(qlearner::load_checkpoint(d1 / "policy.bin").config_hash == m.config_hash());

    m.out_dir = d0;
    m.train.total_steps = 0;
    REQUIRE(cmd_train(m, log) == 0);
    CHECK(lines(d0 / "train_log.csv").size() == 1);
    int ckpts = 0;
    for (const auto& e : fs::directory_iterator(d0 / "checkpoints")) {
      ++ckpts;
      CHECK(e.path().filename() == "step_00000000.bin");
    }
    CHECK(ckpts == 1);
    for (const auto& p : {d0, d1, d2}) fs::remove_all(p);
  }

  TEST_CASE("evaluation refuses a checkpoint from another configuration") {
    const auto d = scratch("mismatch");
    auto m = small_manifest(d);
    m.train.total_steps = 0;
    std::ostringstream log;
    REQUIRE(cmd_train(m, log) == 0);
    m.checkpoint = d / "policy.bin";
    CHECK_NOTHROW(load_policy(m));
    m.scenario.demand = roadsim::DemandLevel::high;
    CHECK_THROWS(load_policy(m));
    CHECK(cmd_eval(m, false, log) != 0);
    fs::remove_all(d);
  }

  TEST_CASE("evaluating no episodes writes a header-only table") {
    const auto d = scratch("eval0");
    auto m = small_manifest(d);
    m.seeds.clear();
    std::ostringstream log;
    REQUIRE(cmd_eval(m, true, log) == 0);
    const auto rows = lines(d / "eval_episodes.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].rfind("seed,", 0) == 0);
    fs::remove_all(d);
  }

  TEST_CASE("baseline metrics do not depend on the penetration rate") {
    auto m = small_manifest(scratch("unused"));
    m.env.episode_length = 60;
    m.scenario.cv_rate = 0.0;
    const auto a = evaluate(m, nullptr);
    m.scenario.cv_rate = 1.0;
    const auto b = evaluate(m, nullptr);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].metrics);
      REQUIRE(b[i].metrics);
      CHECK(a[i].metrics->avg_speed == b[i].metrics->avg_speed);
      CHECK(a[i].metrics->co2_per_vehicle == b[i].metrics->co2_per_vehicle);
      CHECK(a[i].metrics->tet == b[i].metrics->tet);
      CHECK(a[i].metrics->lane_changes_per_vehicle == b[i].metrics->lane_changes_per_vehicle);
      CHECK(a[i].mean_reward == b[i].mean_reward);
    }
  }

  TEST_CASE("an all-allow policy shows zero uplift") {
    auto m = small_manifest(scratch("unused"));
    m.env.episode_length = 60;
    m.jobs = 2;
    const auto policy = allow_all_policy();
    const auto base = evaluate(m, nullptr);
    const auto pol = evaluate(m, &policy);
    for (const auto& u : paired_uplifts(base, pol)) {
      CHECK(u.speed == 0.0);
      CHECK(u.co2 == 0.0);
      CHECK(u.ttc == 0.0);
      CHECK(u.tet == 0.0);
      CHECK(u.lane_changes == 0.0);
    }
    for (double share : any_allowed_by_lane(pol)) CHECK(share == 1.0);
  }

  TEST_CASE("uplift signs: faster and cleaner are positive") {
    std::vector<EpisodeOutcome> base{{1, fake(20.0, 100.0, 2.0, 0.1, 0.2), {}, 0, 0, 0}};
    std::vector<EpisodeOutcome> pol{{1, fake(21.0, 90.0, 1.0, 0.05, 0.1), {}, 0, 0, 0}};
    const auto u = paired_uplifts(base, pol).front();
    CHECK(u.speed == doctest::Approx(5.0));
    CHECK(u.co2 == doctest::Approx(10.0));
    CHECK(u.ttc == doctest::Approx(50.0));
    CHECK(u.tet == doctest::Approx(50.0));
    CHECK(u.lane_changes == doctest::Approx(50.0));
    pol.front().seed = 2;
    CHECK_THROWS_AS(paired_uplifts(base, pol), std::invalid_argument);
  }

  TEST_CASE("charts are standalone SVG") {
    Series s{"reward", {0, 1, 2}, {0.1, 0.2, 0.15}};
    const auto svg = line_chart({"t", "x", "y", "note"}, {s});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }

  TEST_CASE("export writes hash-stamped tables") {
    const auto d = scratch("export");
    auto m = small_manifest(d);
    m.env.episode_length = 3;
    std::ostringstream log;
    REQUIRE(cmd_export(m, 4, true, log) == 0);
    const std::string hash = hash_hex(m.config_hash());
    for (const char* f : {"grid_states.csv", "trajectory.csv", "actions.csv"}) {
      const auto rows = lines(d / f);
      REQUIRE(rows.size() > 1);
      CHECK(rows.front().ends_with(",config_hash"));
      CHECK(rows.back().ends_with("," + hash));
    }
    fs::remove_all(d);
  }
}
