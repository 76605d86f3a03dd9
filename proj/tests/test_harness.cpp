#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sgmpc/config.hpp"
#include "sgmpc/harness.hpp"

using namespace sgmpc;
using namespace sgmpc::harness;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd vecn(std::initializer_list<double> v) {
  Eigen::VectorXd x(Eigen::Index(v.size()));
  Eigen::Index i = 0;
  for (const double e : v) x(i++) = e;
  return x;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg = default_config();
  cfg.n_trajectories = 6;
  cfg.plant.T = 15;
  cfg.plots = false;
  return cfg;
}

plant::TrajectoryRecord flat_record(int T) {
  plant::TrajectoryRecord r;
  r.x = Eigen::MatrixXd::Zero(1, T + 1);
  r.x_hat = r.x;
  r.z = r.x;
  r.u = Eigen::MatrixXd::Zero(1, T);
  r.v = r.u;
  r.y = r.x;
  r.has_y.assign(std::size_t(T + 1), true);
  r.feasible.assign(std::size_t(T), true);
  r.fallback.assign(std::size_t(T), false);
  r.schedule_id = "fixture";
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / leaf;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("fnv1a matches the published test vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("unknown configuration keys are rejected by name") {
  CHECK_THROWS_WITH_AS(config_from_json({{"trajectorys", 3}}),
                       doctest::Contains("trajectorys"),
                       std::invalid_argument);
  nlohmann::json nested = {{"plant", {{"sensor", {{"evry_k", 2}}}}}};
  CHECK_THROWS_WITH_AS(config_from_json(nested), doctest::Contains("evry_k"),
                       std::invalid_argument);
}

TEST_CASE("missing keys keep their defaults") {
  const ExperimentConfig cfg =
      config_from_json({{"name", "probe"}, {"seed", 7}});
  const ExperimentConfig base = default_config();
  CHECK(cfg.name == "probe");
  CHECK(cfg.seed == 7);
  CHECK(cfg.n_trajectories == base.n_trajectories);
  CHECK(cfg.plant.T == base.plant.T);
  CHECK(cfg.controller.horizon == base.controller.horizon);
  CHECK(cfg.controller.funnel.c_x == base.controller.funnel.c_x);
}

TEST_CASE("json round trip preserves the configuration and its hash") {
  const ExperimentConfig cfg = default_config();
  const ExperimentConfig back = config_from_json(to_json(cfg));
  CHECK(to_json(back).dump() == to_json(cfg).dump());
  CHECK(config_hash(back) == config_hash(cfg));

  ExperimentConfig seeded = cfg;
  seeded.seed = 2;
  CHECK(config_hash(seeded) != config_hash(cfg));

  ExperimentConfig relocated = cfg;
  relocated.out_dir = "elsewhere";
  relocated.plots = false;
  relocated.threads = 3;
  CHECK(config_hash(relocated) == config_hash(cfg));
}

TEST_CASE("coverage counts a hand-built violation exactly") {
  const auto es = uncertainty::assemble_error_system(
      Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1),
      Eigen::MatrixXd::Identity(1, 1), -0.5 * Eigen::MatrixXd::Identity(1, 1),
      0.5 * Eigen::MatrixXd::Identity(1, 1));
  uncertainty::NoiseBudget budget;
  budget.W = sets::Zonotope::box(vecn({0.0}), vecn({1e-3}));
  budget.M = sets::Zonotope::box(vecn({0.0}), vecn({1e-3}));
  budget.Sigma_eps = 1e-6 * Eigen::MatrixXd::Identity(1, 1);
  const auto schedule = uncertainty::build_prs_schedule(
      {es}, {{0, budget}}, uncertainty::PrsOptions{});

  const int T = 2;
  std::vector<plant::TrajectoryRecord> records{flat_record(T), flat_record(T)};
  records[0].x(0, 1) = 100.0;  // one breach at t = 1

  ExperimentConfig cfg = default_config();
  const MetricsReport r = compute_metrics(records, &schedule, cfg);
  CHECK(r.acp == doctest::Approx(5.0 / 6.0));
  CHECK(r.mcp_min == doctest::Approx(0.5));
  CHECK(r.mcp_max == doctest::Approx(1.0));
  CHECK(r.feasibility_rate == doctest::Approx(1.0));
  CHECK(r.fallback_count == 0);
  CHECK(std::isnan(r.iou_mean));  // pose metrics need the 5-axis state
}

TEST_CASE("metrics are invariant to record order") {
  const ExperimentConfig cfg = small_config();
  const BatchResult batch = run_batch(cfg);
  REQUIRE(batch.records.size() == 6);
  REQUIRE(batch.schedule != nullptr);

  const MetricsReport a =
      compute_metrics(batch.records, batch.schedule.get(), cfg);
  std::vector<plant::TrajectoryRecord> shuffled(batch.records.rbegin(),
                                                batch.records.rend());
  const MetricsReport b = compute_metrics(shuffled, batch.schedule.get(), cfg);

  CHECK(a.mcp_min <= a.acp + 1e-12);
  CHECK(a.acp <= a.mcp_max + 1e-12);
  CHECK(b.acp == doctest::Approx(a.acp).epsilon(1e-12));
  CHECK(b.mcp_min == doctest::Approx(a.mcp_min).epsilon(1e-12));
  CHECK(b.break_ratio == doctest::Approx(a.break_ratio).epsilon(1e-12));
  CHECK(b.distance_mean_mm ==
        doctest::Approx(a.distance_mean_mm).epsilon(1e-9));
  CHECK(b.iou_mean == doctest::Approx(a.iou_mean).epsilon(1e-9));
  CHECK(b.iou_std_error == doctest::Approx(a.iou_std_error).epsilon(1e-9));
}

TEST_CASE("reports are recomputable from the emitted records") {
  const ExperimentConfig cfg = small_config();
  const BatchResult batch = run_batch(cfg);
  MetricsReport report = compute_metrics(batch.records, batch.schedule.get(), cfg);
  report.n_failures = int(batch.failures.size());

  const fs::path dir = fresh_dir("sgmpc_harness_recompute");
  emit_outputs(batch, report, cfg, dir.string());

  const auto records = read_records((dir / "records.ndjson").string());
  REQUIRE(records.size() == batch.records.size());
  CHECK(records.front().config_hash == config_hash(cfg));
  const auto schedule = schedule_for(cfg);
  const MetricsReport again = compute_metrics(records, schedule.get(), cfg);
  CHECK(metrics_csv(again, cfg) == slurp(dir / "metrics.csv"));
}

TEST_CASE("same seed gives byte-identical outputs") {
  ExperimentConfig cfg = small_config();
  cfg.n_trajectories = 4;
  cfg.plant.T = 10;

  const fs::path da = fresh_dir("sgmpc_harness_det_a");
  const fs::path db = fresh_dir("sgmpc_harness_det_b");
  for (const auto& dir : {da, db}) {
    const BatchResult batch = run_batch(cfg);
    MetricsReport report =
        compute_metrics(batch.records, batch.schedule.get(), cfg);
    report.n_failures = int(batch.failures.size());
    emit_outputs(batch, report, cfg, dir.string());
  }
  CHECK(slurp(da / "records.ndjson") == slurp(db / "records.ndjson"));
  CHECK(slurp(da / "metrics.csv") == slurp(db / "metrics.csv"));
}

TEST_CASE("a noiseless run tracks the nominal plan exactly") {
  ExperimentConfig cfg = default_config();
  cfg.n_trajectories = 1;
  cfg.plots = false;
  cfg.plant.T = 30;
  cfg.plant.breathing.amplitude.resize(0);
  cfg.plant.force.scale = Eigen::VectorXd::Zero(5);
  cfg.plant.sensor.epsilon.scale = Eigen::VectorXd::Zero(5);
  cfg.plant.sensor.bias_outside = Eigen::VectorXd::Zero(5);
  cfg.plant.budget.W =
      sets::Zonotope::box(Eigen::VectorXd::Zero(5),
                          Eigen::VectorXd::Constant(5, 1e-9));
  cfg.plant.budget.M =
      sets::Zonotope::box(Eigen::VectorXd::Zero(5),
                          Eigen::VectorXd::Constant(5, 1e-9));
  cfg.plant.budget.Sigma_eps = 1e-12 * Eigen::MatrixXd::Identity(5, 5);

  const BatchResult batch = run_batch(cfg);
  REQUIRE(batch.records.size() == 1);
  const auto& rec = batch.records.front();
  CHECK((rec.x - rec.z).cwiseAbs().maxCoeff() < 1e-12);

  const MetricsReport r =
      compute_metrics(batch.records, batch.schedule.get(), cfg);
  CHECK(r.acp == doctest::Approx(1.0));
  CHECK(r.break_ratio == doctest::Approx(0.0));
  CHECK(std::abs(rec.x(0, cfg.plant.T) + cfg.controller.standoff) < 1e-3);
  CHECK(r.gr_counts[0] == 1);  // grade A
  CHECK(r.distance_mean_mm < 0.0);
}

TEST_CASE("outline points lie on the projected set boundary") {
  const ExperimentConfig cfg = small_config();
  const auto schedule = schedule_for(cfg);
  REQUIRE(schedule != nullptr);
  const sets::SetExpr flat = project2(schedule->at(5).total, 1, 6);
  const auto ring = set_outline(flat, 32);
  REQUIRE(ring.size() >= 32);
  for (const auto& p : ring) {
    const auto res = sets::contains(flat, Eigen::Vector2d(p));
    CHECK(res.gauge == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("csv renders dashes where metrics are undefined") {
  ExperimentConfig cfg = default_config();
  cfg.controller.kind = controller::ControllerKind::kPosition;
  const MetricsReport empty = compute_metrics({}, nullptr, cfg);
  const std::string csv = metrics_csv(empty, cfg);
  CHECK(csv.find("position,0,0,-,-,-,") != std::string::npos);

  std::vector<plant::TrajectoryRecord> one{flat_record(2)};
  const MetricsReport no_schedule = compute_metrics(one, nullptr, cfg);
  CHECK(std::isnan(no_schedule.acp));
  CHECK(no_schedule.feasibility_rate == doctest::Approx(1.0));
}

TEST_CASE("cadence phases put the correction at the end of the period") {
  const Eigen::MatrixXd K = -0.5 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd L = 0.9 * Eigen::MatrixXd::Identity(2, 2);
  const auto phases = cadence_phases(K, L, 3);
  REQUIRE(phases.size() == 3);
  CHECK(phases[0].Be3.cwiseAbs().maxCoeff() == 0.0);
  CHECK(phases[1].Be3.cwiseAbs().maxCoeff() == 0.0);
  CHECK(phases[2].Be3.cwiseAbs().maxCoeff() > 0.0);
  CHECK(cadence_phases(K, L, 1).size() == 1);
}

TEST_CASE("records file errors carry the line number") {
  const fs::path dir = fresh_dir("sgmpc_harness_badfile");
  fs::create_directories(dir);
  const fs::path p = dir / "records.ndjson";
  {
    std::ofstream out(p);
    out << to_json(flat_record(1)).dump() << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(read_records(p.string()), doctest::Contains("line 2"),
                       std::runtime_error);
}

TEST_SUITE_END();
