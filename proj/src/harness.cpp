#include "sgmpc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "sgmpc/constraints.hpp"
#include "sgmpc/controller.hpp"

namespace sgmpc::harness {
namespace {

using controller::ControllerKind;
using plant::TrajectoryRecord;
using uncertainty::BudgetSegment;

constexpr std::uint64_t kIdentStreamBase = 1ull << 32;  // off the run streams
constexpr std::uint64_t kIouTag = 0x494f55ULL;

struct Setup {
  controller::Gains gains;
  std::vector<BudgetSegment> segments;
  std::shared_ptr<const uncertainty::PRSSchedule> schedule;
  controller::MpcProblem prob;
  std::uint64_t hash = 0;
  std::string schedule_id;
};

std::vector<uncertainty::EstimationData> identification_runs(
    const plant::PlantConfig& pc, int n_runs, std::uint64_t seed) {
  const Eigen::Index n = pc.dim();
  std::vector<uncertainty::EstimationData> runs;
  runs.reserve(std::size_t(n_runs));
  const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < n_runs; ++r) {
    Rng rng = Rng::stream(seed, kIdentStreamBase + std::uint64_t(r));
    uncertainty::EstimationData d;
    d.x.resize(n, pc.T + 1);
    d.u = Eigen::MatrixXd::Zero(n, pc.T);
    d.y = Eigen::MatrixXd::Zero(n, pc.T + 1);
    d.has_y.assign(std::size_t(pc.T) + 1, false);
    Eigen::VectorXd x = plant::draw_initial_state(pc, rng);
    for (int t = 0; t <= pc.T; ++t) {
      d.x.col(t) = x;
      if (const auto y = plant::sense(x, t, pc, rng)) {
        d.y.col(t) = *y;
        d.has_y[std::size_t(t)] = true;
      }
      if (t < pc.T) x = plant::plant_step(x, u0, t, pc, rng).x_next;
    }
    runs.push_back(std::move(d));
  }
  return runs;
}

std::vector<BudgetSegment> resolve_segments(const ExperimentConfig& cfg) {
  if (!cfg.estimate)
    return {BudgetSegment{0, cfg.plant.budget}};
  const auto& pc = cfg.plant;
  std::vector<int> group_starts{0};
  if (pc.sensor.bias_kind == plant::SensorConfig::BiasKind::kPiecewise &&
      pc.group_boundary > 0 && pc.group_boundary < pc.T)
    group_starts.push_back(pc.group_boundary);
  const auto runs = identification_runs(pc, cfg.estimate->runs, cfg.seed);
  const Eigen::Index n = pc.dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const auto est = uncertainty::estimate_noise_budget(
      runs, I, I, I, group_starts, cfg.estimate->segments,
      cfg.estimate->inflation, cfg.estimate->mgf_tol);
  std::vector<BudgetSegment> segments;
  for (std::size_t g = 0; g < group_starts.size(); ++g)
    segments.push_back(BudgetSegment{
        group_starts[g],
        uncertainty::NoiseBudget{est.W, est.M_groups[g], est.Sigma_groups[g]}});
  return segments;
}

Setup make_schedule_setup(const ExperimentConfig& cfg) {
  const Eigen::Index n = cfg.plant.dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  Setup s;
  s.hash = config_hash(cfg);
  const auto& cc = cfg.controller;
  s.schedule_id = controller::to_string(cc.kind) + "/k=" +
                  std::to_string(cfg.plant.sensor.every_k);
  s.gains = controller::design_gains(I, I, cc.q_diag.asDiagonal(),
                                     cc.r_scale * I, cc.observer_gain * I);
  if (cc.kind == ControllerKind::kPosition) return s;

  s.segments = resolve_segments(cfg);
  for (auto& seg : s.segments)
    seg.budget = controller::baseline_budget(cc.kind, seg.budget, cc.robust_k);

  const auto phases =
      cadence_phases(s.gains.K, s.gains.L, cfg.plant.sensor.every_k);
  uncertainty::PrsOptions opt;
  opt.delta = cc.delta;
  // the initial pair (x_hat - x, x - z) = (-d, d) needs sqrt(2) sigma0 per
  // direction of the joint error state
  opt.sigma0 = std::sqrt(2.0) * cfg.plant.sigma0;
  opt.chi_square_radius = controller::baseline_uses_chi_square(cc.kind);
  s.schedule = std::make_shared<const uncertainty::PRSSchedule>(
      uncertainty::build_prs_schedule(phases, s.segments, opt));
  return s;
}

Setup make_setup(const ExperimentConfig& cfg) {
  Setup s = make_schedule_setup(cfg);
  const auto& cc = cfg.controller;
  if (cc.kind == ControllerKind::kPosition) return s;
  const Eigen::Index n = cfg.plant.dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

  Eigen::VectorXd goal = Eigen::VectorXd::Zero(n);
  goal(0) = -cc.standoff;
  std::vector<sets::SetExpr> steadies;
  for (int ph = 0; ph < s.schedule->period(); ++ph)
    steadies.push_back(s.schedule->steady_entry(ph).total);
  controller::MpcProblem prob;
  prob.H = cc.horizon;
  prob.goal = goal;
  prob.funnel = cc.funnel;
  prob.box = cc.box;
  prob.terminal = controller::build_terminal_set(I, I, s.gains, steadies, goal,
                                                 prob.funnel, prob.box);
  prob.qp_options.eps = cc.qp_eps;
  prob.max_sqp_iterations = cc.max_sqp_iterations;
  prob.validate(n);
  s.prob = std::move(prob);
  return s;
}

TrajectoryRecord simulate_one(const ExperimentConfig& cfg, const Setup& setup,
                              int index, std::atomic<bool>* infeasible_t0) {
  const auto& pc = cfg.plant;
  const Eigen::Index n = pc.dim();
  const int T = pc.T;
  TrajectoryRecord rec;
  rec.x.resize(n, T + 1);
  rec.x_hat.resize(n, T + 1);
  rec.z.resize(n, T + 1);
  rec.u.resize(n, T);
  rec.v.resize(n, T);
  rec.y = Eigen::MatrixXd::Zero(n, T + 1);
  rec.has_y.assign(std::size_t(T) + 1, false);
  rec.feasible.assign(std::size_t(T), false);
  rec.fallback.assign(std::size_t(T), false);
  rec.schedule_id = setup.schedule_id;
  rec.seed = std::uint64_t(index);
  rec.config_hash = setup.hash;

  Rng rng = Rng::stream(cfg.seed, std::uint64_t(index));
  Eigen::VectorXd x = plant::draw_initial_state(pc, rng);
  const bool position = cfg.controller.kind == ControllerKind::kPosition;
  auto st = controller::make_controller_state(pc.mu0);
  Eigen::VectorXd x_hat = pc.mu0;  // position-baseline observer state
  rec.x.col(0) = x;
  rec.x_hat.col(0) = pc.mu0;
  rec.z.col(0) = pc.mu0;

  for (int t = 0; t < T; ++t) {
    auto y = plant::sense(x, t, pc, rng);
    if (y) {
      rec.y.col(t) = *y;
      rec.has_y[std::size_t(t)] = true;
    }
    // the schedule's initial entry carries no correction: the first sample
    // the controller consumes is the one at t = every_k
    const std::optional<Eigen::VectorXd> y_ctl = t > 0 ? y : std::nullopt;
    Eigen::VectorXd u;
    if (position) {
      if (y_ctl) x_hat += cfg.controller.observer_gain * (*y_ctl - x_hat);
      u = controller::position_control(x_hat, cfg.controller.funnel.u_bar,
                                       cfg.controller.feed_speed);
      rec.v.col(t) = u;
      rec.feasible[std::size_t(t)] = true;
      x_hat += u;
      rec.x_hat.col(t + 1) = x_hat;
      rec.z.col(t + 1) = x_hat;
    } else {
      const Eigen::VectorXd z_prev = st.z;
      const auto step = controller::control_step(st, y_ctl,
                                                 setup.schedule.get(),
                                                 setup.gains, setup.prob);
      u = step.u;
      rec.v.col(t) = st.z - z_prev;
      rec.feasible[std::size_t(t)] = step.diag.feasible;
      rec.fallback[std::size_t(t)] = step.diag.used_fallback;
      if (!step.diag.feasible && t == 0) infeasible_t0->store(true);
      rec.x_hat.col(t + 1) = st.x_hat;
      rec.z.col(t + 1) = st.z;
    }
    rec.u.col(t) = u;
    const auto out = plant::plant_step(x, u, t, pc, rng);
    if (out.clipped) rec.clip_events.push_back(t);
    x = out.x_next;
    rec.x.col(t + 1) = x;
  }
  if (const auto y = plant::sense(x, T, pc, rng)) {
    rec.y.col(T) = *y;
    rec.has_y[std::size_t(T)] = true;
  }
  rec.validate();
  return rec;
}

double sample_std(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (const double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / double(v.size() - 1));
}

}  // namespace

std::vector<uncertainty::ErrorSystem> cadence_phases(const Eigen::MatrixXd& K,
                                                     const Eigen::MatrixXd& L,
                                                     int every_k) {
  if (every_k < 1)
    throw std::invalid_argument("cadence_phases: every_k must be >= 1");
  const Eigen::Index n = K.cols();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd L0 = Eigen::MatrixXd::Zero(L.rows(), L.cols());
  std::vector<uncertainty::ErrorSystem> phases;
  for (int j = 0; j < every_k; ++j)
    phases.push_back(uncertainty::assemble_error_system(
        I, I, I, K, j == every_k - 1 ? L : L0));
  return phases;
}

std::shared_ptr<const uncertainty::PRSSchedule> schedule_for(
    const ExperimentConfig& cfg) {
  cfg.validate();
  return make_schedule_setup(cfg).schedule;
}

BatchResult run_batch(const ExperimentConfig& cfg) {
  cfg.validate();
  BatchResult out;
  Setup setup;
  try {
    setup = make_setup(cfg);
  } catch (const std::runtime_error& e) {
    // empty terminal set: the tightened problem is infeasible by construction
    out.infeasible_at_t0 = true;
    out.failures.push_back({-1, e.what()});
    return out;
  }
  out.schedule = setup.schedule;
  out.segments = setup.segments;

  const int N = cfg.n_trajectories;
  std::vector<TrajectoryRecord> slots(static_cast<std::size_t>(N));
  std::vector<char> ok(static_cast<std::size_t>(N), 0);
  std::vector<RunFailure> failures;
  std::mutex failures_mutex;
  std::atomic<bool> infeasible_t0{false};
  std::atomic<int> next{0};

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 4;
  const int n_threads =
      std::max(1, std::min(cfg.threads > 0 ? cfg.threads : int(hw), N));
  const auto worker = [&] {
    for (int i = next.fetch_add(1); i < N; i = next.fetch_add(1)) {
      try {
        slots[std::size_t(i)] = simulate_one(cfg, setup, i, &infeasible_t0);
        ok[std::size_t(i)] = 1;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failures_mutex);
        failures.push_back({i, e.what()});
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::sort(failures.begin(), failures.end(),
            [](const RunFailure& a, const RunFailure& b) { return a.index < b.index; });
  out.failures.insert(out.failures.end(), failures.begin(), failures.end());
  out.infeasible_at_t0 = infeasible_t0.load();
  out.records.reserve(std::size_t(N));
  for (int i = 0; i < N; ++i)
    if (ok[std::size_t(i)]) out.records.push_back(std::move(slots[std::size_t(i)]));
  return out;
}

MetricsReport compute_metrics(const std::vector<TrajectoryRecord>& records,
                              const uncertainty::PRSSchedule* schedule,
                              const ExperimentConfig& cfg) {
  MetricsReport r;
  r.n_runs = int(records.size());
  if (records.empty()) return r;
  const int T = records.front().horizon();
  const Eigen::Index n = records.front().x.rows();

  r.infeasible_at_t0 = false;
  long long feasible_steps = 0;
  for (const auto& rec : records) {
    if (rec.horizon() != T || rec.x.rows() != n)
      throw std::invalid_argument("compute_metrics: mixed record shapes");
    if (!rec.feasible.empty() && !rec.feasible.front()) r.infeasible_at_t0 = true;
    for (int t = 0; t < T; ++t) {
      feasible_steps += rec.feasible[std::size_t(t)] ? 1 : 0;
      r.fallback_count += rec.fallback[std::size_t(t)] ? 1 : 0;
    }
  }
  r.feasibility_rate =
      double(feasible_steps) / (double(records.size()) * double(T));

  if (schedule != nullptr) {
    long long inside_total = 0;
    double cov_min = 1.0, cov_max = 0.0;
    Eigen::VectorXd xi(2 * n);
    for (int t = 0; t <= T; ++t) {
      const sets::SetExpr& set = schedule->at(t).total;
      long long inside = 0;
      for (const auto& rec : records) {
        xi.head(n) = rec.x.col(t) - rec.z.col(t);
        if (t < T)
          xi.tail(n) = rec.u.col(t) - rec.v.col(t);
        else
          xi.tail(n).setZero();
        if (sets::contains(set, xi).verdict == sets::Membership::kInside)
          ++inside;
      }
      inside_total += inside;
      const double cov = double(inside) / double(records.size());
      cov_min = std::min(cov_min, cov);
      cov_max = std::max(cov_max, cov);
    }
    r.acp = double(inside_total) / (double(records.size()) * double(T + 1));
    r.mcp_min = cov_min;
    r.mcp_max = cov_max;
  }

  if (n == 5) {
    const auto& fp = cfg.controller.funnel;
    int breaks = 0;
    std::vector<double> breach_mm, ious;
    const constraints::CylinderPose planned{
        Eigen::Vector3d::Zero(), constraints::direction_vector(0.0, 0.0)};
    for (const auto& rec : records) {
      if ((rec.x.row(0).array() > 0.0).any()) ++breaks;
      const Eigen::Vector3d p = rec.x.col(T).head<3>();
      const double th = rec.x(3, T), ph = rec.x(4, T);
      double worst = p.x();
      for (const double d :
           {constraints::signed_breach_distance(p, fp),
            constraints::signed_breach_distance(
                constraints::head_point(p, th, ph, fp.screw_length), fp)})
        // the infinite flag marks an empty funnel slice: a full breach
        worst = std::max(worst, std::isinf(d) ? 0.01 : d);
      r.gr_counts[std::size_t(int(constraints::gr_grade(worst)))] += 1;
      breach_mm.push_back(1000.0 * worst);
      Rng iou_rng = Rng::stream(rec.config_hash ^ kIouTag, rec.seed);
      const constraints::CylinderPose actual{
          p, constraints::direction_vector(th, ph)};
      ious.push_back(constraints::cylinder_iou(actual, planned,
                                               cfg.metrics.screw_radius,
                                               fp.screw_length, iou_rng,
                                               cfg.metrics.iou_samples)
                         .iou);
    }
    r.break_ratio = double(breaks) / double(records.size());
    double mean = 0.0;
    for (const double b : breach_mm) mean += b;
    mean /= double(breach_mm.size());
    r.distance_mean_mm = mean;
    r.distance_std_mm = sample_std(breach_mm, mean);
    double imean = 0.0;
    for (const double v : ious) imean += v;
    imean /= double(ious.size());
    r.iou_mean = imean;
    r.iou_std_error = sample_std(ious, imean) / std::sqrt(double(ious.size()));
  }
  return r;
}

}  // namespace sgmpc::harness
