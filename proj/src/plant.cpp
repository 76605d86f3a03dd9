#include "sgmpc/plant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sgmpc::plant {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::VectorXd pad_to(const Eigen::VectorXd& v, Eigen::Index n) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  const Eigen::Index k = std::min(n, v.size());
  out.head(k) = v.head(k);
  return out;
}

}  // namespace

Eigen::VectorXd Breathing::displacement(double t, Eigen::Index n) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (from_file()) {
    const double tc = std::clamp(t, time_s.front(), time_s.back());
    const auto it = std::upper_bound(time_s.begin(), time_s.end(), tc);
    Eigen::Vector3d val;
    if (it == time_s.begin()) {
      val = samples.col(0);
    } else if (it == time_s.end()) {
      val = samples.col(samples.cols() - 1);
    } else {
      const Eigen::Index i1 = it - time_s.begin();
      const Eigen::Index i0 = i1 - 1;
      const double span = time_s[std::size_t(i1)] - time_s[std::size_t(i0)];
      const double lam = (tc - time_s[std::size_t(i0)]) / span;
      val = (1.0 - lam) * samples.col(i0) + lam * samples.col(i1);
    }
    const Eigen::Index k = std::min<Eigen::Index>(3, n);
    out.head(k) = val.head(k);
  } else if (amplitude.size() > 0) {
    const Eigen::Index k = std::min(amplitude.size(), n);
    out.head(k) =
        amplitude.head(k) * std::sin(2.0 * kPi * t / period + phase);
  }
  return out;
}

Breathing load_waveform(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("load_waveform: cannot open " + path);
  const auto strip = [](std::string s) {
    s.erase(std::remove_if(s.begin(), s.end(),
                           [](char c) {
                             return c == '\r' || c == ' ' || c == '\t';
                           }),
            s.end());
    return s;
  };
  std::string line;
  if (!std::getline(in, line) || strip(line) != "time_s,dx,dy,dz")
    throw std::runtime_error("load_waveform: expected header time_s,dx,dy,dz");
  std::vector<double> ts;
  std::vector<Eigen::Vector3d> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip(line);
    if (s.empty()) continue;
    double t = 0, dx = 0, dy = 0, dz = 0;
    char extra = 0;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf%c", &t, &dx, &dy, &dz,
                    &extra) != 4)
      throw std::runtime_error("load_waveform: malformed row at line " +
                               std::to_string(lineno));
    if (!ts.empty() && t <= ts.back())
      throw std::runtime_error("load_waveform: time must increase at line " +
                               std::to_string(lineno));
    ts.push_back(t);
    rows.emplace_back(dx, dy, dz);
  }
  if (ts.empty()) throw std::runtime_error("load_waveform: no samples");
  Breathing br;
  br.time_s = std::move(ts);
  br.samples.resize(3, Eigen::Index(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    br.samples.col(Eigen::Index(i)) = rows[i];
  return br;
}

void PlantConfig::validate() const {
  const Eigen::Index n = mu0.size();
  if (n < 1) throw std::invalid_argument("plant: mu0 must be non-empty");
  if (T < 1) throw std::invalid_argument("plant: T must be at least 1");
  if (dt <= 0.0) throw std::invalid_argument("plant: dt must be positive");
  if (sigma0 < 0.0) throw std::invalid_argument("plant: sigma0 negative");
  budget.validate(n, n);
  if (sensor.every_k < 1)
    throw std::invalid_argument("plant: sensor cadence must be >= 1");
  if (sensor.bias_period <= 0.0)
    throw std::invalid_argument("plant: bias period must be positive");
  if (breathing.period <= 0.0)
    throw std::invalid_argument("plant: breathing period must be positive");
  if (breathing.from_file() &&
      breathing.samples.cols() != Eigen::Index(breathing.time_s.size()))
    throw std::invalid_argument("plant: waveform sample count mismatch");
  if (force.dim() > 0) {
    force.validate();
    if (force.dim() != n)
      throw std::invalid_argument("plant: force dimension mismatch");
  }
  if (sensor.epsilon.dim() > 0) {
    sensor.epsilon.validate();
    if (sensor.epsilon.dim() != n)
      throw std::invalid_argument("plant: sensor noise dimension mismatch");
    const Eigen::MatrixXd gap =
        budget.Sigma_eps - sensor.epsilon.variance_proxy();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gap);
    const double top =
        std::max(1.0, budget.Sigma_eps.cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < -1e-12 * top)
      throw std::invalid_argument(
          "plant: declared Sigma_eps does not dominate the sensor noise "
          "proxy");
  }

  // every bias value the sensor can realize must lie in the declared M
  std::vector<Eigen::VectorXd> bias_candidates;
  switch (sensor.bias_kind) {
    case SensorConfig::BiasKind::kConstant:
      bias_candidates.push_back(pad_to(sensor.bias_outside, n));
      break;
    case SensorConfig::BiasKind::kPiecewise:
      bias_candidates.push_back(pad_to(sensor.bias_outside, n));
      bias_candidates.push_back(pad_to(sensor.bias_inside, n));
      break;
    case SensorConfig::BiasKind::kSinusoidInM:
      bias_candidates.push_back(budget.M.center +
                                pad_to(sensor.bias_outside, n));
      bias_candidates.push_back(budget.M.center -
                                pad_to(sensor.bias_outside, n));
      break;
  }
  const sets::SetExpr m_set = sets::SetExpr::from(budget.M);
  for (const auto& b : bias_candidates)
    if (sets::contains(m_set, b, 1e-9).verdict != sets::Membership::kInside)
      throw std::invalid_argument(
          "plant: configured bias cannot stay inside the declared M");

  // breathing difference plus the force bound must fit in W per axis (a
  // necessary condition in general, exact for the axis-aligned W used here);
  // unbounded force kinds rely on the logged runtime clipping instead
  const Eigen::VectorXd bound =
      force.dim() > 0 ? force.hard_bound() : Eigen::VectorXd::Zero(n);
  if (bound.allFinite()) {
    const Eigen::VectorXd half =
        budget.W.generators.size() > 0
            ? budget.W.generators.cwiseAbs().rowwise().sum().eval()
            : Eigen::VectorXd::Zero(n).eval();
    for (int t = 0; t < T; ++t) {
      const Eigen::VectorXd diff =
          breathing.displacement((t + 1) * dt, n) -
          breathing.displacement(t * dt, n);
      const double excess =
          ((diff - budget.W.center).cwiseAbs() + bound - half).maxCoeff();
      if (excess > 1e-12)
        throw std::invalid_argument(
            "plant: breathing difference plus force bound exceeds the "
            "declared W (by " +
            std::to_string(excess) + ")");
    }
  }
}

StepOutcome plant_step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                       int t, const PlantConfig& cfg, Rng& rng) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd w = cfg.breathing.displacement((t + 1) * cfg.dt, n) -
                      cfg.breathing.displacement(t * cfg.dt, n);
  if (cfg.force.dim() > 0) w += cfg.force.sample(rng);

  StepOutcome out;
  const sets::SetExpr w_set = sets::SetExpr::from(cfg.budget.W);
  if (sets::contains(w_set, w, 1e-9).verdict != sets::Membership::kInside) {
    out.clipped = true;
    const Eigen::VectorXd c = cfg.budget.W.center;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (sets::contains(w_set, c + mid * (w - c), 1e-9).verdict ==
          sets::Membership::kInside)
        lo = mid;
      else
        hi = mid;
    }
    w = c + lo * (w - c);
  }
  out.w = w;
  out.x_next = x + u + w;
  return out;
}

Eigen::VectorXd bias_at(int t, const PlantConfig& cfg) {
  const Eigen::Index n = cfg.dim();
  switch (cfg.sensor.bias_kind) {
    case SensorConfig::BiasKind::kConstant:
      return pad_to(cfg.sensor.bias_outside, n);
    case SensorConfig::BiasKind::kPiecewise:
      return pad_to(t < cfg.group_boundary ? cfg.sensor.bias_outside
                                           : cfg.sensor.bias_inside,
                    n);
    case SensorConfig::BiasKind::kSinusoidInM:
      return cfg.budget.M.center +
             pad_to(cfg.sensor.bias_outside, n) *
                 std::sin(2.0 * kPi * t * cfg.dt / cfg.sensor.bias_period);
  }
  return Eigen::VectorXd::Zero(n);
}

std::optional<Eigen::VectorXd> sense(const Eigen::VectorXd& x, int t,
                                     const PlantConfig& cfg, Rng& rng) {
  if (t % cfg.sensor.every_k != 0) return std::nullopt;
  const Eigen::VectorXd m = bias_at(t, cfg);
  if (sets::contains(sets::SetExpr::from(cfg.budget.M), m, 1e-9).verdict ==
      sets::Membership::kOutside)
    throw std::logic_error(
        "sense: realized bias is outside the declared M; the configured "
        "budget is wrong");
  Eigen::VectorXd y = x + m;
  if (cfg.sensor.epsilon.dim() > 0) y += cfg.sensor.epsilon.sample(rng);
  return y;
}

Eigen::VectorXd draw_initial_state(const PlantConfig& cfg, Rng& rng) {
  Eigen::VectorXd x0 = cfg.mu0;
  if (cfg.sigma0 > 0.0) x0 += cfg.sigma0 * rng.normal_vector(cfg.dim());
  return x0;
}

void TrajectoryRecord::validate() const {
  const Eigen::Index n = x.rows();
  const Eigen::Index T = u.cols();
  const auto want = [&](bool ok, const char* what) {
    if (!ok)
      throw std::invalid_argument(std::string("TrajectoryRecord: ") + what);
  };
  want(n > 0 && T > 0, "empty record");
  want(x.cols() == T + 1, "x length");
  want(x_hat.rows() == n && x_hat.cols() == T + 1, "x_hat shape");
  want(z.rows() == n && z.cols() == T + 1, "z shape");
  want(v.rows() == n && v.cols() == T, "v shape");
  want(u.rows() == n, "u shape");
  want(y.rows() == n && y.cols() == T + 1, "y shape");
  want(Eigen::Index(has_y.size()) == T + 1, "has_y length");
  want(Eigen::Index(feasible.size()) == T, "feasible length");
  want(Eigen::Index(fallback.size()) == T, "fallback length");
  for (const int t : clip_events) want(t >= 0 && t < int(T), "clip index");
}

namespace {

nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("record: matrix expected");
  if (j.empty()) return {};
  Eigen::MatrixXd m(Eigen::Index(j.size()), Eigen::Index(j[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = j[std::size_t(i)];
    if (Eigen::Index(row.size()) != m.cols())
      throw std::invalid_argument("record: ragged matrix");
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(i, c) = row[std::size_t(c)].get<double>();
  }
  return m;
}

nlohmann::json bools_to_json(const std::vector<bool>& v) {
  nlohmann::json out = nlohmann::json::array();
  for (const bool b : v) out.push_back(b);
  return out;
}

std::vector<bool> bools_from_json(const nlohmann::json& j) {
  std::vector<bool> out;
  out.reserve(j.size());
  for (const auto& b : j) out.push_back(b.get<bool>());
  return out;
}

}  // namespace

nlohmann::json to_json(const TrajectoryRecord& r) {
  return nlohmann::json{{"x", mat_to_json(r.x)},
                        {"x_hat", mat_to_json(r.x_hat)},
                        {"z", mat_to_json(r.z)},
                        {"u", mat_to_json(r.u)},
                        {"v", mat_to_json(r.v)},
                        {"y", mat_to_json(r.y)},
                        {"has_y", bools_to_json(r.has_y)},
                        {"feasible", bools_to_json(r.feasible)},
                        {"fallback", bools_to_json(r.fallback)},
                        {"clip_events", r.clip_events},
                        {"schedule_id", r.schedule_id},
                        {"seed", r.seed},
                        {"config_hash", r.config_hash}};
}

TrajectoryRecord record_from_json(const nlohmann::json& j) {
  TrajectoryRecord r;
  r.x = mat_from_json(j.at("x"));
  r.x_hat = mat_from_json(j.at("x_hat"));
  r.z = mat_from_json(j.at("z"));
  r.u = mat_from_json(j.at("u"));
  r.v = mat_from_json(j.at("v"));
  r.y = mat_from_json(j.at("y"));
  r.has_y = bools_from_json(j.at("has_y"));
  r.feasible = bools_from_json(j.at("feasible"));
  r.fallback = bools_from_json(j.at("fallback"));
  r.clip_events = j.at("clip_events").get<std::vector<int>>();
  r.schedule_id = j.at("schedule_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::uint64_t>();
  r.validate();
  return r;
}

}  // namespace sgmpc::plant
