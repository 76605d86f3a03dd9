#include "sgmpc/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace sgmpc::harness {
namespace {

using nlohmann::json;
using plant::SensorConfig;
using uncertainty::NoiseModel;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + path + ": " + what);
}

const json& expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  return j;
}

void reject_unknown(const json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  expect_object(j, path);
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) fail(path, "unknown key \"" + key + "\"");
}

double to_num(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int to_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool to_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string to_str(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

Eigen::VectorXd to_vec(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Eigen::VectorXd v(j.size());
  Eigen::Index i = 0;
  for (const auto& e : j) v(i++) = to_num(e, path);
  return v;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

// ---- noise models ----------------------------------------------------------

const char* kind_name(NoiseModel::Kind k) {
  switch (k) {
    case NoiseModel::Kind::kGaussian: return "gaussian";
    case NoiseModel::Kind::kTruncatedGaussian: return "truncated_gaussian";
    case NoiseModel::Kind::kUniform: return "uniform";
    case NoiseModel::Kind::kRademacher: return "rademacher";
  }
  return "gaussian";
}

NoiseModel::Kind noise_kind(const std::string& s, const std::string& path) {
  if (s == "gaussian") return NoiseModel::Kind::kGaussian;
  if (s == "truncated_gaussian") return NoiseModel::Kind::kTruncatedGaussian;
  if (s == "uniform") return NoiseModel::Kind::kUniform;
  if (s == "rademacher") return NoiseModel::Kind::kRademacher;
  fail(path, "unknown noise kind \"" + s + "\"");
}

void parse_noise(const json& j, const std::string& path, NoiseModel* m) {
  reject_unknown(j, path, {"kind", "scale", "trunc_k"});
  if (j.contains("kind")) m->kind = noise_kind(to_str(j["kind"], path + ".kind"), path + ".kind");
  if (j.contains("scale")) m->scale = to_vec(j["scale"], path + ".scale");
  if (j.contains("trunc_k")) m->trunc_k = to_num(j["trunc_k"], path + ".trunc_k");
}

json noise_json(const NoiseModel& m) {
  return json{{"kind", kind_name(m.kind)},
              {"scale", vec_json(m.scale)},
              {"trunc_k", m.trunc_k}};
}

const char* bias_name(SensorConfig::BiasKind k) {
  switch (k) {
    case SensorConfig::BiasKind::kConstant: return "constant";
    case SensorConfig::BiasKind::kSinusoidInM: return "sinusoid_in_m";
    case SensorConfig::BiasKind::kPiecewise: return "piecewise";
  }
  return "constant";
}

SensorConfig::BiasKind bias_kind(const std::string& s, const std::string& path) {
  if (s == "constant") return SensorConfig::BiasKind::kConstant;
  if (s == "sinusoid_in_m") return SensorConfig::BiasKind::kSinusoidInM;
  if (s == "piecewise") return SensorConfig::BiasKind::kPiecewise;
  fail(path, "unknown bias kind \"" + s + "\"");
}

// ---- zonotope boxes --------------------------------------------------------

void parse_box_set(const json& j, const std::string& path, sets::Zonotope* z) {
  reject_unknown(j, path, {"center", "half"});
  Eigen::VectorXd center = z->center, half;
  if (j.contains("center")) center = to_vec(j["center"], path + ".center");
  if (j.contains("half")) {
    half = to_vec(j["half"], path + ".half");
  } else {
    half = z->generators.cwiseAbs().rowwise().sum();
    if (center.size() != half.size()) fail(path, "center/half size mismatch");
  }
  if (center.size() != half.size()) fail(path, "center/half size mismatch");
  *z = sets::Zonotope::box(center, half);
}

json box_set_json(const sets::Zonotope& z) {
  return json{{"center", vec_json(z.center)},
              {"half", vec_json(z.generators.cwiseAbs().rowwise().sum())}};
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentConfig default_config() {
  ExperimentConfig c;
  const int n = 5;
  c.name = "drilling";
  c.n_trajectories = 100;
  c.seed = 1;
  c.out_dir = "out";

  auto& p = c.plant;
  p.T = 200;
  p.dt = 0.1;
  p.group_boundary = 140;
  p.breathing.amplitude = Eigen::Vector3d(0.002, 0.0, 0.0);
  p.breathing.period = 4.0;
  p.breathing.phase = 0.0;
  p.force.kind = NoiseModel::Kind::kUniform;
  p.force.scale = Eigen::VectorXd::Constant(n, 1e-5);
  p.sensor.every_k = 1;
  p.sensor.bias_kind = SensorConfig::BiasKind::kConstant;
  p.sensor.bias_outside = (Eigen::VectorXd(n) << 1e-4, 5e-5, -5e-5, 0, 0).finished();
  p.sensor.bias_inside = Eigen::VectorXd::Zero(n);
  p.sensor.bias_period = 8.0;
  p.sensor.epsilon.kind = NoiseModel::Kind::kTruncatedGaussian;
  p.sensor.epsilon.scale = Eigen::VectorXd::Constant(n, 2.5e-4);
  p.sensor.epsilon.trunc_k = 3.0;
  p.mu0 = (Eigen::VectorXd(n) << -0.046, 0.002, -0.002, 0.0, 0.0).finished();
  p.sigma0 = 0.0;
  p.budget.W = sets::Zonotope::box(
      Eigen::VectorXd::Zero(n),
      (Eigen::VectorXd(n) << 3.5e-4, 2e-5, 2e-5, 2e-5, 2e-5).finished());
  p.budget.M = sets::Zonotope::box(
      Eigen::VectorXd::Zero(n),
      (Eigen::VectorXd(n) << 2e-4, 1e-4, 1e-4, 1e-4, 1e-4).finished());
  p.budget.Sigma_eps = 1.225e-7 * Eigen::MatrixXd::Identity(n, n);

  auto& k = c.controller;
  k.q_diag = (Eigen::VectorXd(n) << 100, 100, 100, 10, 10).finished();
  k.funnel.u_bar =
      (Eigen::VectorXd(n) << 0.01, 0.005, 0.005, 0.2, 0.2).finished();
  k.box.lo = (Eigen::VectorXd(n) << -0.08, -0.02, -0.02, -0.45, -0.45).finished();
  k.box.hi = (Eigen::VectorXd(n) << -0.001, 0.02, 0.02, 0.45, 0.45).finished();
  return c;
}

void ExperimentConfig::validate() const {
  if (n_trajectories < 1) fail("trajectories", "must be >= 1");
  if (threads < 0) fail("threads", "must be >= 0");
  plant.validate();
  const Eigen::Index n = plant.dim();
  if (controller.q_diag.size() != n) fail("controller.q_diag", "size mismatch");
  if (controller.horizon < 1) fail("controller.horizon", "must be >= 1");
  if (controller.delta <= 0 || controller.delta >= 1)
    fail("controller.delta", "must lie in (0, 1)");
  if (controller.standoff <= 0) fail("controller.standoff", "must be > 0");
  if (controller.kind != controller::ControllerKind::kPosition) {
    if (n != 5) fail("plant", "reachable-set controllers need a 5-dim state");
    controller.funnel.validate();
    controller.box.validate();
    if (controller.funnel.u_bar.size() != n)
      fail("controller.funnel.u_bar", "size mismatch");
  }
  if (estimate) {
    if (estimate->runs < 2) fail("budget.estimate.runs", "must be >= 2");
    if (estimate->segments < 2) fail("budget.estimate.segments", "must be >= 2");
    if (estimate->inflation < 1.0) fail("budget.estimate.inflation", "must be >= 1");
  }
  if (metrics.screw_radius <= 0) fail("metrics.screw_radius", "must be > 0");
  if (metrics.iou_samples < 100) fail("metrics.iou_samples", "must be >= 100");
}

controller::ControllerKind controller_kind_from_string(const std::string& s) {
  using controller::ControllerKind;
  for (const auto k : {ControllerKind::kOurs, ControllerKind::kGaussian,
                       ControllerKind::kZeroMeanSubgaussian,
                       ControllerKind::kRobust, ControllerKind::kPosition})
    if (controller::to_string(k) == s) return k;
  fail("controller.kind", "unknown controller \"" + s + "\"");
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c = default_config();
  reject_unknown(j, "$", {"name", "trajectories", "seed", "out_dir", "plots",
                          "threads", "plant", "budget", "controller",
                          "metrics"});
  if (j.contains("name")) c.name = to_str(j["name"], "name");
  if (j.contains("trajectories"))
    c.n_trajectories = to_int(j["trajectories"], "trajectories");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) fail("seed", "expected an integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("out_dir")) c.out_dir = to_str(j["out_dir"], "out_dir");
  if (j.contains("plots")) c.plots = to_bool(j["plots"], "plots");
  if (j.contains("threads")) c.threads = to_int(j["threads"], "threads");

  if (j.contains("plant")) {
    const json& p = j["plant"];
    reject_unknown(p, "plant", {"T", "dt", "group_boundary", "breathing",
                                "force", "sensor", "initial"});
    if (p.contains("T")) c.plant.T = to_int(p["T"], "plant.T");
    if (p.contains("dt")) c.plant.dt = to_num(p["dt"], "plant.dt");
    if (p.contains("group_boundary"))
      c.plant.group_boundary = to_int(p["group_boundary"], "plant.group_boundary");
    if (p.contains("breathing")) {
      const json& b = p["breathing"];
      reject_unknown(b, "plant.breathing", {"amplitude", "period", "phase"});
      if (b.contains("amplitude"))
        c.plant.breathing.amplitude = to_vec(b["amplitude"], "plant.breathing.amplitude");
      if (b.contains("period"))
        c.plant.breathing.period = to_num(b["period"], "plant.breathing.period");
      if (b.contains("phase"))
        c.plant.breathing.phase = to_num(b["phase"], "plant.breathing.phase");
    }
    if (p.contains("force")) parse_noise(p["force"], "plant.force", &c.plant.force);
    if (p.contains("sensor")) {
      const json& s = p["sensor"];
      reject_unknown(s, "plant.sensor", {"every_k", "bias", "epsilon"});
      if (s.contains("every_k"))
        c.plant.sensor.every_k = to_int(s["every_k"], "plant.sensor.every_k");
      if (s.contains("bias")) {
        const json& b = s["bias"];
        reject_unknown(b, "plant.sensor.bias", {"kind", "outside", "inside", "period"});
        if (b.contains("kind"))
          c.plant.sensor.bias_kind =
              bias_kind(to_str(b["kind"], "plant.sensor.bias.kind"), "plant.sensor.bias.kind");
        if (b.contains("outside"))
          c.plant.sensor.bias_outside = to_vec(b["outside"], "plant.sensor.bias.outside");
        if (b.contains("inside"))
          c.plant.sensor.bias_inside = to_vec(b["inside"], "plant.sensor.bias.inside");
        if (b.contains("period"))
          c.plant.sensor.bias_period = to_num(b["period"], "plant.sensor.bias.period");
      }
      if (s.contains("epsilon"))
        parse_noise(s["epsilon"], "plant.sensor.epsilon", &c.plant.sensor.epsilon);
    }
    if (p.contains("initial")) {
      const json& s = p["initial"];
      reject_unknown(s, "plant.initial", {"mu0", "sigma0"});
      if (s.contains("mu0")) c.plant.mu0 = to_vec(s["mu0"], "plant.initial.mu0");
      if (s.contains("sigma0"))
        c.plant.sigma0 = to_num(s["sigma0"], "plant.initial.sigma0");
    }
  }

  if (j.contains("budget")) {
    const json& b = j["budget"];
    reject_unknown(b, "budget", {"W", "M", "sigma_eps_diag", "estimate"});
    if (b.contains("W")) parse_box_set(b["W"], "budget.W", &c.plant.budget.W);
    if (b.contains("M")) parse_box_set(b["M"], "budget.M", &c.plant.budget.M);
    if (b.contains("sigma_eps_diag")) {
      const Eigen::VectorXd d = to_vec(b["sigma_eps_diag"], "budget.sigma_eps_diag");
      c.plant.budget.Sigma_eps = d.asDiagonal();
    }
    if (b.contains("estimate")) {
      const json& e = b["estimate"];
      reject_unknown(e, "budget.estimate", {"runs", "segments", "inflation", "mgf_tol"});
      BudgetEstimateSpec spec;
      if (e.contains("runs")) spec.runs = to_int(e["runs"], "budget.estimate.runs");
      if (e.contains("segments"))
        spec.segments = to_int(e["segments"], "budget.estimate.segments");
      if (e.contains("inflation"))
        spec.inflation = to_num(e["inflation"], "budget.estimate.inflation");
      if (e.contains("mgf_tol"))
        spec.mgf_tol = to_num(e["mgf_tol"], "budget.estimate.mgf_tol");
      c.estimate = spec;
    }
  }

  if (j.contains("controller")) {
    const json& k = j["controller"];
    reject_unknown(k, "controller",
                   {"kind", "delta", "horizon", "q_diag", "r_scale",
                    "observer_gain", "standoff", "robust_k", "feed_speed",
                    "max_sqp_iterations", "qp_eps", "funnel", "box"});
    auto& cc = c.controller;
    if (k.contains("kind"))
      cc.kind = controller_kind_from_string(to_str(k["kind"], "controller.kind"));
    if (k.contains("delta")) cc.delta = to_num(k["delta"], "controller.delta");
    if (k.contains("horizon")) cc.horizon = to_int(k["horizon"], "controller.horizon");
    if (k.contains("q_diag")) cc.q_diag = to_vec(k["q_diag"], "controller.q_diag");
    if (k.contains("r_scale")) cc.r_scale = to_num(k["r_scale"], "controller.r_scale");
    if (k.contains("observer_gain"))
      cc.observer_gain = to_num(k["observer_gain"], "controller.observer_gain");
    if (k.contains("standoff")) cc.standoff = to_num(k["standoff"], "controller.standoff");
    if (k.contains("robust_k")) cc.robust_k = to_num(k["robust_k"], "controller.robust_k");
    if (k.contains("feed_speed"))
      cc.feed_speed = to_num(k["feed_speed"], "controller.feed_speed");
    if (k.contains("max_sqp_iterations"))
      cc.max_sqp_iterations = to_int(k["max_sqp_iterations"], "controller.max_sqp_iterations");
    if (k.contains("qp_eps")) cc.qp_eps = to_num(k["qp_eps"], "controller.qp_eps");
    if (k.contains("funnel")) {
      const json& f = k["funnel"];
      reject_unknown(f, "controller.funnel",
                     {"c_x", "c_y", "c_z", "c_1", "c_2", "screw_length",
                      "u_bar", "axis_smoothing"});
      auto& fp = cc.funnel;
      if (f.contains("c_x")) fp.c_x = to_num(f["c_x"], "controller.funnel.c_x");
      if (f.contains("c_y")) fp.c_y = to_num(f["c_y"], "controller.funnel.c_y");
      if (f.contains("c_z")) fp.c_z = to_num(f["c_z"], "controller.funnel.c_z");
      if (f.contains("c_1")) fp.c_1 = to_num(f["c_1"], "controller.funnel.c_1");
      if (f.contains("c_2")) fp.c_2 = to_num(f["c_2"], "controller.funnel.c_2");
      if (f.contains("screw_length"))
        fp.screw_length = to_num(f["screw_length"], "controller.funnel.screw_length");
      if (f.contains("u_bar")) fp.u_bar = to_vec(f["u_bar"], "controller.funnel.u_bar");
      if (f.contains("axis_smoothing"))
        fp.axis_smoothing = to_num(f["axis_smoothing"], "controller.funnel.axis_smoothing");
    }
    if (k.contains("box")) {
      const json& b = k["box"];
      reject_unknown(b, "controller.box", {"lo", "hi"});
      if (b.contains("lo")) cc.box.lo = to_vec(b["lo"], "controller.box.lo");
      if (b.contains("hi")) cc.box.hi = to_vec(b["hi"], "controller.box.hi");
    }
  }

  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    reject_unknown(m, "metrics", {"screw_radius", "iou_samples"});
    if (m.contains("screw_radius"))
      c.metrics.screw_radius = to_num(m["screw_radius"], "metrics.screw_radius");
    if (m.contains("iou_samples")) {
      if (!m["iou_samples"].is_number_integer())
        fail("metrics.iou_samples", "expected an integer");
      c.metrics.iou_samples = m["iou_samples"].get<long long>();
    }
  }

  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["trajectories"] = c.n_trajectories;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["plots"] = c.plots;
  j["threads"] = c.threads;

  json p;
  p["T"] = c.plant.T;
  p["dt"] = c.plant.dt;
  p["group_boundary"] = c.plant.group_boundary;
  p["breathing"] = json{{"amplitude", vec_json(c.plant.breathing.amplitude)},
                        {"period", c.plant.breathing.period},
                        {"phase", c.plant.breathing.phase}};
  p["force"] = noise_json(c.plant.force);
  p["sensor"] = json{
      {"every_k", c.plant.sensor.every_k},
      {"bias", json{{"kind", bias_name(c.plant.sensor.bias_kind)},
                    {"outside", vec_json(c.plant.sensor.bias_outside)},
                    {"inside", vec_json(c.plant.sensor.bias_inside)},
                    {"period", c.plant.sensor.bias_period}}},
      {"epsilon", noise_json(c.plant.sensor.epsilon)}};
  p["initial"] = json{{"mu0", vec_json(c.plant.mu0)}, {"sigma0", c.plant.sigma0}};
  j["plant"] = p;

  json b;
  b["W"] = box_set_json(c.plant.budget.W);
  b["M"] = box_set_json(c.plant.budget.M);
  b["sigma_eps_diag"] = vec_json(c.plant.budget.Sigma_eps.diagonal());
  if (c.estimate)
    b["estimate"] = json{{"runs", c.estimate->runs},
                         {"segments", c.estimate->segments},
                         {"inflation", c.estimate->inflation},
                         {"mgf_tol", c.estimate->mgf_tol}};
  j["budget"] = b;

  const auto& k = c.controller;
  j["controller"] = json{
      {"kind", controller::to_string(k.kind)},
      {"delta", k.delta},
      {"horizon", k.horizon},
      {"q_diag", vec_json(k.q_diag)},
      {"r_scale", k.r_scale},
      {"observer_gain", k.observer_gain},
      {"standoff", k.standoff},
      {"robust_k", k.robust_k},
      {"feed_speed", k.feed_speed},
      {"max_sqp_iterations", k.max_sqp_iterations},
      {"qp_eps", k.qp_eps},
      {"funnel", json{{"c_x", k.funnel.c_x},
                      {"c_y", k.funnel.c_y},
                      {"c_z", k.funnel.c_z},
                      {"c_1", k.funnel.c_1},
                      {"c_2", k.funnel.c_2},
                      {"screw_length", k.funnel.screw_length},
                      {"u_bar", vec_json(k.funnel.u_bar)},
                      {"axis_smoothing", k.funnel.axis_smoothing}}},
      {"box", json{{"lo", vec_json(k.box.lo)}, {"hi", vec_json(k.box.hi)}}}};

  j["metrics"] = json{{"screw_radius", c.metrics.screw_radius},
                      {"iou_samples", c.metrics.iou_samples}};
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  // where outputs land never changes what was simulated
  j.erase("out_dir");
  j.erase("plots");
  j.erase("threads");
  return fnv1a(j.dump());
}

}  // namespace sgmpc::harness
