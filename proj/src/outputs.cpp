#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sgmpc/constraints.hpp"
#include "sgmpc/harness.hpp"

namespace sgmpc::harness {
namespace {

using nlohmann::json;

std::string fmt(double x) {
  if (std::isnan(x)) return "-";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json zonotope_json(const sets::Zonotope& z) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < z.generators.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < z.generators.cols(); ++j)
      row.push_back(z.generators(i, j));
    rows.push_back(row);
  }
  json c = json::array();
  for (Eigen::Index i = 0; i < z.center.size(); ++i) c.push_back(z.center(i));
  return json{{"center", c}, {"generators", rows}};
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
}

// ---- svg helpers -----------------------------------------------------------

struct Frame {  // world -> screen mapping for one panel
  double x0, x1, y0, y1;           // world bounds
  double px, py, pw, ph;           // screen rectangle
  double sx(double x) const { return px + (x - x0) / (x1 - x0) * pw; }
  double sy(double y) const { return py + ph - (y - y0) / (y1 - y0) * ph; }
};

std::string poly(const std::vector<Eigen::Vector2d>& pts, const Frame& f,
                 const char* style, bool close) {
  std::ostringstream s;
  s << "<path d=\"";
  for (std::size_t i = 0; i < pts.size(); ++i)
    s << (i == 0 ? 'M' : 'L') << fmt(f.sx(pts[i].x())) << ' '
      << fmt(f.sy(pts[i].y())) << ' ';
  if (close) s << 'Z';
  s << "\" " << style << "/>\n";
  return s.str();
}

}  // namespace

sets::SetExpr project2(const sets::SetExpr& s, Eigen::Index i, Eigen::Index j) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, s.dim());
  P(0, i) = 1.0;
  P(1, j) = 1.0;
  return sets::affine_map(P, s, Eigen::Vector2d::Zero());
}

std::vector<Eigen::Vector2d> set_outline(const sets::SetExpr& s, int n_points) {
  if (s.dim() != 2) throw std::invalid_argument("set_outline: need a 2-d set");
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(std::size_t(n_points));
  for (int k = 0; k < n_points; ++k) {
    const double th = 2.0 * M_PI * double(k) / double(n_points);
    const Eigen::Vector2d dir(std::cos(th), std::sin(th));
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    if (s.ellipsoid) {
      p += s.ellipsoid->center;
      if (s.ellipsoid->shape.cols() > 0) {
        const Eigen::Vector2d q = s.ellipsoid->shape *
                                  (s.ellipsoid->shape.transpose() * dir);
        const double denom = std::sqrt(dir.dot(q));
        if (denom > 0.0) p += q / denom;
      }
    }
    if (s.zonotope) {
      p += s.zonotope->center;
      const auto& G = s.zonotope->generators;
      for (Eigen::Index c = 0; c < G.cols(); ++c)
        p += (dir.dot(G.col(c)) >= 0.0 ? 1.0 : -1.0) * G.col(c);
    }
    pts.push_back(p);
  }
  return pts;
}

std::string metrics_csv(const MetricsReport& r, const ExperimentConfig& cfg) {
  std::ostringstream s;
  s << "controller,runs,failures,acp,mcp_min,mcp_max,break_ratio,"
       "distance_mean_mm,distance_std_mm,gr_a,gr_b,gr_c,gr_d,gr_e,"
       "iou_mean,iou_std_error,feasibility_rate,fallbacks\n";
  s << controller::to_string(cfg.controller.kind) << ',' << r.n_runs << ','
    << r.n_failures << ',' << fmt(r.acp) << ',' << fmt(r.mcp_min) << ','
    << fmt(r.mcp_max) << ',' << fmt(r.break_ratio) << ','
    << fmt(r.distance_mean_mm) << ',' << fmt(r.distance_std_mm);
  for (const int c : r.gr_counts) s << ',' << c;
  s << ',' << fmt(r.iou_mean) << ',' << fmt(r.iou_std_error) << ','
    << fmt(r.feasibility_rate) << ',' << r.fallback_count << '\n';
  return s.str();
}

std::vector<plant::TrajectoryRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<plant::TrajectoryRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(plant::record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ": line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return records;
}

void emit_outputs(const BatchResult& batch, const MetricsReport& report,
                  const ExperimentConfig& cfg, const std::string& dir) {
  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root);

  std::string nd;
  for (const auto& rec : batch.records) {
    nd += plant::to_json(rec).dump();
    nd += '\n';
  }
  write_file(root / "records.ndjson", nd);
  write_file(root / "metrics.csv", metrics_csv(report, cfg));

  json resolved;
  resolved["config"] = to_json(cfg);
  resolved["config_hash"] = config_hash(cfg);
  json segs = json::array();
  for (const auto& seg : batch.segments)
    segs.push_back(json{{"start_t", seg.start_t},
                        {"W", zonotope_json(seg.budget.W)},
                        {"M", zonotope_json(seg.budget.M)},
                        {"sigma_eps", matrix_json(seg.budget.Sigma_eps)}});
  resolved["segments"] = segs;
  if (batch.schedule)
    resolved["schedule"] = json{{"period", batch.schedule->period()},
                                {"converged", batch.schedule->converged()},
                                {"explicit_entries", batch.schedule->explicit_size()}};
  json fails = json::array();
  for (const auto& f : batch.failures)
    fails.push_back(json{{"index", f.index}, {"reason", f.reason}});
  resolved["failures"] = fails;
  resolved["infeasible_at_t0"] = batch.infeasible_at_t0;
  write_file(root / "config-resolved.json", resolved.dump(2) + "\n");

  if (cfg.plots)
    write_file(root / "plot.svg", render_plot_svg(batch, cfg));
}

std::string render_plot_svg(const BatchResult& batch,
                            const ExperimentConfig& cfg) {
  const int W = 960, H = 480;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
    << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
    << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"#ffffff\"/>\n";
  if (batch.records.empty()) {
    s << "<text x=\"20\" y=\"40\" font-family=\"sans-serif\">no records"
         "</text>\n</svg>\n";
    return s.str();
  }
  const int T = batch.records.front().horizon();
  const Eigen::Index n = batch.records.front().x.rows();

  // panel 1: trajectories in the (x, y) plane
  double xlo = 1e30, xhi = -1e30, yamp = 0.0;
  for (const auto& rec : batch.records) {
    xlo = std::min(xlo, rec.x.row(0).minCoeff());
    xhi = std::max(xhi, rec.x.row(0).maxCoeff());
    if (n >= 2) yamp = std::max(yamp, rec.x.row(1).cwiseAbs().maxCoeff());
  }
  Frame f1;
  f1.x0 = xlo - 0.004;
  f1.x1 = std::max(0.002, xhi + 0.004);
  const double yr = std::max(3.0 * yamp, 0.008);
  f1.y0 = -yr;
  f1.y1 = yr;
  f1.px = 50;
  f1.py = 40;
  f1.pw = 560;
  f1.ph = 400;
  s << "<rect x=\"" << f1.px << "\" y=\"" << f1.py << "\" width=\"" << f1.pw
    << "\" height=\"" << f1.ph << "\" fill=\"#fafbfc\" stroke=\"#d0d7de\"/>\n";

  // funnel wall and breakthrough plane
  const auto& fp = cfg.controller.funnel;
  std::vector<Eigen::Vector2d> wall_up, wall_dn;
  for (int k = 0; k <= 160; ++k) {
    const double x = f1.x0 + (f1.x1 - f1.x0) * double(k) / 160.0;
    const double E = std::exp(-x / fp.c_x - fp.c_2);
    const double root = std::sqrt(E) - fp.c_1;
    if (root <= 0.0) continue;
    const double rho = fp.c_y * root;
    if (rho > 2.0 * yr) continue;
    wall_up.push_back({x, rho});
    wall_dn.push_back({x, -rho});
  }
  const char* wall_style = "fill=\"none\" stroke=\"#8957e5\" stroke-width=\"1.4\"";
  if (!wall_up.empty()) s << poly(wall_up, f1, wall_style, false);
  if (!wall_dn.empty()) s << poly(wall_dn, f1, wall_style, false);
  if (f1.x1 > 0.0)
    s << "<line x1=\"" << fmt(f1.sx(0.0)) << "\" y1=\"" << f1.py << "\" x2=\""
      << fmt(f1.sx(0.0)) << "\" y2=\"" << f1.py + f1.ph
      << "\" stroke=\"#cf222e\" stroke-dasharray=\"6 3\"/>\n";

  for (const auto& rec : batch.records) {
    std::vector<Eigen::Vector2d> path;
    for (int t = 0; t <= T; ++t)
      path.push_back({rec.x(0, t), n >= 2 ? rec.x(1, t) : 0.0});
    s << poly(path, f1,
              "fill=\"none\" stroke=\"#9aa7b5\" stroke-width=\"0.6\" "
              "stroke-opacity=\"0.55\"",
              false);
  }
  const auto& first = batch.records.front();
  std::vector<Eigen::Vector2d> nominal;
  for (int t = 0; t <= T; ++t)
    nominal.push_back({first.z(0, t), n >= 2 ? first.z(1, t) : 0.0});
  s << poly(nominal, f1,
            "fill=\"none\" stroke=\"#1f6feb\" stroke-width=\"1.6\" "
            "stroke-dasharray=\"5 3\"",
            false);

  if (batch.schedule && n >= 2) {
    for (const int t : {0, T / 4, T / 2, (3 * T) / 4, T}) {
      const auto proj = project2(batch.schedule->at(t).total, 0, 1);
      auto outline = set_outline(proj, 64);
      const Eigen::Vector2d c(first.z(0, t), first.z(1, t));
      for (auto& p : outline) p += c;
      s << poly(outline, f1,
                "fill=\"#1f6feb\" fill-opacity=\"0.08\" stroke=\"#1f6feb\" "
                "stroke-width=\"0.9\"",
                true);
    }
  }
  s << "<text x=\"50\" y=\"28\" font-family=\"sans-serif\" font-size=\"14\">"
    << cfg.name << ": paths in the (x, y) plane, scheduled sets at five "
       "steps</text>\n";
  s << "<text x=\"" << f1.px + f1.pw / 2 - 10 << "\" y=\"" << f1.py + f1.ph + 24
    << "\" font-family=\"sans-serif\" font-size=\"12\">x (m)</text>\n";

  // panel 2: final-pose precision per axis
  Frame f2;
  f2.px = 680;
  f2.py = 40;
  f2.pw = 240;
  f2.ph = 400;
  const Eigen::Index n_axes = std::min<Eigen::Index>(n, 5);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(n);
  if (cfg.controller.kind != controller::ControllerKind::kPosition)
    target(0) = -cfg.controller.standoff;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n), var = Eigen::VectorXd::Zero(n);
  for (const auto& rec : batch.records) mean += rec.x.col(T) - target;
  mean /= double(batch.records.size());
  for (const auto& rec : batch.records) {
    const Eigen::VectorXd d = rec.x.col(T) - target - mean;
    var += d.cwiseProduct(d);
  }
  var /= double(std::max<std::size_t>(batch.records.size() - 1, 1));
  const Eigen::VectorXd sd = var.cwiseSqrt();
  double emax = 1e-9;
  for (Eigen::Index a = 0; a < n_axes; ++a)
    emax = std::max(emax, std::abs(mean(a)) + sd(a));
  f2.x0 = -0.5;
  f2.x1 = double(n_axes) - 0.5;
  f2.y0 = 0.0;
  f2.y1 = 1.15 * emax;
  s << "<rect x=\"" << f2.px << "\" y=\"" << f2.py << "\" width=\"" << f2.pw
    << "\" height=\"" << f2.ph << "\" fill=\"#fafbfc\" stroke=\"#d0d7de\"/>\n";
  const char* axis_names[5] = {"x", "y", "z", "th", "ph"};
  for (Eigen::Index a = 0; a < n_axes; ++a) {
    const double v = std::abs(mean(a));
    const double cx = f2.sx(double(a));
    const double w = f2.pw / double(n_axes) * 0.55;
    s << "<rect x=\"" << fmt(cx - w / 2) << "\" y=\"" << fmt(f2.sy(v))
      << "\" width=\"" << fmt(w) << "\" height=\""
      << fmt(f2.sy(0.0) - f2.sy(v)) << "\" fill=\"#2da44e\" "
         "fill-opacity=\"0.8\"/>\n";
    s << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(f2.sy(std::max(0.0, v - sd(a))))
      << "\" x2=\"" << fmt(cx) << "\" y2=\"" << fmt(f2.sy(v + sd(a)))
      << "\" stroke=\"#1a7f37\" stroke-width=\"1.6\"/>\n";
    s << "<text x=\"" << fmt(cx - 4) << "\" y=\"" << f2.py + f2.ph + 16
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << axis_names[a]
      << "</text>\n";
  }
  s << "<text x=\"" << f2.px << "\" y=\"28\" font-family=\"sans-serif\" "
       "font-size=\"13\">final |error| per axis (m, rad)</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace sgmpc::harness
