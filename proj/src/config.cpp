#include "pillarfss/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "pillarfss/error.hpp"
#include "pillarfss/io.hpp"

namespace pillarfss {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& section,
                         const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (at.IsDefined() && at.Mark().line >= 0) os << ":" << at.Mark().line + 1;
    os << ": [" << section << "] " << msg;
    throw ConfigError(os.str());
  }

  void require_map(const YAML::Node& n, const std::string& section) const {
    if (!n.IsMap()) fail(n, section, "expected a mapping");
  }

  void check_keys(const YAML::Node& n, const std::string& section,
                  std::initializer_list<const char*> allowed) const {
    require_map(n, section);
    for (const auto& kv : n) {
      const std::string key = kv.first.as<std::string>();
      const bool known = std::any_of(allowed.begin(), allowed.end(),
                                     [&](const char* a) { return key == a; });
      if (!known) fail(kv.first, section, "unknown key '" + key + "'");
    }
  }

  double number(const YAML::Node& n, const std::string& section, const std::string& key) const {
    if (!n.IsScalar()) fail(n, section, "'" + key + "' must be a number");
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, section, "'" + key + "' must be a number, got '" + n.Scalar() + "'");
    }
  }

  long long integer(const YAML::Node& n, const std::string& section, const std::string& key) const {
    if (!n.IsScalar()) fail(n, section, "'" + key + "' must be an integer");
    try {
      return n.as<long long>();
    } catch (const YAML::Exception&) {
      fail(n, section, "'" + key + "' must be an integer, got '" + n.Scalar() + "'");
    }
  }

  std::vector<double> numbers(const YAML::Node& n, const std::string& section,
                              const std::string& key, std::size_t count) const {
    if (!n.IsSequence() || n.size() != count) {
      fail(n, section, "'" + key + "' must be a list of " + std::to_string(count) + " numbers");
    }
    std::vector<double> out;
    for (const auto& item : n) out.push_back(number(item, section, key));
    return out;
  }

  template <typename Fn>
  void with(const YAML::Node& map, const char* key, Fn&& fn) const {
    const YAML::Node n = map[key];
    if (n.IsDefined() && !n.IsNull()) fn(n);
  }

 private:
  std::string source_;
};

Terminal terminal_from(const Reader& rd, const YAML::Node& n, const std::string& section) {
  const std::string s = n.as<std::string>();
  if (s == "A") return Terminal::A;
  if (s == "B") return Terminal::B;
  if (s == "C") return Terminal::C;
  rd.fail(n, section, "unknown terminal '" + s + "' (expected A, B or C)");
}

std::optional<double> voltage_or_floating(const Reader& rd, const YAML::Node& n,
                                          const std::string& section, const std::string& key) {
  if (n.IsScalar() && n.Scalar() == "floating") return std::nullopt;
  return rd.number(n, section, key);
}

AxisRange read_range(const Reader& rd, const YAML::Node& n, const std::string& section) {
  rd.check_keys(n, section, {"min", "max", "step"});
  AxisRange r;
  rd.with(n, "min", [&](const YAML::Node& v) { r.min = rd.number(v, section, "min"); });
  rd.with(n, "max", [&](const YAML::Node& v) { r.max = rd.number(v, section, "max"); });
  rd.with(n, "step", [&](const YAML::Node& v) { r.step = rd.number(v, section, "step"); });
  return r;
}

void read_device(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "device";
  rd.check_keys(n, s,
                {"pillar_diameter_um", "ridge_width_um", "ridge_length_um", "ridge_angles_deg",
                 "pad_size_um", "intrinsic_thickness_nm", "built_in_voltage_V", "mesh_edge_um"});
  DeviceGeometry& g = c.device;
  rd.with(n, "pillar_diameter_um", [&](auto& v) { g.pillar_diameter = rd.number(v, s, "pillar_diameter_um"); });
  rd.with(n, "ridge_width_um", [&](auto& v) { g.ridge_width = rd.number(v, s, "ridge_width_um"); });
  rd.with(n, "ridge_length_um", [&](auto& v) { g.ridge_length = rd.number(v, s, "ridge_length_um"); });
  rd.with(n, "ridge_angles_deg", [&](auto& v) {
    const auto a = rd.numbers(v, s, "ridge_angles_deg", 3);
    for (int k = 0; k < 3; ++k) g.ridge_angles[static_cast<std::size_t>(k)] = deg_to_rad(a[static_cast<std::size_t>(k)]);
  });
  rd.with(n, "pad_size_um", [&](auto& v) { g.pad_size = rd.number(v, s, "pad_size_um"); });
  rd.with(n, "intrinsic_thickness_nm", [&](auto& v) { g.intrinsic_thickness = rd.number(v, s, "intrinsic_thickness_nm"); });
  rd.with(n, "built_in_voltage_V", [&](auto& v) { g.built_in_voltage = rd.number(v, s, "built_in_voltage_V"); });
  rd.with(n, "mesh_edge_um", [&](auto& v) { c.mesh_edge = rd.number(v, s, "mesh_edge_um"); });
}

void read_materials(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "materials";
  rd.check_keys(n, s,
                {"sheet_conductance_S", "saturation_current_density_A_per_um2", "ideality",
                 "thermal_voltage_V", "temperature_K", "series_resistance_ohm"});
  MaterialParams& m = c.materials;
  rd.with(n, "sheet_conductance_S", [&](auto& v) { m.sheet_conductance = rd.number(v, s, "sheet_conductance_S"); });
  rd.with(n, "saturation_current_density_A_per_um2", [&](auto& v) {
    m.saturation_current_density = rd.number(v, s, "saturation_current_density_A_per_um2");
  });
  rd.with(n, "ideality", [&](auto& v) { m.ideality = rd.number(v, s, "ideality"); });
  const bool has_vt = n["thermal_voltage_V"].IsDefined();
  const bool has_t = n["temperature_K"].IsDefined();
  if (has_vt && has_t) rd.fail(n["temperature_K"], s, "give thermal_voltage_V or temperature_K, not both");
  rd.with(n, "thermal_voltage_V", [&](auto& v) { m.thermal_voltage = rd.number(v, s, "thermal_voltage_V"); });
  rd.with(n, "temperature_K", [&](auto& v) {
    const double t = rd.number(v, s, "temperature_K");
    if (!(t > 0.0)) rd.fail(v, s, "temperature_K must be > 0");
    c.temperature = t;
    m.thermal_voltage = thermal_voltage_at(t);
  });
  rd.with(n, "series_resistance_ohm", [&](auto& v) {
    const auto r = rd.numbers(v, s, "series_resistance_ohm", 3);
    std::copy(r.begin(), r.end(), m.series_resistance.begin());
  });
}

void read_exciton(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "exciton";
  rd.check_keys(n, s,
                {"e0_eV", "delta0_ueV", "M_ueV_per_V_per_m", "gamma_z_ueV_per_V_per_m",
                 "p_z_ueV_per_V_per_m", "beta_z_ueV_per_V2_per_m2", "axis_tolerance_ueV"});
  ExcitonParams& p = c.exciton;
  rd.with(n, "e0_eV", [&](auto& v) { p.e0_ev = rd.number(v, s, "e0_eV"); });
  rd.with(n, "delta0_ueV", [&](auto& v) {
    const auto d = rd.numbers(v, s, "delta0_ueV", 2);
    p.delta0 = Eigen::Vector2d(d[0], d[1]);
  });
  rd.with(n, "M_ueV_per_V_per_m", [&](auto& v) {
    if (!v.IsSequence() || v.size() != 2) rd.fail(v, s, "'M_ueV_per_V_per_m' must be a 2x2 list");
    for (int r = 0; r < 2; ++r) {
      const auto row = rd.numbers(v[static_cast<std::size_t>(r)], s, "M_ueV_per_V_per_m", 2);
      p.m(r, 0) = row[0];
      p.m(r, 1) = row[1];
    }
  });
  rd.with(n, "gamma_z_ueV_per_V_per_m", [&](auto& v) {
    const auto g = rd.numbers(v, s, "gamma_z_ueV_per_V_per_m", 2);
    p.gamma_z = Eigen::Vector2d(g[0], g[1]);
  });
  rd.with(n, "p_z_ueV_per_V_per_m", [&](auto& v) { p.p_z = rd.number(v, s, "p_z_ueV_per_V_per_m"); });
  rd.with(n, "beta_z_ueV_per_V2_per_m2", [&](auto& v) { p.beta_z = rd.number(v, s, "beta_z_ueV_per_V2_per_m2"); });
  rd.with(n, "axis_tolerance_ueV", [&](auto& v) { p.axis_tolerance = rd.number(v, s, "axis_tolerance_ueV"); });
}

void read_solver(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "solver";
  rd.check_keys(n, s,
                {"newton_tol", "max_iters", "damping", "continuation_steps", "max_bisections",
                 "current_floor_A", "regime_threshold_A"});
  SolverConfig& k = c.solver;
  rd.with(n, "newton_tol", [&](auto& v) { k.newton_tol = rd.number(v, s, "newton_tol"); });
  rd.with(n, "max_iters", [&](auto& v) { k.max_iters = static_cast<int>(rd.integer(v, s, "max_iters")); });
  rd.with(n, "damping", [&](auto& v) { k.damping = rd.number(v, s, "damping"); });
  rd.with(n, "continuation_steps", [&](auto& v) {
    k.continuation_steps = static_cast<int>(rd.integer(v, s, "continuation_steps"));
  });
  rd.with(n, "max_bisections", [&](auto& v) { k.max_bisections = static_cast<int>(rd.integer(v, s, "max_bisections")); });
  rd.with(n, "current_floor_A", [&](auto& v) { k.current_floor = rd.number(v, s, "current_floor_A"); });
  rd.with(n, "regime_threshold_A", [&](auto& v) { k.regime_threshold = rd.number(v, s, "regime_threshold_A"); });
}

void read_sweep(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "sweep";
  rd.check_keys(n, s, {"va", "vb", "vc", "outputs"});
  SweepSpec& sw = c.sweep;
  rd.with(n, "va", [&](auto& v) { sw.va = read_range(rd, v, "sweep.va"); });
  rd.with(n, "vb", [&](auto& v) { sw.vb = read_range(rd, v, "sweep.vb"); });
  rd.with(n, "vc", [&](auto& v) { sw.vc = voltage_or_floating(rd, v, s, "vc"); });
  rd.with(n, "outputs", [&](auto& v) {
    if (!v.IsSequence()) rd.fail(v, s, "'outputs' must be a list");
    sw.outputs = 0u;
    for (const auto& item : v) {
      try {
        sw.outputs |= static_cast<unsigned>(sweep_output_from_name(item.template as<std::string>()));
      } catch (const ConfigError& e) {
        rd.fail(item, s, e.what());
      }
    }
  });
}

void read_tuner(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "tuner";
  rd.check_keys(n, s,
                {"start", "free_terminals", "tol_ueV", "restart_grid", "max_evaluations",
                 "probe_step_V", "iso_target_ueV", "iso_min_separation_ueV"});
  TuneSpec& t = c.tuner;
  rd.with(n, "start", [&](auto& v) {
    rd.check_keys(v, "tuner.start", {"va", "vb", "vc"});
    rd.with(v, "va", [&](auto& x) { t.start.v[0] = voltage_or_floating(rd, x, "tuner.start", "va"); });
    rd.with(v, "vb", [&](auto& x) { t.start.v[1] = voltage_or_floating(rd, x, "tuner.start", "vb"); });
    rd.with(v, "vc", [&](auto& x) { t.start.v[2] = voltage_or_floating(rd, x, "tuner.start", "vc"); });
  });
  rd.with(n, "free_terminals", [&](auto& v) {
    if (!v.IsSequence()) rd.fail(v, s, "'free_terminals' must be a list");
    t.free_terminals.clear();
    for (const auto& item : v) t.free_terminals.push_back(terminal_from(rd, item, s));
  });
  rd.with(n, "tol_ueV", [&](auto& v) { t.tol = rd.number(v, s, "tol_ueV"); });
  rd.with(n, "restart_grid", [&](auto& v) { t.restart_grid = static_cast<int>(rd.integer(v, s, "restart_grid")); });
  rd.with(n, "max_evaluations", [&](auto& v) {
    t.max_evaluations = static_cast<int>(rd.integer(v, s, "max_evaluations"));
  });
  rd.with(n, "probe_step_V", [&](auto& v) { t.probe_step = rd.number(v, s, "probe_step_V"); });
  rd.with(n, "iso_target_ueV", [&](auto& v) { c.iso.target = rd.number(v, s, "iso_target_ueV"); });
  rd.with(n, "iso_min_separation_ueV", [&](auto& v) {
    c.iso.separation = rd.number(v, s, "iso_min_separation_ueV");
  });
}

void read_spectro(const Reader& rd, const YAML::Node& n, RunConfig& c) {
  const std::string s = "spectro";
  rd.check_keys(n, s, {"linewidth_ueV", "noise_ueV", "angles"});
  rd.with(n, "linewidth_ueV", [&](auto& v) { c.spectro.linewidth = rd.number(v, s, "linewidth_ueV"); });
  rd.with(n, "noise_ueV", [&](auto& v) { c.spectro.noise = rd.number(v, s, "noise_ueV"); });
  rd.with(n, "angles", [&](auto& v) { c.spectro.angles = static_cast<int>(rd.integer(v, s, "angles")); });
}

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : "floating"; }

}  // namespace

void RunConfig::validate() const {
  device.validate();
  if (!(mesh_edge > 0.0) || !std::isfinite(mesh_edge)) throw ConfigError("device: mesh_edge_um must be > 0");
  materials.validate();
  if (!exciton.finite()) throw ConfigError("exciton: non-finite parameter");
  if (!(exciton.axis_tolerance >= 0.0)) throw ConfigError("exciton: axis_tolerance_ueV must be >= 0");
  solver.validate();
  sweep.validate();
  tuner.validate();
  if (!(iso.target > 0.0) || !(iso.separation >= 0.0)) throw ConfigError("tuner: invalid iso settings");
  if (!(spectro.linewidth > 0.0)) throw ConfigError("spectro: linewidth_ueV must be > 0");
  if (!(spectro.noise >= 0.0)) throw ConfigError("spectro: noise_ueV must be >= 0");
  if (spectro.angles < 6) throw ConfigError("spectro: angles must be >= 6");
}

RunConfig parse_config(const std::string& yaml_text, const std::string& source) {
  const Reader rd(source);
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": [yaml] " + e.msg);
  }
  RunConfig c;
  if (root.IsNull()) {
    c.tuner.window_a = c.sweep.va;
    c.tuner.window_b = c.sweep.vb;
    c.validate();
    return c;
  }
  try {
    rd.check_keys(root, "top level",
                  {"seed", "device", "materials", "exciton", "solver", "sweep", "tuner", "spectro"});
    rd.with(root, "seed", [&](auto& v) {
      const long long seed = rd.integer(v, "top level", "seed");
      if (seed < 0) rd.fail(v, "top level", "seed must be >= 0");
      c.seed = static_cast<std::uint64_t>(seed);
    });
    rd.with(root, "device", [&](auto& v) { read_device(rd, v, c); });
    rd.with(root, "materials", [&](auto& v) { read_materials(rd, v, c); });
    rd.with(root, "exciton", [&](auto& v) { read_exciton(rd, v, c); });
    rd.with(root, "solver", [&](auto& v) { read_solver(rd, v, c); });
    rd.with(root, "sweep", [&](auto& v) { read_sweep(rd, v, c); });
    // The tuner's start may leave C as in the sweep unless given explicitly.
    c.tuner.start.v[2] = c.sweep.vc;
    rd.with(root, "tuner", [&](auto& v) { read_tuner(rd, v, c); });
    rd.with(root, "spectro", [&](auto& v) { read_spectro(rd, v, c); });
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": [yaml] " + e.msg);
  }
  c.tuner.window_a = c.sweep.va;
  c.tuner.window_b = c.sweep.vb;
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string canonical_config(const RunConfig& c) {
  std::ostringstream o;
  auto line = [&](const char* key, const std::string& value) { o << key << " = " << value << '\n'; };
  auto num = [&](const char* key, double v) { line(key, format_double(v)); };
  line("seed", std::to_string(c.seed));
  num("device.pillar_diameter_um", c.device.pillar_diameter);
  num("device.ridge_width_um", c.device.ridge_width);
  num("device.ridge_length_um", c.device.ridge_length);
  for (int k = 0; k < 3; ++k) {
    line(("device.ridge_angle_rad." + std::string(terminal_name(static_cast<Terminal>(k)))).c_str(),
         format_double(c.device.ridge_angles[static_cast<std::size_t>(k)]));
  }
  num("device.pad_size_um", c.device.pad_size);
  num("device.intrinsic_thickness_nm", c.device.intrinsic_thickness);
  num("device.built_in_voltage_V", c.device.built_in_voltage);
  num("device.mesh_edge_um", c.mesh_edge);
  num("materials.sheet_conductance_S", c.materials.sheet_conductance);
  num("materials.saturation_current_density_A_per_um2", c.materials.saturation_current_density);
  num("materials.ideality", c.materials.ideality);
  num("materials.thermal_voltage_V", c.materials.thermal_voltage);
  for (int k = 0; k < 3; ++k) {
    line(("materials.series_resistance_ohm." + std::string(terminal_name(static_cast<Terminal>(k)))).c_str(),
         format_double(c.materials.series_resistance[static_cast<std::size_t>(k)]));
  }
  num("exciton.e0_eV", c.exciton.e0_ev);
  num("exciton.delta0_ueV.x", c.exciton.delta0(0));
  num("exciton.delta0_ueV.y", c.exciton.delta0(1));
  num("exciton.M.xx", c.exciton.m(0, 0));
  num("exciton.M.xy", c.exciton.m(0, 1));
  num("exciton.M.yx", c.exciton.m(1, 0));
  num("exciton.M.yy", c.exciton.m(1, 1));
  num("exciton.gamma_z.x", c.exciton.gamma_z(0));
  num("exciton.gamma_z.y", c.exciton.gamma_z(1));
  num("exciton.p_z", c.exciton.p_z);
  num("exciton.beta_z", c.exciton.beta_z);
  num("exciton.axis_tolerance_ueV", c.exciton.axis_tolerance);
  num("solver.newton_tol", c.solver.newton_tol);
  line("solver.max_iters", std::to_string(c.solver.max_iters));
  num("solver.damping", c.solver.damping);
  line("solver.continuation_steps", std::to_string(c.solver.continuation_steps));
  line("solver.max_bisections", std::to_string(c.solver.max_bisections));
  num("solver.current_floor_A", c.solver.current_floor);
  num("solver.regime_threshold_A", c.solver.regime_threshold);
  for (const auto* r : {&c.sweep.va, &c.sweep.vb}) {
    const std::string p = r == &c.sweep.va ? "sweep.va." : "sweep.vb.";
    line((p + "min").c_str(), format_double(r->min));
    line((p + "max").c_str(), format_double(r->max));
    line((p + "step").c_str(), format_double(r->step));
  }
  line("sweep.vc", fmt_opt(c.sweep.vc));
  line("sweep.outputs", std::to_string(c.sweep.outputs));
  for (int k = 0; k < 3; ++k) {
    line(("tuner.start." + std::string(terminal_name(static_cast<Terminal>(k)))).c_str(),
         fmt_opt(c.tuner.start.v[static_cast<std::size_t>(k)]));
  }
  std::string free;
  for (Terminal t : c.tuner.free_terminals) free += terminal_name(t);
  line("tuner.free_terminals", free);
  num("tuner.tol_ueV", c.tuner.tol);
  line("tuner.restart_grid", std::to_string(c.tuner.restart_grid));
  line("tuner.max_evaluations", std::to_string(c.tuner.max_evaluations));
  num("tuner.probe_step_V", c.tuner.probe_step);
  num("tuner.iso_target_ueV", c.iso.target);
  num("tuner.iso_min_separation_ueV", c.iso.separation);
  num("spectro.linewidth_ueV", c.spectro.linewidth);
  num("spectro.noise_ueV", c.spectro.noise);
  line("spectro.angles", std::to_string(c.spectro.angles));
  return o.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SheetProblem make_problem(const RunConfig& cfg) {
  Mesh mesh = generate_mesh(build_geometry(cfg.device), cfg.mesh_edge);
  return SheetProblem(std::move(mesh), cfg.materials, cfg.device);
}

}  // namespace pillarfss
