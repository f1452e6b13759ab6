#include "pillarfss/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <algorithm>
#include <map>
#include <sstream>
#include <system_error>

#ifdef __unix__
#include <unistd.h>
#endif

#include "pillarfss/config.hpp"
#include "pillarfss/error.hpp"

namespace pillarfss {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view f) {
  if (f == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (f == "inf") return std::numeric_limits<double>::infinity();
  if (f == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* end = f.data() + f.size();
  const char* begin = f.data();
  if (begin != end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end || f.empty()) {
    throw InputError("not a number: '" + std::string(f) + "'");
  }
  return v;
}

std::string csv_escape(std::string_view f) {
  if (f.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(f);
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw InputError("unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
#ifdef __unix__
  tmp += ".tmp" + std::to_string(::getpid());
#else
  tmp += ".tmp";
#endif
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place: " + path.string());
  }
}

std::filesystem::path hashed_path(const std::filesystem::path& dir, std::string_view stem,
                                  std::string_view hash, std::string_view ext) {
  return dir / (std::string(stem) + "-" + std::string(hash) + "." + std::string(ext));
}

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  while (!lines.empty() && (lines.back().empty() || lines.back() == "\r")) lines.pop_back();
  return lines;
}

std::string opt_volt(const std::optional<double>& v) { return v ? format_double(*v) : "floating"; }

std::optional<double> parse_opt_volt(const std::string& f) {
  if (f == "floating") return std::nullopt;
  return parse_double(f);
}

struct Group {
  SweepOutput flag;
  std::vector<const char*> columns;
};

const std::vector<Group>& groups_before_iters() {
  static const std::vector<Group> g{
      {SweepOutput::kFields, {"ex_V_per_m", "ey_V_per_m", "ez_V_per_m"}},
      {SweepOutput::kCurrents, {"i_a_A", "i_b_A", "i_c_A", "i_junction_A"}},
      {SweepOutput::kRegime, {"region"}},
  };
  return g;
}

const std::vector<Group>& groups_after_iters() {
  static const std::vector<Group> g{
      {SweepOutput::kFss, {"fss_ueV", "delta_x_ueV", "delta_y_ueV"}},
      {SweepOutput::kTheta0, {"theta0_rad", "degenerate"}},
      {SweepOutput::kAlgebraicFss, {"algebraic_fss_ueV"}},
      {SweepOutput::kStark, {"stark_shift_ueV", "mean_energy_eV"}},
  };
  return g;
}

Json opt_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double number_or_inf(const Json& j) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace

std::vector<std::string> sweep_csv_header(unsigned outputs) {
  std::vector<std::string> h{"ia", "ib", "va_V", "vb_V", "vc_V", "status"};
  for (const auto& g : groups_before_iters()) {
    if (outputs & static_cast<unsigned>(g.flag)) h.insert(h.end(), g.columns.begin(), g.columns.end());
  }
  h.emplace_back("iters");
  h.emplace_back("residual");
  for (const auto& g : groups_after_iters()) {
    if (outputs & static_cast<unsigned>(g.flag)) h.insert(h.end(), g.columns.begin(), g.columns.end());
  }
  return h;
}

std::string sweep_csv(const SweepResult& sweep) {
  std::ostringstream o;
  const SweepSpec& sp = sweep.spec;
  const auto header = sweep_csv_header(sp.outputs);
  for (std::size_t i = 0; i < header.size(); ++i) o << (i ? "," : "") << header[i];
  o << '\n';
  for (const SweepRecord& r : sweep.records) {
    std::vector<std::string> f{std::to_string(r.ia),
                               std::to_string(r.ib),
                               format_double(r.bias.value(Terminal::A)),
                               format_double(r.bias.value(Terminal::B)),
                               opt_volt(r.bias.v[2]),
                               csv_escape(r.status)};
    auto num = [&](double v) { f.push_back(r.ok ? format_double(v) : std::string()); };
    if (sp.wants(SweepOutput::kFields)) {
      num(r.e_inplane.x());
      num(r.e_inplane.y());
      num(r.e_z);
    }
    if (sp.wants(SweepOutput::kCurrents)) {
      for (double i : r.current) num(i);
      num(r.junction_current);
    }
    if (sp.wants(SweepOutput::kRegime)) f.push_back(r.ok ? std::to_string(r.region) : "");
    f.push_back(r.ok ? std::to_string(r.iters) : "");
    num(r.residual);
    if (sp.wants(SweepOutput::kFss)) {
      num(r.exciton.fss);
      num(r.exciton.delta(0));
      num(r.exciton.delta(1));
    }
    if (sp.wants(SweepOutput::kTheta0)) {
      num(r.exciton.theta0);
      f.push_back(r.ok ? (r.exciton.degenerate ? "1" : "0") : "");
    }
    if (sp.wants(SweepOutput::kAlgebraicFss)) num(r.algebraic_fss);
    if (sp.wants(SweepOutput::kStark)) {
      num(r.stark_shift);
      num(r.exciton.mean_energy);
    }
    for (std::size_t i = 0; i < f.size(); ++i) o << (i ? "," : "") << f[i];
    o << '\n';
  }
  return o.str();
}

std::vector<SweepRecord> parse_sweep_csv(std::string_view text, unsigned* outputs) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InputError("sweep csv: empty input");
  const auto header = split_csv_record(lines[0]);
  unsigned present = 0u;
  for (const auto* list : {&groups_before_iters(), &groups_after_iters()}) {
    for (const auto& g : *list) {
      if (std::find(header.begin(), header.end(), std::string(g.columns.front())) != header.end()) {
        present |= static_cast<unsigned>(g.flag);
      }
    }
  }
  if (header != sweep_csv_header(present)) throw InputError("sweep csv: unexpected header");
  if (outputs) *outputs = present;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

  std::vector<SweepRecord> out;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto f = split_csv_record(lines[row]);
    const std::string where = "sweep csv row " + std::to_string(row + 1) + ": ";
    if (f.size() != header.size()) throw InputError(where + "wrong field count");
    try {
      auto get = [&](const char* name) -> const std::string& { return f[col.at(name)]; };
      auto num = [&](const char* name) { return parse_double(get(name)); };
      SweepRecord r;
      r.ia = std::stoi(get("ia"));
      r.ib = std::stoi(get("ib"));
      r.bias = BiasPoint::c_floating(num("va_V"), num("vb_V"));
      r.bias.v[2] = parse_opt_volt(get("vc_V"));
      r.status = get("status");
      r.ok = r.status == "ok";
      if (r.ok) {
        if (present & static_cast<unsigned>(SweepOutput::kFields)) {
          r.e_inplane = {num("ex_V_per_m"), num("ey_V_per_m")};
          r.e_z = num("ez_V_per_m");
        }
        if (present & static_cast<unsigned>(SweepOutput::kCurrents)) {
          r.current = {num("i_a_A"), num("i_b_A"), num("i_c_A")};
          r.junction_current = num("i_junction_A");
        }
        if (present & static_cast<unsigned>(SweepOutput::kRegime)) r.region = std::stoi(get("region"));
        r.iters = std::stoi(get("iters"));
        r.residual = num("residual");
        if (present & static_cast<unsigned>(SweepOutput::kFss)) {
          r.exciton.fss = num("fss_ueV");
          r.exciton.delta = {num("delta_x_ueV"), num("delta_y_ueV")};
        }
        if (present & static_cast<unsigned>(SweepOutput::kTheta0)) {
          r.exciton.theta0 = num("theta0_rad");
          r.exciton.degenerate = get("degenerate") == "1";
        }
        if (present & static_cast<unsigned>(SweepOutput::kAlgebraicFss)) r.algebraic_fss = num("algebraic_fss_ueV");
        if (present & static_cast<unsigned>(SweepOutput::kStark)) {
          r.stark_shift = num("stark_shift_ueV");
          r.exciton.mean_energy = num("mean_energy_eV");
          r.exciton.e_high = r.exciton.mean_energy + 0.5e-6 * r.exciton.fss;
          r.exciton.e_low = r.exciton.mean_energy - 0.5e-6 * r.exciton.fss;
        }
      }
      out.push_back(std::move(r));
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    } catch (const std::exception& e) {
      throw InputError(where + "malformed field (" + e.what() + ")");
    }
  }
  return out;
}

Json sweep_metadata(const SweepResult& sweep, const RunConfig& cfg) {
  Json j;
  j["config_hash"] = sweep.config_hash;
  j["grid"] = {{"na", sweep.na}, {"nb", sweep.nb}, {"cells", sweep.records.size()},
               {"failed", sweep.failed_count()}};
  j["va"] = {{"min", sweep.spec.va.min}, {"max", sweep.spec.va.max}, {"step", sweep.spec.va.step}};
  j["vb"] = {{"min", sweep.spec.vb.min}, {"max", sweep.spec.vb.max}, {"step", sweep.spec.vb.step}};
  j["vc"] = sweep.spec.vc ? Json(*sweep.spec.vc) : Json("floating");
  j["columns"] = sweep_csv_header(sweep.spec.outputs);
  j["theta_ref_rad"] = sweep.theta_ref;
  j["mesh"] = {{"nodes", sweep.mesh_nodes}, {"cells", sweep.mesh_cells},
               {"max_edge_um", sweep.mesh_max_edge}, {"target_edge_um", cfg.mesh_edge}};
  j["regime_threshold_A"] = cfg.solver.regime_threshold;
  j["seed"] = cfg.seed;
  j["timings"] = {{"wall_seconds", sweep.wall_seconds}};
  return j;
}

std::string scan_csv(const PolarizationScan& scan) {
  std::ostringstream o;
  o << "angle_rad,energy_ueV,sigma_ueV\n";
  for (std::size_t i = 0; i < scan.angles.size(); ++i) {
    o << format_double(scan.angles[i]) << ',' << format_double(scan.peak_energies[i]) << ','
      << format_double(scan.sigma.empty() ? 0.0 : scan.sigma[i]) << '\n';
  }
  return o.str();
}

PolarizationScan parse_scan_csv(std::string_view text, std::string_view source) {
  const auto lines = split_lines(text);
  const std::string src(source);
  if (lines.empty()) throw InputError(src + ": empty scan");
  const auto header = split_csv_record(lines[0]);
  const std::vector<std::string> expected{"angle_rad", "energy_ueV", "sigma_ueV"};
  if (header != expected) {
    throw InputError(src + " row 1: header must be angle_rad,energy_ueV,sigma_ueV");
  }
  PolarizationScan scan;
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const std::string where = src + " row " + std::to_string(row + 1) + ": ";
    std::vector<std::string> f;
    try {
      f = split_csv_record(lines[row]);
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
    if (f.size() != 3) throw InputError(where + "expected 3 fields, got " + std::to_string(f.size()));
    try {
      scan.angles.push_back(parse_double(f[0]));
      scan.peak_energies.push_back(parse_double(f[1]));
      scan.sigma.push_back(parse_double(f[2]));
    } catch (const InputError& e) {
      throw InputError(where + e.what());
    }
  }
  return scan;
}

Json to_json(const FitResult& fit) {
  Json j;
  j["delta_fss_ueV"] = fit.delta_fss;
  j["theta0_rad"] = fit.theta0;
  j["offset_ueV"] = fit.offset;
  j["residual_rms_ueV"] = fit.residual_rms;
  j["sigma"] = {{"delta_fss_ueV", opt_number(fit.uncertainty(0))},
                {"theta0_rad", opt_number(fit.uncertainty(1))},
                {"offset_ueV", opt_number(fit.uncertainty(2))}};
  Json cov = Json::array();
  for (int r = 0; r < 3; ++r) {
    Json row = Json::array();
    for (int c = 0; c < 3; ++c) row.push_back(opt_number(fit.covariance(r, c)));
    cov.push_back(row);
  }
  j["covariance"] = cov;
  j["iterations"] = fit.iterations;
  return j;
}

FitResult fit_from_json(const Json& j) {
  FitResult f;
  f.delta_fss = j.at("delta_fss_ueV").get<double>();
  f.theta0 = j.at("theta0_rad").get<double>();
  f.offset = j.at("offset_ueV").get<double>();
  f.residual_rms = j.at("residual_rms_ueV").get<double>();
  f.uncertainty = {number_or_inf(j.at("sigma").at("delta_fss_ueV")),
                   number_or_inf(j.at("sigma").at("theta0_rad")),
                   number_or_inf(j.at("sigma").at("offset_ueV"))};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) f.covariance(r, c) = number_or_inf(j.at("covariance").at(r).at(c));
  }
  f.iterations = j.at("iterations").get<int>();
  return f;
}

Json bias_to_json(const BiasPoint& b) {
  Json j;
  const char* keys[3] = {"va", "vb", "vc"};
  for (int k = 0; k < 3; ++k) {
    const auto& v = b.v[static_cast<std::size_t>(k)];
    j[keys[k]] = v ? Json(*v) : Json("floating");
  }
  return j;
}

BiasPoint bias_from_json(const Json& j) {
  BiasPoint b;
  const char* keys[3] = {"va", "vb", "vc"};
  for (int k = 0; k < 3; ++k) {
    const Json& v = j.at(keys[k]);
    if (v.is_string()) {
      if (v.get<std::string>() != "floating") throw InputError("bias: unexpected value");
      b.v[static_cast<std::size_t>(k)] = std::nullopt;
    } else {
      b.v[static_cast<std::size_t>(k)] = v.get<double>();
    }
  }
  return b;
}

Json to_json(const TuneResult& t) {
  Json j;
  j["converged"] = t.converged;
  j["tol_ueV"] = t.tol;
  j["bias"] = bias_to_json(t.bias);
  j["fss_ueV"] = t.fss;
  j["theta0_rad"] = t.theta0;
  j["mean_energy_eV"] = t.mean_energy;
  j["approach"] = std::vector<double>(t.approach.data(), t.approach.data() + t.approach.size());
  j["eigenaxis"] = {{"verdict", axis_verdict_name(t.axis.verdict)},
                    {"rotation_rad", t.axis.rotation},
                    {"theta0_before_rad", t.axis.theta_start},
                    {"theta0_after_rad", t.axis.theta_end},
                    {"fss_before_ueV", t.axis.fss_start},
                    {"fss_after_ueV", t.axis.fss_end}};
  j["iterations"] = t.iterations;
  j["evaluations"] = t.evaluations;
  j["restarts"] = t.restarts;
  return j;
}

TuneResult tune_from_json(const Json& j) {
  TuneResult t;
  t.converged = j.at("converged").get<bool>();
  t.tol = j.at("tol_ueV").get<double>();
  t.bias = bias_from_json(j.at("bias"));
  t.fss = j.at("fss_ueV").get<double>();
  t.theta0 = j.at("theta0_rad").get<double>();
  t.mean_energy = j.at("mean_energy_eV").get<double>();
  const auto a = j.at("approach").get<std::vector<double>>();
  t.approach = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  const Json& e = j.at("eigenaxis");
  const std::string verdict = e.at("verdict").get<std::string>();
  for (AxisVerdict v : {AxisVerdict::kCrossing, AxisVerdict::kNoCrossing, AxisVerdict::kIndeterminate}) {
    if (verdict == axis_verdict_name(v)) t.axis.verdict = v;
  }
  t.axis.rotation = e.at("rotation_rad").get<double>();
  t.axis.theta_start = e.at("theta0_before_rad").get<double>();
  t.axis.theta_end = e.at("theta0_after_rad").get<double>();
  t.axis.fss_start = e.at("fss_before_ueV").get<double>();
  t.axis.fss_end = e.at("fss_after_ueV").get<double>();
  t.iterations = j.at("iterations").get<int>();
  t.evaluations = j.at("evaluations").get<int>();
  t.restarts = j.at("restarts").get<int>();
  return t;
}

Json solution_json(const FieldSolution& s, const ExcitonState& st, int region) {
  Json j;
  j["bias"] = bias_to_json(s.bias);
  j["e_inplane_V_per_m"] = {s.e_inplane.x() + 0.0, s.e_inplane.y() + 0.0};
  j["e_z_V_per_m"] = s.e_z;
  j["inplane_angle_deg"] = s.inplane_magnitude() > 0.0 ? rad_to_deg(s.inplane_angle()) : 0.0;
  j["currents_A"] = {{"a", s.i_a()}, {"b", s.i_b()}, {"c", s.i_c()}, {"junction", s.junction_current}};
  j["region"] = region;
  j["newton_iters"] = s.newton_iters;
  j["residual"] = s.residual;
  j["exciton"] = {{"fss_ueV", st.fss},
                  {"delta_ueV", {st.delta(0), st.delta(1)}},
                  {"theta0_rad", st.degenerate ? Json(nullptr) : Json(st.theta0)},
                  {"degenerate", st.degenerate},
                  {"mean_energy_eV", st.mean_energy},
                  {"e_high_eV", st.e_high},
                  {"e_low_eV", st.e_low}};
  return j;
}

Json iso_pairs_json(const SweepResult& sweep, const std::vector<IsoFssPair>& pairs, double target,
                    double separation) {
  Json j;
  j["config_hash"] = sweep.config_hash;
  j["target_fss_ueV"] = target;
  j["min_energy_separation_ueV"] = separation;
  j["count"] = pairs.size();
  Json arr = Json::array();
  for (const IsoFssPair& p : pairs) {
    const SweepRecord& a = sweep.records[static_cast<std::size_t>(p.first)];
    const SweepRecord& b = sweep.records[static_cast<std::size_t>(p.second)];
    arr.push_back({{"first", bias_to_json(a.bias)},
                   {"second", bias_to_json(b.bias)},
                   {"fss_first_ueV", p.fss_first},
                   {"fss_second_ueV", p.fss_second},
                   {"energy_separation_ueV", p.energy_separation}});
  }
  j["pairs"] = arr;
  return j;
}

std::string field_csv(const Mesh& mesh, const Eigen::VectorXd& phi) {
  std::ostringstream o;
  o << "index,x_um,y_um,region,phi_V\n";
  for (int i = 0; i < mesh.node_count(); ++i) {
    o << i << ',' << format_double(mesh.nodes(0, i)) << ',' << format_double(mesh.nodes(1, i)) << ','
      << region_name(mesh.region[static_cast<std::size_t>(i)]) << ',' << format_double(phi(i)) << '\n';
  }
  return o.str();
}

}  // namespace pillarfss
