#include "pillarfss/device.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pillarfss/error.hpp"

namespace pillarfss {

namespace {

constexpr double kBoltzmannOverCharge = 8.617333262e-5;  // V/K
constexpr int kDiscSides = 64;

double wrap_two_pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  return a < 0.0 ? a + 2.0 * kPi : a;
}

Eigen::Matrix2d rotation(double angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

Polygon local_rectangle(double u_min, double u_max, double half_width, double angle) {
  Polygon p(2, 4);
  p << u_min, u_max, u_max, u_min, -half_width, -half_width, half_width, half_width;
  return rotation(angle) * p;
}

// Separating-axis test for convex polygons; touching edges do not count.
bool polygons_overlap(const Polygon& a, const Polygon& b) {
  constexpr double kTouch = 1e-9;
  for (const Polygon* poly : {&a, &b}) {
    const Eigen::Index n = poly->cols();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d edge = poly->col((i + 1) % n) - poly->col(i);
      const Eigen::Vector2d axis(-edge.y(), edge.x());
      const Eigen::VectorXd pa = a.transpose() * axis;
      const Eigen::VectorXd pb = b.transpose() * axis;
      const double scale = axis.norm();
      if (pa.maxCoeff() <= pb.minCoeff() + kTouch * scale ||
          pb.maxCoeff() <= pa.minCoeff() + kTouch * scale) {
        return false;
      }
    }
  }
  return true;
}

double polygon_area(const Polygon& p) {
  double twice = 0.0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const Eigen::Index j = (i + 1) % p.cols();
    twice += p(0, i) * p(1, j) - p(0, j) * p(1, i);
  }
  return 0.5 * twice;
}

// Arms sorted by angle, with the angular gap to the neighbours on each side.
struct ArmOrder {
  std::array<int, 3> order{};      // terminal index at sorted position s
  std::array<double, 3> gap_next{};  // gap from sorted position s to s+1
};

ArmOrder sort_arms(const DeviceGeometry& g) {
  ArmOrder ao;
  std::iota(ao.order.begin(), ao.order.end(), 0);
  std::array<double, 3> a{};
  for (int k = 0; k < 3; ++k) a[k] = wrap_two_pi(g.ridge_angles[k]);
  std::sort(ao.order.begin(), ao.order.end(), [&](int x, int y) { return a[x] < a[y]; });
  for (int s = 0; s < 3; ++s) {
    const double from = a[ao.order[s]];
    const double to = a[ao.order[(s + 1) % 3]];
    ao.gap_next[s] = wrap_two_pi(to - from);
  }
  return ao;
}

}  // namespace

const char* terminal_name(Terminal t) {
  switch (t) {
    case Terminal::A: return "A";
    case Terminal::B: return "B";
    case Terminal::C: return "C";
  }
  return "?";
}

const char* region_name(Region r) {
  switch (r) {
    case Region::PadA: return "PAD_A";
    case Region::PadB: return "PAD_B";
    case Region::PadC: return "PAD_C";
    case Region::Free: return "FREE";
  }
  return "?";
}

double thermal_voltage_at(double temperature_kelvin) {
  return kBoltzmannOverCharge * temperature_kelvin;
}

void DeviceGeometry::validate() const {
  auto fail = [](const std::string& msg) { throw GeometryError("geometry: " + msg); };
  if (!(pillar_diameter > 0.0)) fail("pillar_diameter must be > 0");
  if (!(ridge_width > 0.0)) fail("ridge_width must be > 0");
  if (!(ridge_width < pillar_diameter)) fail("ridge_width must be smaller than pillar_diameter");
  if (!(ridge_length > 0.0)) fail("ridge_length must be > 0 (degenerate ridge)");
  if (!(pad_size >= ridge_width)) fail("pad_size must be at least ridge_width");
  if (!(intrinsic_thickness > 0.0)) fail("intrinsic_thickness must be > 0");
  if (!(built_in_voltage > 0.0)) fail("built_in_voltage must be > 0");
  for (double a : ridge_angles) {
    if (!std::isfinite(a)) fail("ridge angles must be finite");
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const double d = wrap_two_pi(ridge_angles[i] - ridge_angles[j]);
      if (d < 1e-9 || 2.0 * kPi - d < 1e-9) {
        fail("ridge angles " + std::to_string(i) + " and " + std::to_string(j) +
             " coincide modulo 2pi");
      }
    }
  }
}

void MaterialParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("materials: " + msg); };
  if (!(sheet_conductance > 0.0)) fail("sheet_conductance must be > 0");
  // Zero saturation current is the Laplace limit and is allowed.
  if (!(saturation_current_density >= 0.0) || !std::isfinite(saturation_current_density)) {
    fail("saturation_current_density must be >= 0");
  }
  if (!(ideality >= 1.0 && ideality <= 2.0)) fail("ideality must lie in [1, 2]");
  if (!(thermal_voltage > 0.0)) fail("thermal_voltage must be > 0");
  for (double r : series_resistance) {
    if (!(r > 0.0) || !std::isfinite(r)) fail("series resistances must be > 0");
  }
}

double Footprint::total_area() const {
  double a = polygon_area(pillar);
  for (const auto& r : ridges) a += polygon_area(r);
  for (const auto& p : pads) a += polygon_area(p);
  return a;
}

Footprint build_geometry(const DeviceGeometry& geometry) {
  geometry.validate();
  const double radius = 0.5 * geometry.pillar_diameter;
  const double half_w = 0.5 * geometry.ridge_width;
  const double beta = std::asin(half_w / radius);
  const double u0 = radius * std::cos(beta);

  const ArmOrder ao = sort_arms(geometry);
  for (int s = 0; s < 3; ++s) {
    if (ao.gap_next[s] <= 2.0 * beta + 1e-6) {
      throw GeometryError("geometry: ridges " + std::to_string(ao.order[s]) + " and " +
                          std::to_string(ao.order[(s + 1) % 3]) + " overlap at the pillar rim");
    }
  }

  Footprint fp;
  fp.geometry = geometry;

  // Disc polygon: arcs between ridges, chords where ridges attach.
  std::vector<Eigen::Vector2d> rim;
  const double step = 2.0 * kPi / kDiscSides;
  for (int s = 0; s < 3; ++s) {
    const double a = geometry.ridge_angles[ao.order[s]];
    rim.emplace_back(radius * std::cos(a - beta), radius * std::sin(a - beta));
    rim.emplace_back(radius * std::cos(a + beta), radius * std::sin(a + beta));
    const double arc = ao.gap_next[s] - 2.0 * beta;
    const int n = std::max(1, static_cast<int>(std::ceil(arc / step)));
    for (int j = 1; j < n; ++j) {
      const double t = a + beta + arc * j / n;
      rim.emplace_back(radius * std::cos(t), radius * std::sin(t));
    }
  }
  fp.pillar.resize(2, static_cast<Eigen::Index>(rim.size()));
  for (std::size_t i = 0; i < rim.size(); ++i) fp.pillar.col(static_cast<Eigen::Index>(i)) = rim[i];

  for (int k = 0; k < 3; ++k) {
    const double a = geometry.ridge_angles[k];
    fp.ridges[k] = local_rectangle(u0, u0 + geometry.ridge_length, half_w, a);
    const double pad_start = u0 + geometry.ridge_length;
    fp.pads[k] = local_rectangle(pad_start, pad_start + geometry.pad_size,
                                 0.5 * geometry.pad_size, a);
  }

  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      if (j > i && polygons_overlap(fp.pads[i], fp.pads[j])) {
        throw GeometryError("geometry: pads " + std::to_string(i) + " and " +
                            std::to_string(j) + " overlap");
      }
      if (polygons_overlap(fp.pads[i], fp.ridges[j])) {
        throw GeometryError("geometry: pad " + std::to_string(i) + " overlaps ridge " +
                            std::to_string(j));
      }
      if (j > i && polygons_overlap(fp.ridges[i], fp.ridges[j])) {
        throw GeometryError("geometry: ridges " + std::to_string(i) + " and " +
                            std::to_string(j) + " overlap");
      }
    }
  }
  return fp;
}

// ---------------------------------------------------------------------------
// Mesh

std::vector<int> Mesh::nodes_in(Region r) const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i) {
    if (region[static_cast<std::size_t>(i)] == r) out.push_back(i);
  }
  return out;
}

Eigen::VectorXd Mesh::cell_areas() const {
  Eigen::VectorXd a(cell_count());
  for (int c = 0; c < cell_count(); ++c) {
    const Eigen::Vector2d e1 = nodes.col(cells(1, c)) - nodes.col(cells(0, c));
    const Eigen::Vector2d e2 = nodes.col(cells(2, c)) - nodes.col(cells(0, c));
    a(c) = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  }
  return a;
}

Eigen::VectorXd Mesh::lumped_areas() const {
  Eigen::VectorXd lumped = Eigen::VectorXd::Zero(node_count());
  const Eigen::VectorXd a = cell_areas();
  for (int c = 0; c < cell_count(); ++c) {
    for (int k = 0; k < 3; ++k) lumped(cells(k, c)) += a(c) / 3.0;
  }
  return lumped;
}

double Mesh::max_edge_length() const {
  double m = 0.0;
  for (int c = 0; c < cell_count(); ++c) {
    for (int k = 0; k < 3; ++k) {
      m = std::max(m, (nodes.col(cells(k, c)) - nodes.col(cells((k + 1) % 3, c))).norm());
    }
  }
  return m;
}

bool Mesh::is_connected() const {
  const int n = node_count();
  if (n <= 1) return n == 1;
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (int c = 0; c < cell_count(); ++c) {
    for (int k = 1; k < 3; ++k) {
      const int a = find(cells(0, c));
      const int b = find(cells(k, c));
      if (a != b) parent[static_cast<std::size_t>(a)] = b;
    }
  }
  const int root = find(0);
  for (int i = 1; i < n; ++i) {
    if (find(i) != root) return false;
  }
  return true;
}

void Mesh::validate(bool require_all_pads) const {
  if (node_count() == 0) throw MeshError("mesh: no nodes");
  if (static_cast<int>(region.size()) != node_count()) {
    throw MeshError("mesh: region tag count does not match node count");
  }
  if ((cells.array() < 0).any() || (cells.array() >= node_count()).any()) {
    throw MeshError("mesh: cell references a missing node");
  }
  const Eigen::VectorXd a = cell_areas();
  for (int c = 0; c < cell_count(); ++c) {
    if (!(a(c) > 0.0)) {
      throw MeshError("mesh: cell " + std::to_string(c) + " has non-positive area");
    }
  }
  if (!is_connected()) throw MeshError("mesh: not connected");
  int populated = 0;
  for (int t = 0; t < kTerminals; ++t) {
    const bool any = !nodes_in(static_cast<Region>(t)).empty();
    populated += any ? 1 : 0;
    if (require_all_pads && !any) {
      throw MeshError(std::string("mesh: tag ") + region_name(static_cast<Region>(t)) +
                      " is empty");
    }
  }
  if (populated == 0) throw MeshError("mesh: no contact region");
  if (qd_node < 0 || qd_node >= node_count()) throw MeshError("mesh: qd_node out of range");
}

namespace {

struct ChainNode {
  int id;
  double angle;  // local polar angle, used for ordering only
};

class MeshBuilder {
 public:
  int add(const Eigen::Vector2d& p, Region r = Region::Free) {
    points_.push_back(p);
    region_.push_back(r);
    return static_cast<int>(points_.size()) - 1;
  }
  void tri(int a, int b, int c) { tris_.push_back({a, b, c}); }

  // Triangulates the band between two angularly ordered chains that share
  // their first and last radial boundary lines.
  void zip(const std::vector<ChainNode>& inner, const std::vector<ChainNode>& outer) {
    std::size_t i = 0;
    std::size_t j = 0;
    const std::size_t m = inner.size() - 1;
    const std::size_t n = outer.size() - 1;
    while (i < m || j < n) {
      const bool advance_outer =
          i == m || (j < n && outer[j + 1].angle <= inner[i + 1].angle + 1e-12);
      if (advance_outer) {
        tri(inner[i].id, outer[j].id, outer[j + 1].id);
        ++j;
      } else {
        tri(inner[i].id, outer[j].id, inner[i + 1].id);
        ++i;
      }
    }
  }

  Mesh finish() && {
    Mesh mesh;
    mesh.nodes.resize(2, static_cast<Eigen::Index>(points_.size()));
    for (std::size_t i = 0; i < points_.size(); ++i) {
      mesh.nodes.col(static_cast<Eigen::Index>(i)) = points_[i];
    }
    mesh.cells.resize(3, static_cast<Eigen::Index>(tris_.size()));
    for (std::size_t c = 0; c < tris_.size(); ++c) {
      for (int k = 0; k < 3; ++k) mesh.cells(k, static_cast<Eigen::Index>(c)) = tris_[c][k];
    }
    mesh.region = std::move(region_);
    return mesh;
  }

  // Splits the quad (a0,b0)-(a1,b1) along the diagonal mirrored about v=0.
  void quad(int n00, int n10, int n11, int n01, bool lower_half) {
    if (lower_half) {
      tri(n00, n10, n11);
      tri(n00, n11, n01);
    } else {
      tri(n00, n10, n01);
      tri(n10, n11, n01);
    }
  }

 private:
  std::vector<Eigen::Vector2d> points_;
  std::vector<Region> region_;
  std::vector<std::array<int, 3>> tris_;
};

int segments(double length, double h, int minimum = 1) {
  return std::max(minimum, static_cast<int>(std::ceil(length / h - 1e-9)));
}

}  // namespace

Mesh generate_mesh(const Footprint& footprint, double target_edge_length) {
  const DeviceGeometry& g = footprint.geometry;
  const double h = target_edge_length;
  if (!(h > 0.0) || !std::isfinite(h)) throw MeshError("mesh: target edge length must be > 0");
  const double radius = 0.5 * g.pillar_diameter;
  const double half_w = 0.5 * g.ridge_width;
  const double beta = std::asin(half_w / radius);
  const double u0 = radius * std::cos(beta);

  const int rings = segments(radius, h, 2);
  if (radius * (rings - 1) / rings >= u0) {
    throw MeshError("mesh: edge length too small to resolve the ridge chord; footprint unmeshable");
  }
  const ArmOrder ao = sort_arms(g);

  // Ridge cross-section uses an even count so v = 0 is a grid line.
  int n_w = segments(g.ridge_width, h, 2);
  if (n_w % 2) ++n_w;
  const int n_ext = segments(0.5 * (g.pad_size - g.ridge_width), h, 0);
  const int n_len = segments(g.ridge_length, h);
  const int n_pad = segments(g.pad_size, h);

  MeshBuilder mb;
  const int center = mb.add(Eigen::Vector2d::Zero());

  // bisector[s][i]: node on the radial line between sorted arms s and s+1.
  std::array<std::vector<int>, 3> bisector;
  for (auto& b : bisector) b.assign(static_cast<std::size_t>(rings) + 1, -1);
  auto bisector_node = [&](int s, int ring) {
    int& id = bisector[static_cast<std::size_t>(s)][static_cast<std::size_t>(ring)];
    if (id < 0) {
      const double a = g.ridge_angles[ao.order[s]] + 0.5 * ao.gap_next[s];
      const double r = radius * ring / rings;
      id = mb.add(Eigen::Vector2d(r * std::cos(a), r * std::sin(a)));
    }
    return id;
  };

  std::array<std::vector<int>, 3> chord_nodes;

  for (int s = 0; s < 3; ++s) {
    const int arm = ao.order[s];
    const int s_prev = (s + 2) % 3;
    const double alpha = g.ridge_angles[arm];
    const Eigen::Matrix2d rot = rotation(alpha);
    const double a_lo = -0.5 * ao.gap_next[s_prev];
    const double a_hi = 0.5 * ao.gap_next[s];
    const double span = a_hi - a_lo;
    auto add_local = [&](double u, double v) { return mb.add(rot * Eigen::Vector2d(u, v)); };

    std::vector<ChainNode> inner{{center, 0.0}};
    for (int ring = 1; ring <= rings; ++ring) {
      const double r = radius * ring / rings;
      std::vector<ChainNode> chain;
      chain.push_back({bisector_node(s_prev, ring), a_lo});
      if (ring < rings) {
        const int n = segments(r * span, h, 2);
        for (int j = 1; j < n; ++j) {
          const double t = a_lo + span * j / n;
          chain.push_back({add_local(r * std::cos(t), r * std::sin(t)), t});
        }
      } else {
        const int n1 = segments(radius * (-beta - a_lo), h);
        for (int j = 1; j < n1; ++j) {
          const double t = a_lo + (-beta - a_lo) * j / n1;
          chain.push_back({add_local(radius * std::cos(t), radius * std::sin(t)), t});
        }
        for (int j = 0; j <= n_w; ++j) {
          const double v = -half_w + g.ridge_width * j / n_w;
          const int id = add_local(u0, v);
          chord_nodes[static_cast<std::size_t>(arm)].push_back(id);
          chain.push_back({id, std::atan2(v, u0)});
        }
        const int n2 = segments(radius * (a_hi - beta), h);
        for (int j = 1; j < n2; ++j) {
          const double t = beta + (a_hi - beta) * j / n2;
          chain.push_back({add_local(radius * std::cos(t), radius * std::sin(t)), t});
        }
      }
      chain.push_back({bisector_node(s, ring), a_hi});
      mb.zip(inner, chain);
      inner = std::move(chain);
    }

    // Arm: tensor grid over ridge and pad in the arm frame.
    std::vector<double> us;
    for (int a = 0; a <= n_len; ++a) us.push_back(u0 + g.ridge_length * a / n_len);
    for (int a = 1; a <= n_pad; ++a) us.push_back(u0 + g.ridge_length + g.pad_size * a / n_pad);
    std::vector<double> vs;
    const double ext = 0.5 * (g.pad_size - g.ridge_width);
    for (int b = 0; b < n_ext; ++b) vs.push_back(-0.5 * g.pad_size + ext * b / n_ext);
    for (int b = 0; b <= n_w; ++b) vs.push_back(-half_w + g.ridge_width * b / n_w);
    for (int b = 1; b <= n_ext; ++b) vs.push_back(half_w + ext * b / n_ext);
    const int nu = static_cast<int>(us.size());
    const int nv = static_cast<int>(vs.size());
    const int ridge_lo = n_ext;
    const int ridge_hi = n_ext + n_w;
    const Region pad_tag = pad_region(static_cast<Terminal>(arm));

    std::vector<std::vector<int>> id(static_cast<std::size_t>(nu),
                                     std::vector<int>(static_cast<std::size_t>(nv), -1));
    for (int a = 0; a < nu; ++a) {
      for (int b = 0; b < nv; ++b) {
        const bool in_ridge = b >= ridge_lo && b <= ridge_hi;
        if (a < n_len && !in_ridge) continue;
        int node;
        if (a == 0) {
          node = chord_nodes[static_cast<std::size_t>(arm)][static_cast<std::size_t>(b - ridge_lo)];
        } else {
          node = mb.add(rot * Eigen::Vector2d(us[static_cast<std::size_t>(a)],
                                              vs[static_cast<std::size_t>(b)]),
                        a == nu - 1 ? pad_tag : Region::Free);
        }
        id[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = node;
      }
    }
    for (int a = 0; a + 1 < nu; ++a) {
      const int b_lo = a < n_len ? ridge_lo : 0;
      const int b_hi = a < n_len ? ridge_hi : nv - 1;
      for (int b = b_lo; b < b_hi; ++b) {
        const auto ua = static_cast<std::size_t>(a);
        const auto vb = static_cast<std::size_t>(b);
        const double v_mid = 0.5 * (vs[vb] + vs[vb + 1]);
        mb.quad(id[ua][vb], id[ua + 1][vb], id[ua + 1][vb + 1], id[ua][vb + 1], v_mid < 0.0);
      }
    }
  }

  Mesh mesh = std::move(mb).finish();
  mesh.qd_node = center;
  mesh.center = Eigen::Vector2d::Zero();
  mesh.validate(true);
  return mesh;
}

Mesh rectangle_mesh(double length, double width, double target_edge_length) {
  if (!(length > 0.0 && width > 0.0 && target_edge_length > 0.0)) {
    throw MeshError("mesh: rectangle dimensions and edge length must be > 0");
  }
  int nx = segments(length, target_edge_length, 2);
  int ny = segments(width, target_edge_length, 2);
  nx += nx % 2;
  ny += ny % 2;
  MeshBuilder mb;
  std::vector<int> id(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  auto at = [&](int i, int j) -> int& { return id[static_cast<std::size_t>(j * (nx + 1) + i)]; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const Region r = i == 0 ? Region::PadA : (i == nx ? Region::PadB : Region::Free);
      at(i, j) = mb.add(Eigen::Vector2d(length * i / nx, width * j / ny), r);
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mb.quad(at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1), j < ny / 2);
    }
  }
  Mesh mesh = std::move(mb).finish();
  mesh.qd_node = at(nx / 2, ny / 2);
  mesh.center = Eigen::Vector2d(0.5 * length, 0.5 * width);
  mesh.validate();
  return mesh;
}

void write_mesh_nodes_csv(const Mesh& mesh, std::ostream& out) {
  out << "index,x_um,y_um,region\n";
  out.precision(12);
  for (int i = 0; i < mesh.node_count(); ++i) {
    out << i << ',' << mesh.nodes(0, i) << ',' << mesh.nodes(1, i) << ','
        << region_name(mesh.region[static_cast<std::size_t>(i)]) << '\n';
  }
}

void write_mesh_cells_csv(const Mesh& mesh, std::ostream& out) {
  out << "index,n0,n1,n2\n";
  for (int c = 0; c < mesh.cell_count(); ++c) {
    out << c << ',' << mesh.cells(0, c) << ',' << mesh.cells(1, c) << ',' << mesh.cells(2, c)
        << '\n';
  }
}

}  // namespace pillarfss
