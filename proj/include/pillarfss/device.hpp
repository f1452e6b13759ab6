#pragma once

// Lateral footprint of the three-contact micropillar device and its
// triangular discretization.
//
// Lengths are in micrometres throughout the geometry and mesh. The pillar
// is centred at the origin; ridge k leaves the pillar rim along
// ridge_angles[k] and ends in a square contact pad.

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pillarfss {

constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Contact index. A/B/C follow the ordering of DeviceGeometry::ridge_angles.
enum class Terminal : int { A = 0, B = 1, C = 2 };
inline constexpr int kTerminals = 3;

const char* terminal_name(Terminal t);

struct DeviceGeometry {
  double pillar_diameter = 10.0;  // um
  double ridge_width = 3.0;       // um
  double ridge_length = 50.0;     // um
  std::array<double, 3> ridge_angles{deg_to_rad(90.0), deg_to_rad(210.0),
                                     deg_to_rad(330.0)};  // rad, from +x
  double pad_size = 20.0;              // um, square pad edge
  double intrinsic_thickness = 265.0;  // nm
  double built_in_voltage = 1.5;       // V

  /// Throws GeometryError when an invariant is violated.
  void validate() const;
};

/// Per-contact and sheet parameters of the p-layer / vertical junction.
struct MaterialParams {
  double sheet_conductance = 2.0e-5;       // S per square
  double saturation_current_density = 0.0;  // A/um^2
  double ideality = 2.0;
  double thermal_voltage = 0.025852;  // V
  std::array<double, 3> series_resistance{1.0e6, 1.0e6, 1.0e6};  // ohm

  void validate() const;
};

/// kT/q in volts.
double thermal_voltage_at(double temperature_kelvin);

/// Convex polygon, vertices counter-clockwise, one column per vertex.
using Polygon = Eigen::Matrix2Xd;

struct Footprint {
  DeviceGeometry geometry;
  Polygon pillar;                 // polygonal disc with the three ridge chords
  std::array<Polygon, 3> ridges;  // rectangles, rim chord to pad edge
  std::array<Polygon, 3> pads;

  double total_area() const;
};

/// Builds the footprint polygons; throws GeometryError on overlapping or
/// degenerate parts.
Footprint build_geometry(const DeviceGeometry& geometry);

enum class Region : int { PadA = 0, PadB = 1, PadC = 2, Free = 3 };

inline Region pad_region(Terminal t) { return static_cast<Region>(static_cast<int>(t)); }

const char* region_name(Region r);

struct Mesh {
  Eigen::Matrix2Xd nodes;  // um
  Eigen::Matrix3Xi cells;  // counter-clockwise node triples
  std::vector<Region> region;  // per node
  int qd_node = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();  // geometric pillar centre

  int node_count() const { return static_cast<int>(nodes.cols()); }
  int cell_count() const { return static_cast<int>(cells.cols()); }

  std::vector<int> nodes_in(Region r) const;
  Eigen::VectorXd cell_areas() const;     // signed, um^2
  Eigen::VectorXd lumped_areas() const;   // per node, um^2
  double max_edge_length() const;
  bool is_connected() const;

  /// Throws MeshError unless every cell has positive area, the mesh is
  /// connected, and at least one pad tag is populated. With
  /// require_all_pads, all three pad tags must be non-empty.
  void validate(bool require_all_pads = false) const;
};

/// Conforming triangulation of the footprint with edges near
/// target_edge_length. The pillar is meshed as three polar sectors, each arm
/// (ridge + pad) as a tensor grid, so a rotationally symmetric layout yields
/// a rotationally symmetric mesh.
Mesh generate_mesh(const Footprint& footprint, double target_edge_length);

/// Rectangle [0,length] x [0,width] with the left edge tagged PAD_A and the
/// right edge tagged PAD_B. Used for Laplace-limit checks.
Mesh rectangle_mesh(double length, double width, double target_edge_length);

/// Writes "index,x_um,y_um,region" rows.
void write_mesh_nodes_csv(const Mesh& mesh, std::ostream& out);
/// Writes "index,n0,n1,n2" rows.
void write_mesh_cells_csv(const Mesh& mesh, std::ostream& out);

}  // namespace pillarfss
