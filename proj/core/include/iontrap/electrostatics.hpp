#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "iontrap/axial_potential.hpp"
#include "iontrap/species.hpp"

// Planar surface-electrode trap in the gapless-plane approximation.
//
// Axes: x runs along the trap (and cavity) axis, y is transverse in the
// electrode plane, z is the height above the plane. All lengths are metres,
// potentials volts, fields V/m; pseudopotential and trap energies are eV.
namespace iontrap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct RectPatch {
  double x1 = 0.0;
  double x2 = 0.0;
  double y1 = 0.0;
  double y2 = 0.0;

  bool valid() const { return x1 < x2 && y1 < y2; }
  double area() const { return (x2 - x1) * (y2 - y1); }
};

enum class ElectrodeRole { rf, dc, periodic_inner, periodic_outer };

std::string_view to_string(ElectrodeRole role);
ElectrodeRole electrode_role_from_string(std::string_view name);

/// One electrically connected electrode made of one or more patches.
/// RF electrodes carry the drive amplitude plus an optional DC offset.
struct Electrode {
  std::string name;
  ElectrodeRole role = ElectrodeRole::dc;
  double dc_voltage = 0.0;
  std::vector<RectPatch> patches;
};

struct RfDrive {
  double amplitude = 0.0;          // V, zero-to-peak
  double angular_frequency = 0.0;  // rad/s
};

class TrapLayout {
 public:
  TrapLayout() = default;
  /// Validates patches (x1 < x2, y1 < y2, disjoint interiors), requires at
  /// least one RF electrode and a positive drive frequency.
  TrapLayout(std::vector<Electrode> electrodes, RfDrive drive);

  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  const RfDrive& drive() const { return drive_; }

  std::string label;
  std::string provenance;
  double array_period = 0.0;  // m; 0 when the layout has no periodic array

  const Electrode& electrode(std::string_view name) const;
  bool has_role(ElectrodeRole role) const;

  TrapLayout with_drive(RfDrive drive) const;
  TrapLayout with_dc_voltage(std::string_view name, double volts) const;
  /// Sets the DC voltage of every electrode with the given role.
  TrapLayout with_role_voltage(ElectrodeRole role, double volts) const;
  /// Zeroes every DC voltage (RF electrodes included).
  TrapLayout without_dc() const;
  TrapLayout translated(double dx, double dy) const;
  /// Multiplies every length by s; voltages and drive unchanged.
  TrapLayout scaled(double s) const;
  /// Layout holding only the RF electrodes, used where the DC part is irrelevant.
  TrapLayout rf_only() const;

  /// Midpoint of the RF electrodes' bounding box, on the plane (z = 0).
  Vec3 rf_center() const;
  /// Largest transverse distance from rf_center() to an RF patch edge.
  double rf_half_width() const;

 private:
  std::vector<Electrode> electrodes_;
  RfDrive drive_;
};

// ---------------------------------------------------------------------------
// Field evaluation

/// Potential of a rectangular patch held at `voltage` in an otherwise
/// grounded infinite plane. Throws DomainError unless p.z() > 0.
double patch_potential(const RectPatch& patch, double voltage, const Vec3& p);
/// Electric field (-grad of patch_potential), analytic.
Vec3 patch_field(const RectPatch& patch, double voltage, const Vec3& p);

struct DcSample {
  double potential = 0.0;  // V
  Vec3 field = Vec3::Zero();
};

/// Superposed DC potential and field of every electrode's dc_voltage.
DcSample total_dc(const TrapLayout& layout, const Vec3& p);
/// Field gradient J(i, j) = dE_i / dx_j of the DC part.
Mat3 dc_field_gradient(const TrapLayout& layout, const Vec3& p);

/// RF field amplitude (drive amplitude times the unit-voltage RF field).
Vec3 rf_field(const TrapLayout& layout, const Vec3& p);
/// Field gradient J(i, j) = dE_i / dx_j of the RF amplitude field.
Mat3 rf_field_gradient(const TrapLayout& layout, const Vec3& p);

/// Ponderomotive potential e^2 |E_rf|^2 / (4 m Omega^2), in eV.
double pseudopotential(const TrapLayout& layout, const IonSpecies& species, const Vec3& p);

struct FieldPoint {
  Vec3 position = Vec3::Zero();
  double dc_potential = 0.0;
  Vec3 dc_field = Vec3::Zero();
  Vec3 rf_field = Vec3::Zero();
  double pseudopotential = 0.0;  // eV
};

FieldPoint evaluate(const TrapLayout& layout, const IonSpecies& species, const Vec3& p);

/// Secular potential energy (pseudopotential plus DC), eV.
double trap_energy(const TrapLayout& layout, const IonSpecies& species, const Vec3& p);
/// Gradient of trap_energy, eV/m.
Vec3 trap_energy_gradient(const TrapLayout& layout, const IonSpecies& species, const Vec3& p);
/// Hessian of trap_energy, eV/m^2, from central differences of the analytic gradient.
Mat3 trap_energy_hessian(const TrapLayout& layout, const IonSpecies& species, const Vec3& p,
                         double step = 1e-8);

// ---------------------------------------------------------------------------
// Trap analysis

struct NullOptions {
  double tolerance = 1e-3;              // V/m, on the unit-drive-scaled |E_rf|
  std::optional<double> axial_position;  // defaults to rf_center().x()
  int max_iterations = 100;
};

struct RfNull {
  Vec3 position = Vec3::Zero();
  double residual = 0.0;  // |E_rf| at position, V/m
  int iterations = 0;
  double height() const { return position.z(); }
};

/// Locates the RF nodal line in the transverse plane at a fixed axial
/// position. Newton iterations on E_rf = 0 (Gauss-Newton on |E_rf|^2) are
/// seeded at several heights on the symmetry plane; the lowest converged
/// null is returned. Throws ConvergenceError with the best residual.
RfNull find_rf_null(const TrapLayout& layout, const NullOptions& options = {});

struct TrapCharacterization {
  Vec3 null_position = Vec3::Zero();
  Vec3 equilibrium = Vec3::Zero();
  /// Secular frequencies (rad/s): [radial low, radial high, axial].
  Vec3 frequencies = Vec3::Zero();
  /// Matching principal axes as columns.
  Mat3 axes = Mat3::Identity();
  bool axially_confined = false;
  /// Signed Mathieu q along the principal axes of the RF field gradient.
  Vec3 rf_q = Vec3::Zero();
  Mat3 rf_axes = Mat3::Identity();
  double mathieu_q = 0.0;
  double depth = 0.0;  // eV
  double drive_frequency = 0.0;

  double height() const { return equilibrium.z(); }
  double omega_radial_low() const { return frequencies[0]; }
  double omega_radial_high() const { return frequencies[1]; }
  double omega_axial() const { return frequencies[2]; }

  /// Ideal linear quadrupole: radial axes y and z, axial axis x.
  static TrapCharacterization ideal_linear(double omega_radial, double mathieu_q,
                                           double drive_frequency, double omega_axial = 0.0);
};

struct CharacterizeOptions {
  NullOptions null;
  bool compute_depth = true;
  double depth_step_fraction = 0.01;  // escape-path step, in units of the trap height
  double depth_max_distance = 8.0;    // escape-path length limit, in trap heights
  /// Axial curvature below this fraction of the radial curvature counts as unconfined.
  double axial_floor = 1e-6;
};

/// Null, secular frequencies, Mathieu q and depth of the layout with its
/// current RF drive and DC voltages. Throws UnstableError when the secular
/// Hessian is not positive definite in the radial plane (or negative axially).
TrapCharacterization characterize(const TrapLayout& layout, const IonSpecies& species,
                                  const CharacterizeOptions& options = {});

/// Escape barrier from `minimum` along the radial direction `direction`,
/// relaxing the perpendicular radial coordinate. Returns barrier - minimum in eV.
double escape_depth(const TrapLayout& layout, const IonSpecies& species, const Vec3& minimum,
                    const Vec3& direction, const Vec3& perpendicular, double length_scale,
                    const CharacterizeOptions& options = {});

// ---------------------------------------------------------------------------
// Periodic array potential

struct PeriodicFitOptions {
  std::optional<double> transverse_position;  // defaults to rf_center().y()
  int periods_each_side = 5;
  int samples_per_period = 32;
  double residual_warning = 0.05;  // rms residual / amplitude
};

struct PeriodicPotential {
  std::vector<double> x;          // sample positions, m
  std::vector<double> potential;  // V
  std::vector<double> fitted;     // model evaluated at x, V
  AxialPotentialModel model;
  double residual_rms = 0.0;  // V
  std::vector<std::string> warnings;
};

/// Axial potential produced by the periodic electrodes alone (all other DC
/// voltages zero) at the given height, with a fitted quartic-plus-cosine
/// model. The cosine period is a fit parameter.
PeriodicPotential periodic_axial_potential(const TrapLayout& layout, double inner_volts,
                                           double outer_volts, double height,
                                           const PeriodicFitOptions& options = {});

/// Least-squares fit of quartic-plus-cosine to sampled data with the period
/// searched around `period_guess`.
AxialPotentialModel fit_axial_model(const std::vector<double>& x, const std::vector<double>& v,
                                    double period_guess, double center);

}  // namespace iontrap
