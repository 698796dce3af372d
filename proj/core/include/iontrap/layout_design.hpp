#pragma once

#include <array>
#include <optional>

#include "iontrap/electrostatics.hpp"

namespace iontrap {

/// Parametrised five-wire planar trap with an interdigitated periodic
/// section in the center electrode and 24 segmented DC electrodes.
///
/// Transverse profile (y): DC | RF | center | RF | DC. Inside the array
/// region each period holds a full-width inner tab over `inner_duty` of the
/// period; the rest of the period is a narrow inner lane flanked by the
/// outer periodic electrodes.
struct FiveWireGeometry {
  double center_width = 140e-6;
  double rf_width = 186e-6;
  double array_period = 160e-6;
  int array_sites = 50;
  double inner_lane_width = 10e-6;
  double inner_duty = 0.5;
  double chip_width = 2.3e-3;
  double chip_length = 18e-3;
  int dc_per_side = 12;

  void validate() const;
};

TrapLayout build_five_wire(const FiveWireGeometry& geometry, const RfDrive& drive);

/// x position of the array well closest to the layout center.
double central_well_position(const FiveWireGeometry& geometry);

struct DesignTargets {
  double height = 134e-6;
  double mathieu_q = 0.22;
  double omega_radial = 0.0;  // rad/s
  /// Optional depth target (eV); enters the least-squares cost with depth_weight.
  std::optional<double> depth;
  double depth_weight = 0.25;
  /// Outer/inner periodic voltage ratio that must leave the trap undisplaced.
  double periodic_ratio = -0.9;
};

struct DesignOptions {
  double tolerance = 0.05;  // max relative residual on height, q and omega
  double min_length = 1e-6;
  double max_length = 10e-3;
  int max_iterations = 100;
};

struct DesignResult {
  FiveWireGeometry geometry;
  TrapLayout layout;
  TrapCharacterization achieved;
  /// Relative residuals: height, q, omega, depth (0 when no depth target).
  std::array<double, 4> residuals{};
  /// |E_z| at the central well with the periodic ratio applied, divided by
  /// |E_z| with the outer electrodes grounded.
  double vertical_field_ratio = 0.0;
};

/// Fits center and RF widths to the targets by multi-start Levenberg-Marquardt
/// on the forward model, then fits the periodic duty so the out-of-plane DC
/// field vanishes at the central well. Throws ConvergenceError (carrying the
/// best residual and candidate) when the targets are not reached.
DesignResult design_solve(const DesignTargets& targets, const RfDrive& drive,
                          const IonSpecies& species, const DesignOptions& options = {});

/// Out-of-plane DC field at the central well, at the given height, for
/// inner voltage `inner` and outer voltage `outer`.
double periodic_vertical_field(const TrapLayout& layout, const FiveWireGeometry& geometry,
                               double height, double inner, double outer);

}  // namespace iontrap
