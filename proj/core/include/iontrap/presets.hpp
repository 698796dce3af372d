#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "iontrap/cavity.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/species.hpp"

namespace iontrap {

/// A named bundle of experimental parameters with a provenance note per value.
struct Preset {
  std::string name;
  std::string description;
  IonSpecies species;
  CavityParams cavity;
  double max_finesse = 0.0;  // finesse before degradation
  ProbeParams probe;
  double localization = 0.5;
  double resolution = 0.0;  // convolved cavity and laser linewidth, rad/s
  RfDrive drive;
  double trap_height = 0.0;   // m
  double mathieu_q = 0.0;
  double omega_radial = 0.0;  // rad/s
  double trap_depth = 0.0;    // eV
  double array_period = 0.0;  // m
  int array_sites = 0;
  double periodic_inner = 0.0;   // V
  double periodic_outer = 0.0;   // V
  double periodic_height = 0.0;  // m, height of the axial potential profile
  double omega_axial = 0.0;      // rad/s
  double fringe_visibility = 0.0;
  double stray_field = 0.0;     // V/m
  double lattice_intensity = 0.0;  // W/m^2
  double isotopic_purity = 1.0;
  /// JSON key -> where the value comes from.
  std::map<std::string, std::string> notes;
};

std::vector<std::string> list_presets();
/// Throws ConfigError naming the available presets when `name` is unknown.
const Preset& get_preset(std::string_view name);

/// Keys carry units; angular frequencies are written as ordinary frequencies
/// in Hz (suffix _Hz) and converted back on reading. Unknown keys are rejected.
std::string preset_to_json(const Preset& preset);
Preset preset_from_json(const std::string& text);

}  // namespace iontrap
