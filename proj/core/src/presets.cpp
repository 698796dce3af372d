#include "iontrap/presets.hpp"

#include <functional>
#include <set>

#include <json.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

using nlohmann::json;

namespace {

struct Field {
  const char* key;
  std::function<double&(Preset&)> ref;
  bool angular = false;  // stored as rad/s, written in Hz
};

std::optional<double>& opt(std::optional<double>& o) {
  if (!o) o = 0.0;
  return o;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"ion_mass_kg", [](Preset& p) -> double& { return p.species.mass; }},
      {"ion_charge_C", [](Preset& p) -> double& { return p.species.charge; }},
      {"linewidth_Hz", [](Preset& p) -> double& { return p.species.linewidth; }, true},
      {"wavelength_m", [](Preset& p) -> double& { return p.species.wavelength; }},
      {"saturation_intensity_W_m2", [](Preset& p) -> double& { return p.species.saturation_intensity; }},
      {"cavity_length_m", [](Preset& p) -> double& { return p.cavity.length; }},
      {"finesse", [](Preset& p) -> double& { return p.cavity.finesse; }},
      {"max_finesse", [](Preset& p) -> double& { return p.max_finesse; }},
      {"cavity_waist_m", [](Preset& p) -> double& { return p.cavity.waist; }},
      {"cavity_wavelength_m", [](Preset& p) -> double& { return p.cavity.wavelength; }},
      {"mirror_transmission", [](Preset& p) -> double& { return *opt(p.cavity.transmission); }},
      {"output_coupling", [](Preset& p) -> double& { return *opt(p.cavity.output_coupling); }},
      {"kappa_Hz", [](Preset& p) -> double& { return *opt(p.cavity.kappa); }, true},
      {"s0", [](Preset& p) -> double& { return p.probe.s0; }},
      {"detuning_Hz", [](Preset& p) -> double& { return p.probe.detuning; }, true},
      {"laser_linewidth_Hz", [](Preset& p) -> double& { return p.probe.laser_linewidth; }, true},
      {"polarization_factor", [](Preset& p) -> double& { return p.probe.polarization_factor; }},
      {"port_fraction", [](Preset& p) -> double& { return p.probe.port_fraction; }},
      {"mode_match", [](Preset& p) -> double& { return p.probe.mode_match; }},
      {"optics_transmission", [](Preset& p) -> double& { return p.probe.optics; }},
      {"detector_qe", [](Preset& p) -> double& { return p.probe.detector_qe; }},
      {"localization", [](Preset& p) -> double& { return p.localization; }},
      {"resolution_Hz", [](Preset& p) -> double& { return p.resolution; }, true},
      {"rf_amplitude_V", [](Preset& p) -> double& { return p.drive.amplitude; }},
      {"rf_frequency_Hz", [](Preset& p) -> double& { return p.drive.angular_frequency; }, true},
      {"trap_height_m", [](Preset& p) -> double& { return p.trap_height; }},
      {"mathieu_q", [](Preset& p) -> double& { return p.mathieu_q; }},
      {"radial_frequency_Hz", [](Preset& p) -> double& { return p.omega_radial; }, true},
      {"trap_depth_eV", [](Preset& p) -> double& { return p.trap_depth; }},
      {"array_period_m", [](Preset& p) -> double& { return p.array_period; }},
      {"periodic_inner_V", [](Preset& p) -> double& { return p.periodic_inner; }},
      {"periodic_outer_V", [](Preset& p) -> double& { return p.periodic_outer; }},
      {"periodic_height_m", [](Preset& p) -> double& { return p.periodic_height; }},
      {"axial_frequency_Hz", [](Preset& p) -> double& { return p.omega_axial; }, true},
      {"fringe_visibility", [](Preset& p) -> double& { return p.fringe_visibility; }},
      {"stray_field_V_m", [](Preset& p) -> double& { return p.stray_field; }},
      {"lattice_intensity_W_m2", [](Preset& p) -> double& { return p.lattice_intensity; }},
      {"isotopic_purity", [](Preset& p) -> double& { return p.isotopic_purity; }},
  };
  return f;
}

Preset make_paper_2012() {
  using units::angular;
  using units::MHz;
  Preset p;
  p.name = "paper-2012";
  p.description =
      "174Yb+ in a 50-site planar trap array inside a 2.2 cm cavity at finesse 2400";
  p.species = IonSpecies::ytterbium174();
  p.cavity.length = 2.2e-2;
  p.cavity.finesse = 2400.0;
  p.max_finesse = 12500.0;
  p.cavity.waist = 38e-6;
  p.cavity.wavelength = 369.5e-9;
  p.cavity.transmission = 1.8e-4;
  p.cavity.output_coupling = 0.13;
  p.cavity.kappa = angular(2.7 * MHz);
  p.probe.s0 = 10.0;
  p.probe.detuning = -2.5 * p.species.linewidth;
  p.probe.laser_linewidth = angular(4.9 * MHz);
  p.probe.polarization_factor = 1.0 / 3.0;
  p.probe.port_fraction = 0.5;
  p.probe.mode_match = 0.9;
  p.probe.optics = 0.7;
  p.probe.detector_qe = 0.28;
  p.localization = 0.5;
  p.resolution = angular(7.5 * MHz);
  p.drive = {127.0, angular(16.4 * MHz)};
  p.trap_height = 134e-6;
  p.mathieu_q = 0.22;
  p.omega_radial = angular(1.3 * MHz);
  p.trap_depth = 0.084;
  p.array_period = 160e-6;
  p.array_sites = 50;
  p.periodic_inner = -1.0;
  p.periodic_outer = 0.9;
  p.periodic_height = 138e-6;
  p.omega_axial = angular(1.14 * MHz);
  p.fringe_visibility = 0.65;
  p.stray_field = 65.0;
  p.lattice_intensity = 100e3 * 1e4;  // 100 kW/cm^2
  p.isotopic_purity = 0.9;

  p.notes = {
      {"ion_mass_kg", "174Yb atomic mass minus one electron mass"},
      {"ion_charge_C", "singly charged ion"},
      {"linewidth_Hz", "reported 2P1/2 natural linewidth, 19.9 MHz"},
      {"wavelength_m", "369.5 nm; the reported 369 nm rounded down"},
      {"saturation_intensity_W_m2", "standard value for the 369.5 nm line"},
      {"cavity_length_m", "reported cavity length"},
      {"finesse", "finesse at the time of the reported measurements"},
      {"max_finesse", "reported finesse before degradation"},
      {"cavity_wavelength_m", "cavity resonant with the cooling line"},
      {"cavity_waist_m", "reported TEM00 waist"},
      {"mirror_transmission", "quoted mirror transmission at 369 nm"},
      {"output_coupling", "quoted T/(T+L); the mirror-derived value at this finesse is 0.1375"},
      {"kappa_Hz", "measured linewidth; length and finesse give 2.84 MHz"},
      {"s0", "reported resonant saturation parameter"},
      {"detuning_Hz", "reported 2.5 linewidths, red of resonance"},
      {"laser_linewidth_Hz", "reported laser linewidth"},
      {"polarization_factor", "reported reduced dipole matrix element squared"},
      {"port_fraction", "reported loss through the undetected mirror"},
      {"mode_match", "reported cavity-to-fiber mode matching"},
      {"optics_transmission", "reported transmission of the detection optics"},
      {"detector_qe", "reported PMT quantum efficiency"},
      {"localization", "average over the cavity standing wave"},
      {"resolution_Hz", "reported convolved cavity and laser linewidth"},
      {"rf_amplitude_V", "reported RF amplitude"},
      {"rf_frequency_Hz", "reported RF drive frequency"},
      {"trap_height_m", "reported ion height above the electrodes"},
      {"mathieu_q", "reported Mathieu parameter"},
      {"radial_frequency_Hz", "reported radial trap frequency"},
      {"trap_depth_eV", "reported pseudopotential depth along the weak axis"},
      {"array_period_m", "reported site spacing"},
      {"array_sites", "reported number of array sites"},
      {"periodic_inner_V", "reference voltage of the inner periodic electrode"},
      {"periodic_outer_V", "reported outer/inner voltage ratio of -0.9"},
      {"periodic_height_m", "height of the reported axial potential profile"},
      {"axial_frequency_Hz", "reported axial frequency during fringe scans"},
      {"fringe_visibility", "reported fringe visibility"},
      {"stray_field_V_m", "reported decompensating field for the sideband spectrum"},
      {"lattice_intensity_W_m2", "reported maximum intracavity standing-wave intensity"},
      {"isotopic_purity", "reported lower bound on isotopic purity"},
  };
  return p;
}

const std::vector<Preset>& registry() {
  static const std::vector<Preset> r = {make_paper_2012()};
  return r;
}

}  // namespace

std::vector<std::string> list_presets() {
  std::vector<std::string> names;
  for (const auto& p : registry()) names.push_back(p.name);
  return names;
}

const Preset& get_preset(std::string_view name) {
  for (const auto& p : registry()) {
    if (p.name == name) return p;
  }
  std::string avail;
  for (const auto& n : list_presets()) avail += (avail.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + std::string(name) + "'; available: " + avail);
}

std::string preset_to_json(const Preset& preset) {
  Preset p = preset;
  json values = json::object();
  for (const auto& f : fields()) {
    // Optional cavity values are written only when set.
    if ((std::string_view(f.key) == "mirror_transmission" && !p.cavity.transmission) ||
        (std::string_view(f.key) == "output_coupling" && !p.cavity.output_coupling) ||
        (std::string_view(f.key) == "kappa_Hz" && !p.cavity.kappa)) {
      continue;
    }
    const double v = f.ref(p);
    values[f.key] = f.angular ? units::hertz(v) : v;
  }
  values["array_sites"] = p.array_sites;
  json doc = {{"name", p.name},
              {"description", p.description},
              {"species", p.species.label},
              {"values", values},
              {"notes", p.notes}};
  return doc.dump(2);
}

Preset preset_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("preset: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("preset: expected an object");
  const std::set<std::string> top = {"name", "description", "species", "values", "notes"};
  for (const auto& [k, v] : doc.items()) {
    if (!top.count(k)) throw ConfigError("preset: unknown key '" + k + "'");
  }
  Preset p;
  try {
    p.name = doc.at("name").get<std::string>();
    p.description = doc.value("description", "");
    p.species.label = doc.at("species").get<std::string>();
    if (doc.contains("notes")) p.notes = doc.at("notes").get<std::map<std::string, std::string>>();
    const json& values = doc.at("values");
    if (!values.is_object()) throw ConfigError("preset: 'values' must be an object");
    std::set<std::string> known = {"array_sites"};
    for (const auto& f : fields()) known.insert(f.key);
    for (const auto& [k, v] : values.items()) {
      if (!known.count(k)) throw ConfigError("preset: unknown value '" + k + "'");
    }
    for (const auto& f : fields()) {
      if (!values.contains(f.key)) continue;
      const double v = values.at(f.key).get<double>();
      f.ref(p) = f.angular ? units::angular(v) : v;
    }
    p.array_sites = values.value("array_sites", 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("preset: ") + e.what());
  }
  p.species.validate();
  p.cavity.validate();
  p.probe.validate();
  return p;
}

}  // namespace iontrap
