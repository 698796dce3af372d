#include "iontrap/layout_io.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

#ifndef IONTRAP_SOURCE_DATA_DIR
#define IONTRAP_SOURCE_DATA_DIR ""
#endif
#ifndef IONTRAP_INSTALL_DATA_DIR
#define IONTRAP_INSTALL_DATA_DIR ""
#endif

namespace iontrap {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

json geometry_to_json(const FiveWireGeometry& g) {
  return {{"center_width_m", g.center_width},     {"rf_width_m", g.rf_width},
          {"array_period_m", g.array_period},     {"array_sites", g.array_sites},
          {"inner_lane_width_m", g.inner_lane_width}, {"inner_duty", g.inner_duty},
          {"chip_width_m", g.chip_width},         {"chip_length_m", g.chip_length},
          {"dc_per_side", g.dc_per_side}};
}

}  // namespace

TrapLayout layout_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("layout: invalid JSON: ") + e.what());
  }
  const std::string where = "layout";
  reject_unknown(doc,
                 {"schema", "label", "provenance", "rf_amplitude_V", "rf_frequency_Hz",
                  "array_period_m", "geometry", "electrodes"},
                 where);
  if (require<std::string>(doc, "schema", where) != kLayoutSchema) {
    throw ConfigError(std::string("layout: schema must be '") + kLayoutSchema + "'");
  }
  RfDrive drive;
  drive.amplitude = require<double>(doc, "rf_amplitude_V", where);
  drive.angular_frequency = units::angular(require<double>(doc, "rf_frequency_Hz", where));

  std::vector<Electrode> electrodes;
  const json& list = doc.at("electrodes");
  if (!list.is_array()) throw ConfigError("layout: 'electrodes' must be an array");
  for (const auto& je : list) {
    const std::string ew = "layout electrode";
    reject_unknown(je, {"name", "role", "dc_voltage_V", "patches_m"}, ew);
    Electrode e;
    e.name = require<std::string>(je, "name", ew);
    e.role = electrode_role_from_string(require<std::string>(je, "role", ew));
    e.dc_voltage = je.value("dc_voltage_V", 0.0);
    for (const auto& jp : je.at("patches_m")) {
      if (!jp.is_array() || jp.size() != 4) {
        throw ConfigError("layout electrode '" + e.name + "': patch must be [x1, x2, y1, y2]");
      }
      e.patches.push_back({jp[0].get<double>(), jp[1].get<double>(), jp[2].get<double>(),
                           jp[3].get<double>()});
    }
    electrodes.push_back(std::move(e));
  }
  TrapLayout layout(std::move(electrodes), drive);
  layout.label = doc.value("label", "");
  layout.provenance = doc.value("provenance", "");
  layout.array_period = doc.value("array_period_m", 0.0);
  return layout;
}

std::string layout_to_json(const TrapLayout& layout, const std::optional<FiveWireGeometry>& geometry) {
  json doc;
  doc["schema"] = kLayoutSchema;
  doc["label"] = layout.label;
  doc["provenance"] = layout.provenance;
  doc["rf_amplitude_V"] = layout.drive().amplitude;
  doc["rf_frequency_Hz"] = units::hertz(layout.drive().angular_frequency);
  doc["array_period_m"] = layout.array_period;
  if (geometry) doc["geometry"] = geometry_to_json(*geometry);
  json list = json::array();
  for (const auto& e : layout.electrodes()) {
    json patches = json::array();
    for (const auto& p : e.patches) patches.push_back({p.x1, p.x2, p.y1, p.y2});
    list.push_back({{"name", e.name},
                    {"role", std::string(to_string(e.role))},
                    {"dc_voltage_V", e.dc_voltage},
                    {"patches_m", std::move(patches)}});
  }
  doc["electrodes"] = std::move(list);
  return doc.dump(1) + "\n";
}

TrapLayout read_layout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open layout file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return layout_from_json(ss.str());
}

void write_layout(const std::filesystem::path& path, const TrapLayout& layout,
                  const std::optional<FiveWireGeometry>& geometry) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write layout file '" + path.string() + "'");
  out << layout_to_json(layout, geometry);
}

std::filesystem::path reference_layout_path() {
  constexpr const char* kName = "reference_layout.json";
  if (const char* env = std::getenv("IONTRAP_DATA_DIR")) {
    const std::filesystem::path p = std::filesystem::path(env) / kName;
    if (std::filesystem::exists(p)) return p;
  }
  for (const char* dir : {IONTRAP_SOURCE_DATA_DIR, IONTRAP_INSTALL_DATA_DIR}) {
    if (*dir == '\0') continue;
    const std::filesystem::path p = std::filesystem::path(dir) / kName;
    if (std::filesystem::exists(p)) return p;
  }
  throw ConfigError("reference layout not found; set IONTRAP_DATA_DIR");
}

TrapLayout reference_layout() { return read_layout(reference_layout_path()); }

void write_field_map_csv(std::ostream& out, const TrapLayout& layout, const IonSpecies& species,
                         const std::vector<Vec3>& points) {
  out << "x,y,z,phi_dc,Ex,Ey,Ez,phips_eV\n";
  for (const auto& p : points) {
    const FieldPoint f = evaluate(layout, species, p);
    out << fmt::format("{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n", p.x(), p.y(),
                       p.z(), f.dc_potential, f.dc_field.x(), f.dc_field.y(), f.dc_field.z(),
                       f.pseudopotential);
  }
}

}  // namespace iontrap
