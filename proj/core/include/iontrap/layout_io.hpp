#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iontrap/electrostatics.hpp"
#include "iontrap/layout_design.hpp"

namespace iontrap {

inline constexpr const char* kLayoutSchema = "iontrap-layout/1";

/// Parses a layout document. Unknown keys and a wrong schema id are ConfigErrors.
TrapLayout layout_from_json(const std::string& text);
/// Serialises a layout; the generating geometry is recorded when given.
std::string layout_to_json(const TrapLayout& layout,
                           const std::optional<FiveWireGeometry>& geometry = std::nullopt);

TrapLayout read_layout(const std::filesystem::path& path);
void write_layout(const std::filesystem::path& path, const TrapLayout& layout,
                  const std::optional<FiveWireGeometry>& geometry = std::nullopt);

/// Location of the shipped fitted layout. Checks $IONTRAP_DATA_DIR, then the
/// source tree, then the install prefix.
std::filesystem::path reference_layout_path();
TrapLayout reference_layout();

/// CSV with header x,y,z,phi_dc,Ex,Ey,Ez,phips_eV (SI units, eV).
void write_field_map_csv(std::ostream& out, const TrapLayout& layout, const IonSpecies& species,
                         const std::vector<Vec3>& points);

}  // namespace iontrap
