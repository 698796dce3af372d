#include "iontrap/species.hpp"

#include <cmath>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

double IonSpecies::charge_number() const { return charge / constants::elementary_charge; }

double IonSpecies::wavenumber() const { return constants::two_pi / wavelength; }

void IonSpecies::validate() const {
  if (!(mass > 0.0) || !(charge > 0.0) || !(linewidth > 0.0) || !(wavelength > 0.0) ||
      !(saturation_intensity > 0.0)) {
    throw DomainError("ion species '" + label + "': mass, charge, linewidth, wavelength and "
                      "saturation intensity must all be positive");
  }
}

IonSpecies IonSpecies::ytterbium174() {
  IonSpecies s;
  s.label = "174Yb+";
  s.mass = 173.938866437 * constants::atomic_mass_unit - constants::electron_mass;
  s.charge = constants::elementary_charge;
  s.linewidth = units::angular(19.9 * units::MHz);
  s.wavelength = 369.5e-9;
  s.saturation_intensity = 515.0;  // 51.5 mW/cm^2
  return s;
}

}  // namespace iontrap
