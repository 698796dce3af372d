#pragma once

#include <string>

namespace iontrap {

/// Ion mass/charge plus the constants of the cooling transition.
struct IonSpecies {
  std::string label;
  double mass = 0.0;                  // kg
  double charge = 0.0;                // C
  double linewidth = 0.0;             // natural linewidth Gamma, rad/s (FWHM)
  double wavelength = 0.0;            // resonant wavelength, m
  double saturation_intensity = 0.0;  // W/m^2

  double charge_number() const;
  double wavenumber() const;

  /// Throws DomainError unless every quantity is positive.
  void validate() const;

  /// 174Yb+ on the 2S1/2 - 2P1/2 line at 369.5 nm.
  static IonSpecies ytterbium174();
};

}  // namespace iontrap
