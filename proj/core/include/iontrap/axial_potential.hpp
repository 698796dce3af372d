#pragma once

#include <array>

#include "iontrap/species.hpp"

namespace iontrap {

/// Electrostatic potential along the trap axis, in volts:
///
///   V(x) = sum_k poly[k] (x - center)^k + amplitude cos(2 pi (x - center) / period + phase)
///
/// A singly charged ion's potential energy in eV equals V numerically.
struct AxialPotentialModel {
  std::array<double, 5> poly{};  // V / m^k
  double amplitude = 0.0;        // V
  double period = 160e-6;        // m
  double phase = 0.0;            // rad
  double center = 0.0;           // m

  double value(double x) const;
  double slope(double x) const;
  double curvature(double x) const;

  /// Potential confines at both ends: quartic > 0, or pure quadratic > 0.
  bool confining() const;
  void validate() const;

  AxialPotentialModel with_amplitude(double a) const;
  AxialPotentialModel shifted(double dx) const;

  /// Index of the cosine well nearest to x. Wells are the minima of
  /// sign * cos(...), where sign follows the amplitude passed in.
  int well_index(double x, double reference_amplitude) const;
  double well_center(int index, double reference_amplitude) const;

  /// Harmonic confinement giving axial frequency omega to the species.
  static AxialPotentialModel harmonic(const IonSpecies& species, double omega,
                                      double center = 0.0);
};

}  // namespace iontrap
