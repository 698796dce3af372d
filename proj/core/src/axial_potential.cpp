#include "iontrap/axial_potential.hpp"

#include <cmath>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace {

double wavenumber(const AxialPotentialModel& m) { return constants::two_pi / m.period; }

}  // namespace

double AxialPotentialModel::value(double x) const {
  const double t = x - center;
  const double p = poly[0] + t * (poly[1] + t * (poly[2] + t * (poly[3] + t * poly[4])));
  return p + amplitude * std::cos(wavenumber(*this) * t + phase);
}

double AxialPotentialModel::slope(double x) const {
  const double t = x - center;
  const double k = wavenumber(*this);
  const double p = poly[1] + t * (2.0 * poly[2] + t * (3.0 * poly[3] + t * 4.0 * poly[4]));
  return p - amplitude * k * std::sin(k * t + phase);
}

double AxialPotentialModel::curvature(double x) const {
  const double t = x - center;
  const double k = wavenumber(*this);
  const double p = 2.0 * poly[2] + t * (6.0 * poly[3] + t * 12.0 * poly[4]);
  return p - amplitude * k * k * std::cos(k * t + phase);
}

bool AxialPotentialModel::confining() const {
  if (poly[4] > 0.0) return true;
  return poly[4] == 0.0 && poly[3] == 0.0 && poly[2] > 0.0;
}

void AxialPotentialModel::validate() const {
  if (!(period > 0.0)) throw DomainError("axial potential period must be positive");
  for (double c : poly) {
    if (!std::isfinite(c)) throw DomainError("axial potential coefficients must be finite");
  }
  if (!std::isfinite(amplitude) || !std::isfinite(phase) || !std::isfinite(center)) {
    throw DomainError("axial potential amplitude, phase and center must be finite");
  }
}

AxialPotentialModel AxialPotentialModel::with_amplitude(double a) const {
  AxialPotentialModel m = *this;
  m.amplitude = a;
  return m;
}

AxialPotentialModel AxialPotentialModel::shifted(double dx) const {
  AxialPotentialModel m = *this;
  m.center += dx;
  return m;
}

int AxialPotentialModel::well_index(double x, double reference_amplitude) const {
  // Minima of A cos(theta): theta = pi (mod 2 pi) for A > 0, theta = 0 for A < 0.
  const double theta_min = reference_amplitude >= 0.0 ? constants::pi : 0.0;
  const double theta = wavenumber(*this) * (x - center) + phase;
  return static_cast<int>(std::lround((theta - theta_min) / constants::two_pi));
}

double AxialPotentialModel::well_center(int index, double reference_amplitude) const {
  const double theta_min = reference_amplitude >= 0.0 ? constants::pi : 0.0;
  return center + (theta_min + constants::two_pi * index - phase) / wavenumber(*this);
}

AxialPotentialModel AxialPotentialModel::harmonic(const IonSpecies& species, double omega,
                                                  double center) {
  if (!(omega > 0.0)) throw DomainError("harmonic frequency must be positive");
  AxialPotentialModel m;
  m.center = center;
  // q * 2 c2 = m omega^2
  m.poly[2] = species.mass * omega * omega / (2.0 * species.charge);
  return m;
}

}  // namespace iontrap
