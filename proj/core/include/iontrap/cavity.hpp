#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iontrap/species.hpp"

// Cavity QED arithmetic for an ion in a near-planar Fabry-Perot cavity.
// Every linewidth is an angular FWHM (rad/s).
namespace iontrap {

struct CavityParams {
  double length = 0.0;      // m
  double finesse = 0.0;
  double waist = 0.0;       // TEM00 waist, m
  double wavelength = 0.0;  // m
  std::optional<double> transmission;  // T per mirror
  std::optional<double> loss;          // L, as in F = pi / (T + L)
  /// Measured linewidth; overrides the value from length and finesse.
  std::optional<double> kappa;
  /// Measured outcoupling T/(T+L); overrides the mirror-derived value.
  std::optional<double> output_coupling;

  double free_spectral_range() const;  // Hz
  double kappa_value() const;          // rad/s
  /// T/(T+L) from the override, from T and L, or from T and the finesse.
  std::optional<double> output_coupling_value() const;
  /// Positivity checks; when T and L are both given, F must match pi/(T+L) within 5%.
  void validate() const;
};

struct ProbeParams {
  double s0 = 0.0;               // on-resonance saturation parameter I/I_sat
  double detuning = 0.0;         // laser minus atom, rad/s
  double laser_linewidth = 0.0;  // rad/s
  double polarization_factor = 1.0 / 3.0;  // reduced dipole matrix element squared
  double port_fraction = 0.5;    // share leaving through the detected mirror
  double mode_match = 1.0;       // cavity-to-fiber
  double optics = 1.0;           // transmission of the detection optics
  double detector_qe = 1.0;

  void validate() const;
};

struct CouplingResult {
  double eta = 0.0;         // antinode cooperativity
  double g = 0.0;           // rad/s
  int ions = 1;
  double collective = 0.0;  // ions * eta
};

/// eta = 24 F / (pi w^2 k0^2).
double cooperativity(double finesse, double waist, double wavelength);
/// g = sqrt(eta kappa Gamma) / 2.
double g_from_eta(double eta, double kappa, double linewidth);
/// eta = 4 g^2 / (kappa Gamma).
double eta_from_g(double g, double kappa, double linewidth);
/// kappa = 2 pi c / (2 L F).
double kappa_from_finesse(double length, double finesse);
CouplingResult coupling(const CavityParams& cavity, const IonSpecies& species, int ions = 1);

struct ScatteringResult {
  double saturation = 0.0;         // s, detuning reduced
  double rate = 0.0;               // Gamma_sc, photons/s
  double coherent_fraction = 1.0;  // 1 / (1 + s)
};

/// s = s0 / (1 + (2 delta / Gamma)^2), Gamma_sc = s / (1 + s) Gamma / 2.
ScatteringResult scattering_chain(const IonSpecies& species, double s0, double detuning);
ScatteringResult scattering_chain(const IonSpecies& species, const ProbeParams& probe);

struct BudgetFactor {
  std::string name;
  double value = 0.0;
  double running = 0.0;  // product of this and all previous factors
};

struct PhotonBudget {
  std::vector<BudgetFactor> factors;
  double total = 0.0;  // detected counts/s

  const BudgetFactor& factor(const std::string& name) const;
};

/// Expected detector count rate, as an itemized product starting from the
/// free-space scattering rate. localization is 1/2 for an ion averaged over
/// the standing wave and 1 at an antinode. Throws DomainError for an
/// efficiency outside [0, 1] or a localization outside [1/2, 1].
PhotonBudget photon_budget(const IonSpecies& species, const ProbeParams& probe,
                           const CavityParams& cavity, double eta, double localization = 0.5);

struct ThermometryResult {
  double visibility = 0.0;
  double temperature = 0.0;          // K
  double sigma = 0.0;                // RMS wavepacket extent along the cavity axis, m
  double doppler_temperature = 0.0;  // K
  double doppler_ratio = 0.0;        // temperature / doppler_temperature
};

/// hbar Gamma / (2 k_B).
double doppler_temperature(const IonSpecies& species);

/// Thermal Gaussian wavepacket: V = contrast * exp(-2 k^2 sigma^2),
/// sigma^2 = k_B T / (m omega^2). Throws DomainError unless 0 < V <= contrast.
ThermometryResult visibility_to_temperature(double visibility, double omega_axial,
                                            const IonSpecies& species, double wavelength,
                                            double contrast = 1.0);
ThermometryResult temperature_to_visibility(double temperature, double omega_axial,
                                            const IonSpecies& species, double wavelength,
                                            double contrast = 1.0);

/// rate(z) = base (1 + V cos(2 k z)).
std::vector<double> fringe_scan(const std::vector<double>& z, double visibility, double base_rate,
                                double wavelength);
/// (1 + V) / (1 - V).
double fringe_peak_valley(double visibility);

struct FringeFit {
  double base_rate = 0.0;
  double visibility = 0.0;
  double visibility_error = 0.0;  // one standard error
  double phase = 0.0;             // rad, rate = base (1 + V cos(2 k z + phase))
  double residual_rms = 0.0;
};

/// Linear least squares on {1, cos 2kz, sin 2kz} at the known period.
FringeFit fit_fringe(const std::vector<double>& z, const std::vector<double>& rate,
                     double wavelength);

/// Smallest N with N eta >= 1.
int collective_threshold(double eta);

struct LatticeGeometry {
  double period = 0.0;          // m
  double peak_intensity = 0.0;  // W/m^2, passed through
};

LatticeGeometry lattice_geometry(double wavelength, double peak_intensity);

}  // namespace iontrap
