#pragma once

#include <map>
#include <optional>
#include <vector>

#include "iontrap/cavity.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/species.hpp"

// Micromotion sidebands in cavity-collected fluorescence.
namespace iontrap {

struct MicromotionState {
  Vec3 field = Vec3::Zero();         // stray DC field, V/m
  Vec3 displacement = Vec3::Zero();  // from the RF null, m
  Vec3 amplitude = Vec3::Zero();     // micromotion amplitude vector, m
  Vec3 direction = Vec3::UnitX();    // excitation beam, unit vector
  double beta = 0.0;                 // modulation index seen along `direction`
};

/// Displacement e E_i / (m w_i^2) along the secular axes, micromotion
/// amplitude (q_j / 2) times the displacement along the RF-gradient axes,
/// beta = k |x_mm . direction|. Throws DomainError when a field component
/// lies along an axis with zero secular frequency.
MicromotionState micromotion_from_field(const Vec3& field, const TrapCharacterization& trap,
                                        const IonSpecies& species, double wavenumber,
                                        const Vec3& direction);

struct SpectrumComponent {
  int order = 0;
  double weight = 0.0;    // J_n(beta)^2
  double center = 0.0;    // rad/s
  double envelope = 0.0;  // relative coherent scattering rate at this order
};

struct SpectrumScan {
  std::vector<double> detuning;   // rad/s
  std::vector<double> intensity;  // counts/s
  double resolution = 0.0;        // Lorentzian FWHM, rad/s
  double drive_frequency = 0.0;   // rad/s
  int n_max = 0;
  double bessel_sum = 0.0;
  std::vector<SpectrumComponent> components;
};

struct SpectrumOptions {
  int n_max = 5;  // raised until the Bessel weights sum above bessel_floor
  double bessel_floor = 0.999;
  /// Same scattering rate for every order, giving an exactly symmetric spectrum.
  bool constant_envelope = false;
  /// Defaults to cavity linewidth plus laser linewidth.
  std::optional<double> resolution;
  /// Height of the carrier peak at beta = 0, counts/s.
  double peak_rate = 1.0;
};

/// Symmetric grid [-half_span, half_span] with the given step.
std::vector<double> detuning_grid(double half_span, double step);

/// S(D) = C sum_n J_n^2(beta) R(delta + n Omega) / (1 + (2 (D - n Omega) / w)^2), where
/// R is the coherent scattering rate (Gamma_sc / (1 + s)) at atomic detuning
/// delta + n Omega. With delta < 0 (red probe) the n = +1 sideband sits
/// closer to resonance and is the taller one. Throws DomainError when the
/// grid does not cover +-(n_max + 1) Omega.
SpectrumScan synthesize_spectrum(double beta, const ProbeParams& probe, const CavityParams& cavity,
                                 const IonSpecies& species, double drive_frequency,
                                 const std::vector<double>& grid,
                                 const SpectrumOptions& options = {});
SpectrumScan synthesize_spectrum(const MicromotionState& state, const ProbeParams& probe,
                                 const CavityParams& cavity, const IonSpecies& species,
                                 double drive_frequency, const std::vector<double>& grid,
                                 const SpectrumOptions& options = {});

struct SidebandFit {
  double beta = 0.0;
  /// Mean first-sideband area over carrier area, before clamping.
  double ratio = 0.0;
  double carrier_area = 0.0;
  std::map<int, double> sideband_areas;  // by order, carrier excluded
  double residual_norm = 0.0;
};

/// Linear least squares of fixed-width Lorentzians at n Omega (width taken
/// from the scan), then beta from J1^2/J0^2 = ratio on [0, first zero of J0).
/// Throws DomainError("beta out of range") when the ratio cannot be inverted.
SidebandFit fit_sidebands(const SpectrumScan& scan, double drive_frequency);

/// J1(b)^2 / J0(b)^2 = ratio solved for b in [0, 2.4048).
double beta_from_ratio(double ratio);

/// Full width at half maximum of the peak nearest `center`, by linear interpolation.
double peak_fwhm(const SpectrumScan& scan, double center);

struct CompensationOptions {
  /// Excitation beams used to measure the sidebands. Nulling needs beams
  /// spanning the RF-gradient plane.
  std::vector<Vec3> probe_directions{Vec3(1.0, 1.0, 0.0).normalized(),
                                     Vec3(1.0, 0.0, 1.0).normalized()};
  /// Box over compensation fields (V/m); axes with zero width are held at zero.
  Vec3 box_min = Vec3(0.0, -100.0, -100.0);
  Vec3 box_max = Vec3(0.0, 100.0, 100.0);
  double field_tolerance = 1e-4;  // V/m
  int max_sweeps = 60;
  SpectrumOptions spectrum;
  double grid_step_fraction = 0.02;  // of the drive frequency
};

struct CompensationResult {
  Vec3 field = Vec3::Zero();  // applied compensation field, V/m
  double residual_beta = 0.0;  // largest beta over the probe beams at the result
  int sweeps = 0;
  int evaluations = 0;
};

/// Minimises the summed sideband ratio measured by synthesising and fitting a
/// spectrum for each probe beam, with coordinate-wise golden-section search
/// over the box. Throws DomainError("expand search box") when the minimum
/// sits on a box face and ConvergenceError when the sweeps do not settle.
CompensationResult compensate(const Vec3& stray_field, const TrapCharacterization& trap,
                              const IonSpecies& species, const ProbeParams& probe,
                              const CavityParams& cavity,
                              const CompensationOptions& options = {});

}  // namespace iontrap
