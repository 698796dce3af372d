#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "iontrap/axial_potential.hpp"
#include "iontrap/species.hpp"

// One-dimensional Coulomb crystals in a shaped axial potential.
namespace iontrap {

struct EquilibriumOptions {
  /// Infinity norm of the energy gradient in natural units (forces in units
  /// of the Coulomb force at the natural length scale).
  double tolerance = 1e-12;
  int max_iterations = 500;
  /// Starting positions (m), strictly increasing. Defaults to equal spacing
  /// about the minimum of the polynomial part of the potential.
  std::optional<std::vector<double>> initial;
  double min_separation = 1e-9;  // m
};

struct ChainConfig {
  std::vector<double> positions;  // m, strictly increasing
  IonSpecies species;
  AxialPotentialModel potential;
  double gradient_norm = 0.0;  // natural units
  int iterations = 0;
  /// Total energy (J) after every accepted iteration, starting with the initial guess.
  std::vector<double> energy_history;
  double length_scale = 0.0;  // m
  double energy_scale = 0.0;  // J

  std::size_t size() const { return positions.size(); }
};

/// Natural length scale (k Z^2 e^2 / kappa)^(1/3), kappa the quadratic
/// spring constant of the potential (quartic scale when there is none).
double natural_length(const AxialPotentialModel& potential, const IonSpecies& species);

/// U = sum_i q V(z_i) + sum_{i<j} k q^2 / |z_i - z_j|, in joules.
double chain_energy(const std::vector<double>& z, const AxialPotentialModel& potential,
                    const IonSpecies& species);
/// dU/dz_i, N.
Eigen::VectorXd chain_gradient(const std::vector<double>& z, const AxialPotentialModel& potential,
                               const IonSpecies& species);
/// d^2U/dz_i dz_j, N/m.
Eigen::MatrixXd chain_hessian(const std::vector<double>& z, const AxialPotentialModel& potential,
                              const IonSpecies& species);

/// Damped Newton minimisation of the chain energy with an ordering-preserving
/// backtracking line search; falls back to gradient steps when the Hessian is
/// not positive definite.
/// Throws DomainError for a non-confining potential or a final pair distance
/// below min_separation, ConvergenceError when the tolerance is not reached.
ChainConfig equilibrium(std::size_t n_ions, const AxialPotentialModel& potential,
                        const IonSpecies& species, const EquilibriumOptions& options = {});

struct NormalModes {
  std::vector<double> frequencies;  // rad/s, ascending
  Eigen::MatrixXd vectors;          // columns, unit norm
};

/// Axial normal modes from the energy Hessian. Throws UnstableError when an
/// eigenvalue is below -tolerance times the largest one.
NormalModes normal_modes(const ChainConfig& chain, double tolerance = 1e-9);

/// Piecewise-linear amplitude schedule for the cosine term (V).
struct RampSchedule {
  std::vector<double> keyframes;
  int steps_per_segment = 200;

  /// Amplitude after every step, excluding the starting keyframe.
  std::vector<double> steps() const;
  /// Keyframe with the largest magnitude; its sign fixes which cosine extrema are wells.
  double peak() const;
};

struct SplitResult {
  ChainConfig chain;        // configuration after the last ramp step
  std::vector<int> sites;   // well index per ion
  std::map<int, int> occupancy;
  double reference_amplitude = 0.0;
};

/// Quasi-static ramp of the cosine amplitude: every step re-minimises the
/// chain seeded from the previous configuration. The first keyframe must
/// equal the chain potential's amplitude. Throws NonAdiabaticRampError
/// carrying the failing step.
SplitResult split(const ChainConfig& chain, const RampSchedule& ramp,
                  const EquilibriumOptions& options = {});

/// Repeated 0 -> peak -> 0 ramps; returns the split at every peak.
std::vector<SplitResult> ramp_cycles(const ChainConfig& chain, double peak, int cycles,
                                     int steps_per_segment = 200);

}  // namespace iontrap
