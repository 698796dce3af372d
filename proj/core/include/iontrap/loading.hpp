#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "iontrap/axial_potential.hpp"
#include "iontrap/crystal.hpp"
#include "iontrap/species.hpp"

// Monte Carlo of loading a chain and splitting it over the periodic array.
namespace iontrap {

enum class LoadMode { poisson, fixed };
enum class SiteAssignment { split, iid };

struct LoadingScenario {
  IonSpecies species = IonSpecies::ytterbium174();
  /// Potential the chain is loaded into; its amplitude is the ramp start.
  AxialPotentialModel potential;
  RampSchedule ramp;
  double mean_total = 20.0;  // Poisson mean, or the exact count for LoadMode::fixed
  LoadMode load = LoadMode::poisson;
  /// Probability that a loaded ion is the bright isotope. Dark ions stay in
  /// the chain but are not counted.
  double purity = 1.0;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  /// iid skips the crystal: every bright ion lands on one of iid_sites
  /// sites uniformly at random.
  SiteAssignment assignment = SiteAssignment::split;
  int iid_sites = 4;
  EquilibriumOptions equilibrium;
  /// Worker threads for the per-ion-number splits; 0 picks hardware concurrency.
  unsigned threads = 0;

  void validate() const;
};

struct SiteStats {
  int site = 0;
  std::vector<std::uint64_t> histogram;  // histogram[k] = trials with k bright ions
  double mean = 0.0;
  double variance = 0.0;            // unbiased
  std::optional<double> fano;       // absent when the mean is zero
};

struct LoadingStats {
  std::size_t trials = 0;
  std::vector<SiteStats> sites;                // ascending site index
  std::vector<std::uint64_t> total_histogram;  // loaded ions per trial, bright and dark

  /// Lowest Fano factor over sites with nonzero mean.
  std::optional<double> best_fano() const;
  /// Highest Fano factor over sites with nonzero mean.
  std::optional<double> worst_fano() const;
  const SiteStats* site(int index) const;
};

/// Runs the scenario. Trial t draws from an mt19937_64 seeded with
/// (seed, t), so results do not depend on the thread count.
LoadingStats loading_monte_carlo(const LoadingScenario& scenario);

/// Unbiased variance over mean. Throws DomainError for fewer than two
/// samples or a zero mean.
double fano(std::span<const double> samples);
/// Same, from a histogram of integer counts (histogram[k] = occurrences of k).
double fano_from_histogram(std::span<const std::uint64_t> histogram);

}  // namespace iontrap
