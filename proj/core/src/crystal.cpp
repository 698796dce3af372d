#include "iontrap/crystal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace {

// Chain energy in natural units: positions u = (z - origin) / ell, energies
// in units of k q^2 / ell.
struct Scaled {
  const AxialPotentialModel& pot;
  double q;
  double ell;
  double e0;
  double origin;

  double z(double u) const { return origin + ell * u; }

  double energy(const Eigen::VectorXd& u) const {
    double e = 0.0;
    const auto n = u.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      e += q * pot.value(z(u[i])) / e0;
      for (Eigen::Index j = i + 1; j < n; ++j) e += 1.0 / std::abs(u[j] - u[i]);
    }
    return e;
  }

  // Also reports the largest single force term, used to make the tolerance relative.
  Eigen::VectorXd gradient(const Eigen::VectorXd& u, double* force_scale = nullptr) const {
    const auto n = u.size();
    Eigen::VectorXd g(n);
    double scale = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      g[i] = q * pot.slope(z(u[i])) * ell / e0;
      scale = std::max(scale, std::abs(g[i]));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double r = u[j] - u[i];
        const double f = std::copysign(1.0 / (r * r), r);
        g[i] += f;
        g[j] -= f;
        scale = std::max(scale, std::abs(f));
      }
    }
    if (force_scale) *force_scale = scale;
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& u) const {
    const auto n = u.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) h(i, i) = q * pot.curvature(z(u[i])) * ell * ell / e0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double r = std::abs(u[j] - u[i]);
        const double c = 2.0 / (r * r * r);
        h(i, i) += c;
        h(j, j) += c;
        h(i, j) -= c;
        h(j, i) -= c;
      }
    }
    return h;
  }
};

double coulomb_k2(const IonSpecies& s) { return constants::coulomb_constant * s.charge * s.charge; }

// Minimum of the polynomial part, found on a coarse scan then refined by Newton.
double polynomial_minimum(const AxialPotentialModel& pot, double ell) {
  AxialPotentialModel p = pot.with_amplitude(0.0);
  double best = pot.center, vbest = p.value(pot.center);
  for (int i = -2000; i <= 2000; ++i) {
    const double x = pot.center + 0.05 * ell * i;
    const double v = p.value(x);
    if (v < vbest) {
      vbest = v;
      best = x;
    }
  }
  for (int it = 0; it < 50; ++it) {
    const double c = p.curvature(best);
    if (!(c > 0.0)) break;
    const double dx = -p.slope(best) / c;
    best += std::clamp(dx, -0.05 * ell, 0.05 * ell);
    if (std::abs(dx) < 1e-12 * ell) break;
  }
  return best;
}

// Largest step fraction that closes no gap by more than half.
double ordering_limit(const Eigen::VectorXd& u, const Eigen::VectorXd& d) {
  double a = 1.0;
  for (Eigen::Index i = 0; i + 1 < u.size(); ++i) {
    const double closing = d[i] - d[i + 1];
    if (closing > 0.0) a = std::min(a, 0.5 * (u[i + 1] - u[i]) / closing);
  }
  return a;
}

}  // namespace

double natural_length(const AxialPotentialModel& potential, const IonSpecies& species) {
  const double k2 = coulomb_k2(species);
  const double c2 = 2.0 * potential.poly[2];
  if (c2 > 0.0) return std::cbrt(k2 / (species.charge * c2));
  if (potential.poly[4] > 0.0) return std::pow(k2 / (species.charge * potential.poly[4]), 0.2);
  return potential.period;
}

double chain_energy(const std::vector<double>& z, const AxialPotentialModel& potential,
                    const IonSpecies& species) {
  const double k2 = coulomb_k2(species);
  double e = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    e += species.charge * potential.value(z[i]);
    for (std::size_t j = i + 1; j < z.size(); ++j) e += k2 / std::abs(z[j] - z[i]);
  }
  return e;
}

Eigen::VectorXd chain_gradient(const std::vector<double>& z, const AxialPotentialModel& potential,
                               const IonSpecies& species) {
  const double k2 = coulomb_k2(species);
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) g[i] = species.charge * potential.slope(z[i]);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = z[j] - z[i];
      const double f = std::copysign(k2 / (r * r), r);
      g[i] += f;
      g[j] -= f;
    }
  }
  return g;
}

Eigen::MatrixXd chain_hessian(const std::vector<double>& z, const AxialPotentialModel& potential,
                              const IonSpecies& species) {
  const double k2 = coulomb_k2(species);
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) h(i, i) = species.charge * potential.curvature(z[i]);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double r = std::abs(z[j] - z[i]);
      const double c = 2.0 * k2 / (r * r * r);
      h(i, i) += c;
      h(j, j) += c;
      h(i, j) -= c;
      h(j, i) -= c;
    }
  }
  return h;
}

ChainConfig equilibrium(std::size_t n_ions, const AxialPotentialModel& potential,
                        const IonSpecies& species, const EquilibriumOptions& options) {
  species.validate();
  potential.validate();
  if (n_ions == 0) throw DomainError("chain must contain at least one ion");
  if (!potential.confining()) {
    throw DomainError("axial potential does not confine at large distance");
  }
  if (!(options.tolerance > 0.0) || options.max_iterations < 1) {
    throw ConfigError("equilibrium tolerance and iteration limit must be positive");
  }

  const double ell = natural_length(potential, species);
  const double e0 = coulomb_k2(species) / ell;
  const auto n = static_cast<Eigen::Index>(n_ions);

  Eigen::VectorXd u(n);
  double origin = 0.0;
  if (options.initial) {
    const auto& z0 = *options.initial;
    if (z0.size() != n_ions) throw ConfigError("initial positions do not match the ion count");
    origin = z0[n_ions / 2];
    for (Eigen::Index i = 0; i < n; ++i) {
      u[i] = (z0[i] - origin) / ell;
      if (i > 0 && !(u[i] > u[i - 1])) {
        throw ConfigError("initial positions must be strictly increasing");
      }
    }
  } else {
    origin = polynomial_minimum(potential, ell);
    const double spacing = n_ions > 1 ? 2.018 / std::pow(static_cast<double>(n_ions), 0.559) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) u[i] = spacing * (static_cast<double>(i) - 0.5 * (n - 1));
  }

  const Scaled s{potential, species.charge, ell, e0, origin};
  ChainConfig out;
  out.species = species;
  out.potential = potential;
  out.length_scale = ell;
  out.energy_scale = e0;

  double e = s.energy(u);
  out.energy_history.push_back(e * e0);
  double gnorm = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it <= options.max_iterations; ++it) {
    double fscale = 1.0;
    const Eigen::VectorXd g = s.gradient(u, &fscale);
    gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm < options.tolerance * std::max(1.0, fscale)) {
      converged = true;
      break;
    }
    if (it == options.max_iterations) break;

    const Eigen::MatrixXd h = s.hessian(u);
    Eigen::VectorXd d;
    // Newton step, with a diagonal shift when the Hessian is indefinite.
    const double hscale = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1.0);
    bool newton = false;
    for (double tau = 0.0; tau < 1e8 * hscale; tau = tau == 0.0 ? 1e-6 * hscale : 10.0 * tau) {
      Eigen::LLT<Eigen::MatrixXd> llt(h + tau * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() != Eigen::Success) continue;
      d = -llt.solve(g);
      newton = d.allFinite() && g.dot(d) < 0.0;
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (!newton) {
        const double lmax = std::max(h.diagonal().cwiseAbs().maxCoeff(), 1.0);
        d = -g / lmax;
      }
      double alpha = ordering_limit(u, d);
      const double slope = g.dot(d);
      const double slack = 1e-14 * (1.0 + std::abs(e)) * static_cast<double>(n);
      while (alpha > 1e-14) {
        const Eigen::VectorXd trial = u + alpha * d;
        const double et = s.energy(trial);
        if (std::isfinite(et) && et <= e + 1e-4 * alpha * slope + slack) {
          u = trial;
          e = et;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted && !newton) break;
      newton = false;
    }
    if (!accepted) break;
    out.energy_history.push_back(e * e0);
  }

  out.positions.resize(n_ions);
  for (Eigen::Index i = 0; i < n; ++i) out.positions[i] = s.z(u[i]);
  out.gradient_norm = gnorm;
  out.iterations = it;
  if (!converged) {
    throw ConvergenceError("chain equilibrium did not converge after " + std::to_string(it) +
                               " iterations; gradient norm " + std::to_string(gnorm),
                           gnorm);
  }
  for (std::size_t i = 1; i < n_ions; ++i) {
    if (out.positions[i] - out.positions[i - 1] < options.min_separation) {
      throw DomainError("unphysical configuration: ions " + std::to_string(i - 1) + " and " +
                        std::to_string(i) + " closer than the minimum separation");
    }
  }
  return out;
}

NormalModes normal_modes(const ChainConfig& chain, double tolerance) {
  if (chain.positions.empty()) throw DomainError("empty chain has no normal modes");
  const Eigen::MatrixXd h = chain_hessian(chain.positions, chain.potential, chain.species);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h / chain.species.mass);
  const Eigen::VectorXd lam = es.eigenvalues();
  const double top = lam.cwiseAbs().maxCoeff();
  if (lam[0] < -tolerance * top) {
    throw UnstableError("chain configuration is a saddle: mode eigenvalue " +
                        std::to_string(lam[0]) + " s^-2");
  }
  NormalModes m;
  m.vectors = es.eigenvectors();
  m.frequencies.reserve(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) m.frequencies.push_back(std::sqrt(std::max(lam[i], 0.0)));
  return m;
}

std::vector<double> RampSchedule::steps() const {
  if (keyframes.size() < 2) throw ConfigError("ramp needs at least two keyframes");
  if (steps_per_segment < 1) throw ConfigError("ramp step count must be positive");
  std::vector<double> a;
  a.reserve((keyframes.size() - 1) * steps_per_segment);
  for (std::size_t k = 0; k + 1 < keyframes.size(); ++k) {
    const double a0 = keyframes[k], a1 = keyframes[k + 1];
    for (int i = 1; i <= steps_per_segment; ++i) {
      a.push_back(a0 + (a1 - a0) * static_cast<double>(i) / steps_per_segment);
    }
  }
  return a;
}

double RampSchedule::peak() const {
  if (keyframes.empty()) throw ConfigError("ramp has no keyframes");
  return *std::max_element(keyframes.begin(), keyframes.end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); });
}

SplitResult split(const ChainConfig& chain, const RampSchedule& ramp,
                  const EquilibriumOptions& options) {
  const std::vector<double> amps = ramp.steps();
  const double ref = ramp.peak();
  const double start = ramp.keyframes.front();
  if (std::abs(start - chain.potential.amplitude) > 1e-12 * std::max(std::abs(ref), 1e-30)) {
    throw ConfigError("ramp must start at the chain's current periodic amplitude");
  }

  ChainConfig current = chain;
  for (std::size_t step = 0; step < amps.size(); ++step) {
    EquilibriumOptions o = options;
    o.initial = current.positions;
    try {
      current = equilibrium(current.size(), chain.potential.with_amplitude(amps[step]),
                            chain.species, o);
    } catch (const ConvergenceError& e) {
      throw NonAdiabaticRampError(std::string("chain lost track of its minimum: ") + e.what(),
                                  step + 1);
    } catch (const DomainError& e) {
      throw NonAdiabaticRampError(std::string("chain collapsed during ramp: ") + e.what(), step + 1);
    }
  }

  SplitResult out;
  out.reference_amplitude = ref;
  out.sites.reserve(current.size());
  for (double z : current.positions) {
    const int k = current.potential.well_index(z, ref);
    out.sites.push_back(k);
    ++out.occupancy[k];
  }
  out.chain = std::move(current);
  return out;
}

std::vector<SplitResult> ramp_cycles(const ChainConfig& chain, double peak, int cycles,
                                     int steps_per_segment) {
  if (cycles < 1) throw ConfigError("ramp cycle count must be positive");
  std::vector<SplitResult> out;
  ChainConfig current = chain;
  for (int c = 0; c < cycles; ++c) {
    SplitResult up = split(current, {{current.potential.amplitude, peak}, steps_per_segment});
    out.push_back(up);
    current = split(up.chain, {{peak, 0.0}, steps_per_segment}).chain;
  }
  return out;
}

}  // namespace iontrap
