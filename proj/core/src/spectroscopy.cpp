#include "iontrap/spectroscopy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace {

// First zero of J0.
constexpr double kBesselZero = 2.404825557695773;

double bessel_sq(int n, double beta) {
  const double j = std::cyl_bessel_j(static_cast<double>(std::abs(n)), beta);
  return j * j;
}

double lorentzian(double x, double fwhm) {
  const double u = 2.0 * x / fwhm;
  return 1.0 / (1.0 + u * u);
}

// Coherent (elastic) scattering rate at atomic detuning delta.
double coherent_rate(const IonSpecies& species, double s0, double delta) {
  const ScatteringResult r = scattering_chain(species, s0, delta);
  return r.rate * r.coherent_fraction;
}

double golden_section(const auto& f, double a, double b, double tol, int* evals) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  *evals += 2;
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
    ++*evals;
  }
  return 0.5 * (a + b);
}

}  // namespace

MicromotionState micromotion_from_field(const Vec3& field, const TrapCharacterization& trap,
                                        const IonSpecies& species, double wavenumber,
                                        const Vec3& direction) {
  species.validate();
  if (!(wavenumber > 0.0)) throw DomainError("wavenumber must be positive");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw DomainError("beam direction must be a unit vector");

  MicromotionState s;
  s.field = field;
  s.direction = direction;
  for (int i = 0; i < 3; ++i) {
    const Vec3 axis = trap.axes.col(i);
    const double e = field.dot(axis);
    const double w = trap.frequencies[i];
    if (!(w > 0.0)) {
      if (e != 0.0) {
        throw DomainError("stray field along an axis with zero secular frequency gives no equilibrium");
      }
      continue;
    }
    s.displacement += species.charge * e / (species.mass * w * w) * axis;
  }
  for (int j = 0; j < 3; ++j) {
    const Vec3 axis = trap.rf_axes.col(j);
    s.amplitude += 0.5 * trap.rf_q[j] * s.displacement.dot(axis) * axis;
  }
  s.beta = wavenumber * std::abs(s.amplitude.dot(direction));
  return s;
}

std::vector<double> detuning_grid(double half_span, double step) {
  if (!(half_span > 0.0) || !(step > 0.0)) throw DomainError("grid span and step must be positive");
  const auto n = static_cast<long>(std::floor(half_span / step + 1e-9));
  std::vector<double> g;
  g.reserve(2 * n + 1);
  for (long i = -n; i <= n; ++i) g.push_back(static_cast<double>(i) * step);
  return g;
}

SpectrumScan synthesize_spectrum(double beta, const ProbeParams& probe, const CavityParams& cavity,
                                 const IonSpecies& species, double drive_frequency,
                                 const std::vector<double>& grid, const SpectrumOptions& options) {
  probe.validate();
  species.validate();
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw DomainError("modulation index must be >= 0");
  if (!(drive_frequency > 0.0)) throw DomainError("drive frequency must be positive");
  if (grid.size() < 3) throw DomainError("spectrum grid needs at least three points");
  const double res = options.resolution ? *options.resolution
                                        : cavity.kappa_value() + probe.laser_linewidth;
  if (!(res > 0.0)) throw DomainError("spectral resolution must be positive");

  int n_max = std::max(options.n_max, 0);
  auto weight_sum = [&](int nm) {
    double s = bessel_sq(0, beta);
    for (int n = 1; n <= nm; ++n) s += 2.0 * bessel_sq(n, beta);
    return s;
  };
  while (weight_sum(n_max) <= options.bessel_floor) {
    if (++n_max > 200) throw DomainError("modulation index too large for sideband synthesis");
  }
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  const double need = (n_max + 1) * drive_frequency;
  if (*lo > -need || *hi < need) {
    throw DomainError("spectrum grid too narrow: orders up to " + std::to_string(n_max) +
                      " need +-" + std::to_string(units::hertz(need) / units::MHz) + " MHz");
  }

  const double r0 = coherent_rate(species, probe.s0, probe.detuning);
  if (!(r0 > 0.0)) throw DomainError("probe produces no coherent scattering");

  SpectrumScan scan;
  scan.resolution = res;
  scan.drive_frequency = drive_frequency;
  scan.n_max = n_max;
  scan.bessel_sum = weight_sum(n_max);
  for (int n = -n_max; n <= n_max; ++n) {
    SpectrumComponent c;
    c.order = n;
    c.weight = bessel_sq(n, beta);
    c.center = n * drive_frequency;
    c.envelope = options.constant_envelope
                     ? 1.0
                     : coherent_rate(species, probe.s0, probe.detuning + n * drive_frequency) / r0;
    scan.components.push_back(c);
  }
  scan.detuning = grid;
  scan.intensity.reserve(grid.size());
  for (double d : grid) {
    double s = 0.0;
    for (const auto& c : scan.components) s += c.weight * c.envelope * lorentzian(d - c.center, res);
    scan.intensity.push_back(options.peak_rate * s);
  }
  return scan;
}

SpectrumScan synthesize_spectrum(const MicromotionState& state, const ProbeParams& probe,
                                 const CavityParams& cavity, const IonSpecies& species,
                                 double drive_frequency, const std::vector<double>& grid,
                                 const SpectrumOptions& options) {
  return synthesize_spectrum(state.beta, probe, cavity, species, drive_frequency, grid, options);
}

double beta_from_ratio(double ratio) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw DomainError("beta out of range");
  if (ratio == 0.0) return 0.0;
  auto r = [](double b) {
    const double j0 = std::cyl_bessel_j(0.0, b), j1 = std::cyl_bessel_j(1.0, b);
    return j1 * j1 / (j0 * j0);
  };
  double a = 0.0, b = kBesselZero * (1.0 - 1e-12);
  if (r(b) < ratio) throw DomainError("beta out of range");
  for (int i = 0; i < 200 && b - a > 1e-15; ++i) {
    const double m = 0.5 * (a + b);
    (r(m) < ratio ? a : b) = m;
  }
  return 0.5 * (a + b);
}

SidebandFit fit_sidebands(const SpectrumScan& scan, double drive_frequency) {
  if (!(drive_frequency > 0.0)) throw DomainError("drive frequency must be positive");
  if (!(scan.resolution > 0.0)) throw DomainError("scan has no resolution");
  if (scan.detuning.size() != scan.intensity.size() || scan.detuning.empty()) {
    throw ConfigError("scan detuning and intensity differ in length");
  }
  const auto [lo, hi] = std::minmax_element(scan.detuning.begin(), scan.detuning.end());
  std::vector<int> orders;
  for (int n = -200; n <= 200; ++n) {
    const double c = n * drive_frequency;
    if (c >= *lo && c <= *hi) orders.push_back(n);
  }
  const bool has_pair = std::count(orders.begin(), orders.end(), 1) && std::count(orders.begin(), orders.end(), -1);
  if (!has_pair) throw DomainError("scan does not cover the first sideband pair");

  const auto m = static_cast<Eigen::Index>(scan.detuning.size());
  const auto k = static_cast<Eigen::Index>(orders.size());
  Eigen::MatrixXd a(m, k);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    y[i] = scan.intensity[i];
    for (Eigen::Index j = 0; j < k; ++j) {
      a(i, j) = lorentzian(scan.detuning[i] - orders[j] * drive_frequency, scan.resolution);
    }
  }
  const Eigen::VectorXd p = a.colPivHouseholderQr().solve(y);
  const double to_area = 0.5 * constants::pi * scan.resolution;

  SidebandFit f;
  f.residual_norm = (y - a * p).norm();
  double amp0 = 0.0, amp_p = 0.0, amp_m = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (orders[j] == 0) {
      amp0 = p[j];
      f.carrier_area = p[j] * to_area;
    } else {
      f.sideband_areas[orders[j]] = p[j] * to_area;
    }
    if (orders[j] == 1) amp_p = p[j];
    if (orders[j] == -1) amp_m = p[j];
  }
  if (!(amp0 > 0.0)) throw DomainError("beta out of range: no carrier in scan");
  f.ratio = 0.5 * (amp_p + amp_m) / amp0;
  // Tiny negative ratios are least-squares noise on an absent sideband.
  const double r = f.ratio < 0.0 && f.ratio > -1e-6 ? 0.0 : f.ratio;
  f.beta = beta_from_ratio(r);
  return f;
}

double peak_fwhm(const SpectrumScan& scan, double center) {
  const auto& x = scan.detuning;
  const auto& y = scan.intensity;
  if (x.size() < 3 || x.size() != y.size()) throw DomainError("scan too short for a width");
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs(x[i] - center) < std::abs(x[i0] - center)) i0 = i;
  }
  // Climb to the local maximum.
  while (i0 + 1 < y.size() && y[i0 + 1] > y[i0]) ++i0;
  while (i0 > 0 && y[i0 - 1] > y[i0]) --i0;
  const double half = 0.5 * y[i0];
  std::size_t r = i0, l = i0;
  while (r + 1 < y.size() && y[r] > half) ++r;
  while (l > 0 && y[l] > half) --l;
  if (y[r] > half || y[l] > half) throw DomainError("peak does not fall to half maximum inside the scan");
  auto cross = [&](std::size_t a, std::size_t b) {
    return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
  };
  return cross(r - 1, r) - cross(l + 1, l);
}

CompensationResult compensate(const Vec3& stray_field, const TrapCharacterization& trap,
                              const IonSpecies& species, const ProbeParams& probe,
                              const CavityParams& cavity, const CompensationOptions& options) {
  if (options.probe_directions.empty()) throw ConfigError("compensation needs a probe beam");
  const double omega = trap.drive_frequency;
  if (!(omega > 0.0)) throw DomainError("trap has no drive frequency");
  for (int i = 0; i < 3; ++i) {
    if (options.box_min[i] > options.box_max[i]) throw ConfigError("search box has min above max");
  }
  const double k = species.wavenumber();

  SpectrumOptions so = options.spectrum;
  // A spectrum that stays synthesizable across the whole box.
  double beta_max = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    Vec3 e = stray_field;
    for (int i = 0; i < 3; ++i) e[i] += (corner >> i & 1) ? options.box_max[i] : options.box_min[i];
    for (const Vec3& d : options.probe_directions) {
      beta_max = std::max(beta_max, micromotion_from_field(e, trap, species, k, d).beta);
    }
  }
  if (beta_max >= kBesselZero) {
    throw DomainError("search box reaches modulation index " + std::to_string(beta_max) +
                      " beyond the invertible range; shrink the box");
  }
  int n_span = std::max(so.n_max, 1);
  {
    double s = bessel_sq(0, beta_max);
    for (int n = 1; n <= n_span; ++n) s += 2.0 * bessel_sq(n, beta_max);
    while (s <= so.bessel_floor) {
      ++n_span;
      s += 2.0 * bessel_sq(n_span, beta_max);
    }
  }
  const std::vector<double> grid =
      detuning_grid((n_span + 1.5) * omega, options.grid_step_fraction * omega);

  CompensationResult out;
  auto objective = [&](const Vec3& applied) {
    double total = 0.0;
    for (const Vec3& d : options.probe_directions) {
      const MicromotionState st = micromotion_from_field(stray_field + applied, trap, species, k, d);
      const SpectrumScan scan = synthesize_spectrum(st, probe, cavity, species, omega, grid, so);
      total += fit_sidebands(scan, omega).ratio;
    }
    return total;
  };

  Vec3 x = Vec3::Zero();
  for (int i = 0; i < 3; ++i) x[i] = std::clamp(0.0, options.box_min[i], options.box_max[i]);
  bool settled = false;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double change = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double a = options.box_min[i], b = options.box_max[i];
      if (!(b > a)) continue;
      auto along = [&](double v) {
        Vec3 p = x;
        p[i] = v;
        return objective(p);
      };
      const double fa = along(a), fb = along(b), fm = along(0.5 * (a + b));
      out.evaluations += 3;
      const double spread = std::max({fa, fb, fm}) - std::min({fa, fb, fm});
      if (spread <= 1e-12 * std::max({std::abs(fa), std::abs(fb), 1e-30})) continue;  // insensitive axis
      const double v = golden_section(along, a, b, 0.1 * options.field_tolerance, &out.evaluations);
      change = std::max(change, std::abs(v - x[i]));
      x[i] = v;
    }
    out.sweeps = sweep + 1;
    if (change < options.field_tolerance) {
      settled = true;
      break;
    }
  }
  if (!settled) {
    throw ConvergenceError("compensation search did not settle within " +
                               std::to_string(options.max_sweeps) + " sweeps",
                           objective(x));
  }
  for (int i = 0; i < 3; ++i) {
    const double w = options.box_max[i] - options.box_min[i];
    if (!(w > 0.0)) continue;
    if (x[i] - options.box_min[i] < 1e-3 * w || options.box_max[i] - x[i] < 1e-3 * w) {
      throw DomainError("compensation minimum on the search-box boundary; expand search box");
    }
  }
  out.field = x;
  for (const Vec3& d : options.probe_directions) {
    out.residual_beta =
        std::max(out.residual_beta, micromotion_from_field(stray_field + x, trap, species, k, d).beta);
  }
  return out;
}

}  // namespace iontrap
