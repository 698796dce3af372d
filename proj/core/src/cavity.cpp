#include "iontrap/cavity.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive");
}

void require_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

}  // namespace

double CavityParams::free_spectral_range() const {
  require_positive(length, "cavity length");
  return constants::speed_of_light / (2.0 * length);
}

double CavityParams::kappa_value() const {
  if (kappa) return *kappa;
  return kappa_from_finesse(length, finesse);
}

std::optional<double> CavityParams::output_coupling_value() const {
  if (output_coupling) return output_coupling;
  if (transmission && loss) return *transmission / (*transmission + *loss);
  if (transmission) return *transmission * finesse / constants::pi;
  return std::nullopt;
}

void CavityParams::validate() const {
  require_positive(length, "cavity length");
  require_positive(finesse, "finesse");
  require_positive(waist, "cavity waist");
  require_positive(wavelength, "cavity wavelength");
  if (kappa) require_positive(*kappa, "cavity linewidth");
  if (transmission) require_unit(*transmission, "mirror transmission");
  if (loss) require_unit(*loss, "mirror loss");
  if (output_coupling) require_unit(*output_coupling, "output coupling");
  if (transmission && loss) {
    const double f = constants::pi / (*transmission + *loss);
    if (std::abs(f - finesse) > 0.05 * finesse) {
      throw ConfigError("finesse " + std::to_string(finesse) + " inconsistent with pi/(T+L) = " +
                        std::to_string(f));
    }
  }
  if (auto oc = output_coupling_value()) require_unit(*oc, "output coupling T/(T+L)");
}

void ProbeParams::validate() const {
  if (!(s0 >= 0.0) || !std::isfinite(s0)) throw DomainError("saturation parameter must be >= 0");
  if (!std::isfinite(detuning)) throw DomainError("detuning must be finite");
  if (!(laser_linewidth >= 0.0)) throw DomainError("laser linewidth must be >= 0");
  require_unit(polarization_factor, "polarization factor");
  require_unit(port_fraction, "port fraction");
  require_unit(mode_match, "mode match");
  require_unit(optics, "optics transmission");
  require_unit(detector_qe, "detector quantum efficiency");
}

double cooperativity(double finesse, double waist, double wavelength) {
  require_positive(finesse, "finesse");
  require_positive(waist, "waist");
  require_positive(wavelength, "wavelength");
  const double k0 = constants::two_pi / wavelength;
  return 24.0 * finesse / (constants::pi * waist * waist * k0 * k0);
}

double g_from_eta(double eta, double kappa, double linewidth) {
  if (!(eta >= 0.0)) throw DomainError("cooperativity must be >= 0");
  require_positive(kappa, "kappa");
  require_positive(linewidth, "linewidth");
  return 0.5 * std::sqrt(eta * kappa * linewidth);
}

double eta_from_g(double g, double kappa, double linewidth) {
  require_positive(kappa, "kappa");
  require_positive(linewidth, "linewidth");
  return 4.0 * g * g / (kappa * linewidth);
}

double kappa_from_finesse(double length, double finesse) {
  require_positive(length, "cavity length");
  require_positive(finesse, "finesse");
  return constants::two_pi * constants::speed_of_light / (2.0 * length * finesse);
}

CouplingResult coupling(const CavityParams& cavity, const IonSpecies& species, int ions) {
  cavity.validate();
  species.validate();
  if (ions < 1) throw DomainError("ion number must be at least 1");
  CouplingResult r;
  r.eta = cooperativity(cavity.finesse, cavity.waist, cavity.wavelength);
  r.g = g_from_eta(r.eta, cavity.kappa_value(), species.linewidth);
  r.ions = ions;
  r.collective = ions * r.eta;
  return r;
}

ScatteringResult scattering_chain(const IonSpecies& species, double s0, double detuning) {
  if (!(s0 >= 0.0)) throw DomainError("saturation parameter must be >= 0");
  require_positive(species.linewidth, "linewidth");
  const double x = 2.0 * detuning / species.linewidth;
  ScatteringResult r;
  r.saturation = s0 / (1.0 + x * x);
  r.rate = r.saturation / (1.0 + r.saturation) * 0.5 * species.linewidth;
  r.coherent_fraction = 1.0 / (1.0 + r.saturation);
  return r;
}

ScatteringResult scattering_chain(const IonSpecies& species, const ProbeParams& probe) {
  return scattering_chain(species, probe.s0, probe.detuning);
}

const BudgetFactor& PhotonBudget::factor(const std::string& name) const {
  for (const auto& f : factors) {
    if (f.name == name) return f;
  }
  throw ConfigError("photon budget has no factor '" + name + "'");
}

PhotonBudget photon_budget(const IonSpecies& species, const ProbeParams& probe,
                           const CavityParams& cavity, double eta, double localization) {
  species.validate();
  probe.validate();
  cavity.validate();
  if (!(eta >= 0.0)) throw DomainError("cooperativity must be >= 0");
  if (!(localization >= 0.5 && localization <= 1.0)) {
    throw DomainError("localization factor must lie in [1/2, 1]");
  }
  const auto oc = cavity.output_coupling_value();
  if (!oc) throw ConfigError("cavity needs a mirror transmission or an output coupling");

  const ScatteringResult sc = scattering_chain(species, probe);
  const double kappa = cavity.kappa_value();
  const double collection = localization * eta;
  if (collection > 1.0) throw DomainError("cavity collection fraction exceeds 1");

  PhotonBudget b;
  auto push = [&](std::string name, double v) {
    const double prev = b.factors.empty() ? 1.0 : b.factors.back().running;
    b.factors.push_back({std::move(name), v, prev * v});
  };
  push("scattering_rate_per_s", sc.rate);
  push("coherent_fraction", sc.coherent_fraction);
  push("localization", localization);
  push("cooperativity", eta);
  push("linewidth_overlap", kappa / (kappa + probe.laser_linewidth));
  push("polarization", probe.polarization_factor);
  push("port_fraction", probe.port_fraction);
  push("output_coupling", *oc);
  push("mode_match", probe.mode_match);
  push("optics", probe.optics);
  push("detector_qe", probe.detector_qe);
  b.total = b.factors.back().running;
  return b;
}

double doppler_temperature(const IonSpecies& species) {
  require_positive(species.linewidth, "linewidth");
  return 0.5 * constants::hbar * species.linewidth / constants::boltzmann;
}

ThermometryResult visibility_to_temperature(double visibility, double omega_axial,
                                            const IonSpecies& species, double wavelength,
                                            double contrast) {
  require_positive(omega_axial, "axial frequency");
  require_positive(wavelength, "wavelength");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw DomainError("contrast must lie in (0, 1]");
  if (!(visibility > 0.0 && visibility <= contrast)) {
    throw DomainError("visibility must lie in (0, contrast]");
  }
  const double k = constants::two_pi / wavelength;
  ThermometryResult r;
  r.visibility = visibility;
  r.sigma = std::sqrt(-std::log(visibility / contrast) / (2.0 * k * k));
  r.temperature = species.mass * omega_axial * omega_axial * r.sigma * r.sigma / constants::boltzmann;
  r.doppler_temperature = doppler_temperature(species);
  r.doppler_ratio = r.temperature / r.doppler_temperature;
  return r;
}

ThermometryResult temperature_to_visibility(double temperature, double omega_axial,
                                            const IonSpecies& species, double wavelength,
                                            double contrast) {
  require_positive(omega_axial, "axial frequency");
  require_positive(wavelength, "wavelength");
  if (!(temperature >= 0.0)) throw DomainError("temperature must be >= 0");
  if (!(contrast > 0.0 && contrast <= 1.0)) throw DomainError("contrast must lie in (0, 1]");
  const double k = constants::two_pi / wavelength;
  ThermometryResult r;
  r.temperature = temperature;
  r.sigma = std::sqrt(constants::boltzmann * temperature / (species.mass * omega_axial * omega_axial));
  r.visibility = contrast * std::exp(-2.0 * k * k * r.sigma * r.sigma);
  r.doppler_temperature = doppler_temperature(species);
  r.doppler_ratio = r.temperature / r.doppler_temperature;
  return r;
}

std::vector<double> fringe_scan(const std::vector<double>& z, double visibility, double base_rate,
                                double wavelength) {
  require_unit(visibility, "visibility");
  require_positive(wavelength, "wavelength");
  const double k2 = 2.0 * constants::two_pi / wavelength;
  std::vector<double> out;
  out.reserve(z.size());
  for (double zi : z) out.push_back(base_rate * (1.0 + visibility * std::cos(k2 * zi)));
  return out;
}

double fringe_peak_valley(double visibility) {
  if (!(visibility >= 0.0 && visibility < 1.0)) throw DomainError("visibility must lie in [0, 1)");
  return (1.0 + visibility) / (1.0 - visibility);
}

FringeFit fit_fringe(const std::vector<double>& z, const std::vector<double>& rate,
                     double wavelength) {
  require_positive(wavelength, "wavelength");
  if (z.size() != rate.size()) throw ConfigError("fringe scan positions and rates differ in length");
  if (z.size() < 4) throw DomainError("fringe fit needs at least four points");
  const auto n = static_cast<Eigen::Index>(z.size());
  const double k2 = 2.0 * constants::two_pi / wavelength;
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = std::cos(k2 * z[i]);
    a(i, 2) = std::sin(k2 * z[i]);
    y[i] = rate[i];
  }
  const Eigen::Matrix3d ata = a.transpose() * a;
  const Eigen::Vector3d p = ata.ldlt().solve(a.transpose() * y);
  const Eigen::VectorXd res = y - a * p;
  const double c = p[0];
  if (!(c > 0.0)) throw DomainError("fringe fit gives a non-positive mean rate");
  const double h = std::hypot(p[1], p[2]);

  FringeFit f;
  f.base_rate = c;
  f.visibility = h / c;
  // rate = c + h cos(k2 z + phase) with cos term p1 and sin term p2.
  f.phase = std::atan2(-p[2], p[1]);
  f.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(n));
  const double s2 = n > 3 ? res.squaredNorm() / static_cast<double>(n - 3) : 0.0;
  const Eigen::Matrix3d cov = s2 * ata.inverse();
  Eigen::Vector3d grad(-h / (c * c), 0.0, 0.0);
  if (h > 0.0) {
    grad[1] = p[1] / (c * h);
    grad[2] = p[2] / (c * h);
  }
  f.visibility_error = std::sqrt(std::max(0.0, grad.dot(cov * grad)));
  return f;
}

int collective_threshold(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("cooperativity must be positive");
  // ceil(1/eta) can be off by one when 1/eta rounds across an integer.
  auto n = static_cast<long long>(std::ceil(1.0 / eta));
  while (static_cast<double>(n) * eta < 1.0) ++n;
  while (n > 1 && static_cast<double>(n - 1) * eta >= 1.0) --n;
  if (n > std::numeric_limits<int>::max()) throw DomainError("cooperativity too small");
  return static_cast<int>(n);
}

LatticeGeometry lattice_geometry(double wavelength, double peak_intensity) {
  require_positive(wavelength, "wavelength");
  if (!(peak_intensity >= 0.0)) throw DomainError("peak intensity must be >= 0");
  return {0.5 * wavelength, peak_intensity};
}

}  // namespace iontrap
