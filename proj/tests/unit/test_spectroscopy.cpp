#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"
#include "iontrap/presets.hpp"
#include "iontrap/spectroscopy.hpp"

using namespace iontrap;
using iontrap::testing::Gen;
using units::angular;

namespace {

const Preset& preset() { return get_preset("paper-2012"); }
const IonSpecies& yb() { return preset().species; }
double drive() { return preset().drive.angular_frequency; }

TrapCharacterization trap() {
  return TrapCharacterization::ideal_linear(angular(1.3e6), 0.22, drive(), angular(1.14e6));
}

SpectrumOptions options() {
  SpectrumOptions o;
  o.resolution = preset().resolution;
  return o;
}

std::vector<double> grid() { return detuning_grid(8.0 * drive(), 0.01 * drive()); }

SpectrumScan synth(double beta, const SpectrumOptions& o = options()) {
  return synthesize_spectrum(beta, preset().probe, preset().cavity, yb(), drive(), grid(), o);
}

double ratio_oracle(double b) {
  const double j0 = std::cyl_bessel_j(0.0, b);
  const double j1 = std::cyl_bessel_j(1.0, b);
  return j1 * j1 / (j0 * j0);
}

std::size_t nearest(const std::vector<double>& x, double v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (std::abs(x[i] - v) < std::abs(x[best] - v)) best = i;
  }
  return best;
}

}  // namespace

TEST_CASE("micromotion: zero field, 65 V/m example, linearity") {
  const double k = yb().wavenumber();
  const Vec3 dir = Vec3::UnitY();
  CHECK(micromotion_from_field(Vec3::Zero(), trap(), yb(), k, dir).beta == 0.0);

  const MicromotionState s = micromotion_from_field(Vec3(0, 65.0, 0), trap(), yb(), k, dir);
  // Independent unit-checked arithmetic.
  const double w = angular(1.3e6);
  const double dx = constants::elementary_charge * 65.0 / (yb().mass * w * w);
  const double xmm = 0.22 * dx / 2.0;
  const double beta = 2.0 * constants::pi / 369.5e-9 * xmm;
  CHECK(dx == doctest::Approx(540e-9).epsilon(0.02));
  CHECK(xmm == doctest::Approx(59e-9).epsilon(0.02));
  CHECK(s.displacement.y() == doctest::Approx(dx).epsilon(1e-12));
  CHECK(s.beta == doctest::Approx(beta).epsilon(1e-12));
  CHECK(s.beta == doctest::Approx(1.0).epsilon(0.05));

  Gen gen(51);
  for (int i = 0; i < 50; ++i) {
    const Vec3 e = gen.point(Vec3(0, -200, -200), Vec3(0, 200, 200));
    const double a = gen.uniform(0.1, 3.0);
    const Vec3 d = gen.point(Vec3(-1, -1, -1), Vec3(1, 1, 1)).normalized();
    const double b1 = micromotion_from_field(e, trap(), yb(), k, d).beta;
    const double b2 = micromotion_from_field(a * e, trap(), yb(), k, d).beta;
    CHECK(b2 == doctest::Approx(a * b1).epsilon(1e-12));
  }
  // Field along the RF-free axial direction leaves beta at zero.
  CHECK(micromotion_from_field(Vec3(30, 0, 0), trap(), yb(), k, Vec3::UnitX()).beta == 0.0);
  const auto no_axial = TrapCharacterization::ideal_linear(angular(1.3e6), 0.22, drive());
  CHECK_THROWS_AS(micromotion_from_field(Vec3(30, 0, 0), no_axial, yb(), k, dir), DomainError);
  CHECK_THROWS_AS(micromotion_from_field(Vec3::Zero(), trap(), yb(), k, Vec3(1, 1, 0)), DomainError);
}

TEST_CASE("spectrum: beta = 0 is a single carrier of the instrument width") {
  const SpectrumScan s = synth(0.0);
  const double step = 0.01 * drive();
  CHECK(std::abs(peak_fwhm(s, 0.0) - preset().resolution) <= step);
  const std::size_t i0 = nearest(s.detuning, 0.0);
  for (std::size_t i = 0; i < s.intensity.size(); ++i) CHECK(s.intensity[i] <= s.intensity[i0]);
  CHECK(s.intensity[i0] == doctest::Approx(1.0).epsilon(1e-12));
  const SidebandFit f = fit_sidebands(s, drive());
  CHECK(f.beta < 1e-3);
}

TEST_CASE("spectrum: Bessel weights and component layout") {
  Gen gen(52);
  for (int t = 0; t < 30; ++t) {
    const double b = gen.uniform(0.0, 2.3);
    const SpectrumScan s = synth(b);
    CHECK(s.bessel_sum > 0.999);
    CHECK(s.bessel_sum <= 1.0 + 1e-12);
    double sum = 0.0;
    for (const auto& c : s.components) {
      const double j = std::cyl_bessel_j(static_cast<double>(std::abs(c.order)), b);
      CHECK(c.weight == doctest::Approx(j * j).epsilon(1e-10));
      CHECK(c.center == doctest::Approx(c.order * drive()).epsilon(1e-15));
      sum += c.weight;
    }
    CHECK(sum == doctest::Approx(s.bessel_sum).epsilon(1e-12));
    for (double v : s.intensity) CHECK(v >= 0.0);
  }
}

TEST_CASE("spectrum: sideband orders, second order visible, asymmetry") {
  const SpectrumScan s = synth(1.0);
  const std::size_t i0 = nearest(s.detuning, 0.0);
  const std::size_t p1 = nearest(s.detuning, drive());
  const std::size_t m1 = nearest(s.detuning, -drive());
  const std::size_t p2 = nearest(s.detuning, 2.0 * drive());
  auto is_peak = [&](std::size_t i) { return s.intensity[i] > s.intensity[i - 1] && s.intensity[i] > s.intensity[i + 1]; };
  CHECK(is_peak(i0));
  // First-order maxima are pulled toward the carrier by at most one grid step.
  for (std::size_t i : {p1, m1}) CHECK((is_peak(i - 1) || is_peak(i) || is_peak(i + 1)));
  // At 7.5 MHz resolution the second order is a shoulder carrying more than 1% of the carrier.
  CHECK(s.intensity[p2] > 0.01 * s.intensity[i0]);
  double w0 = 0.0, w2 = 0.0;
  for (const auto& c : s.components) {
    if (c.order == 0) w0 = c.weight * c.envelope;
    if (c.order == 2) w2 = c.weight * c.envelope;
  }
  CHECK(w2 > 0.01 * w0);
  // Red probe: the n = +1 sideband is nearer the atomic resonance.
  CHECK(preset().probe.detuning < 0.0);
  CHECK(s.intensity[p1] > s.intensity[m1]);
  const std::size_t m2 = nearest(s.detuning, -2.0 * drive());
  CHECK(s.intensity[p2] > s.intensity[m2]);
}

TEST_CASE("property: constant envelope gives an exactly symmetric spectrum") {
  Gen gen(53);
  SpectrumOptions o = options();
  o.constant_envelope = true;
  for (int t = 0; t < 20; ++t) {
    const SpectrumScan s = synth(gen.uniform(0.0, 2.0), o);
    const std::size_t n = s.intensity.size();
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(s.intensity[i] - s.intensity[n - 1 - i]) <= 1e-12 * s.intensity[i]);
    }
  }
}

TEST_CASE("spectrum: grid too narrow") {
  const std::vector<double> narrow = detuning_grid(2.0 * drive(), 0.01 * drive());
  CHECK_THROWS_AS(synthesize_spectrum(1.0, preset().probe, preset().cavity, yb(), drive(), narrow, options()),
                  DomainError);
}

TEST_CASE("beta from ratio inverts J1^2/J0^2") {
  CHECK(beta_from_ratio(0.0) == 0.0);
  Gen gen(54);
  for (int t = 0; t < 200; ++t) {
    const double b = gen.uniform(0.0, 2.3);
    CHECK(std::abs(beta_from_ratio(ratio_oracle(b)) - b) < 1e-9);
  }
  CHECK_THROWS_AS(beta_from_ratio(-0.1), DomainError);
}

TEST_CASE("fit: round trips") {
  CHECK(std::abs(fit_sidebands(synth(1.0), drive()).beta - 1.0) < 0.05);
  CHECK(std::abs(fit_sidebands(synth(0.3), drive()).beta - 0.3) < 0.03);
  Gen gen(55);
  for (int t = 0; t < 20; ++t) {
    const double b = gen.uniform(0.1, 1.5);
    const SidebandFit f = fit_sidebands(synth(b), drive());
    CHECK(std::abs(f.beta / b - 1.0) < 0.05);
    CHECK(f.carrier_area > 0.0);
    CHECK(f.sideband_areas.count(1));
    CHECK(f.sideband_areas.count(-1));
  }
}

TEST_CASE("compensation: recovers injected fields") {
  const Preset& p = preset();
  const CompensationResult r = compensate(Vec3(0, 65.0, 0), trap(), yb(), p.probe, p.cavity);
  CHECK(std::abs(r.field.y() + 65.0) < 1.0);
  CHECK(std::abs(r.field.z()) < 1.0);
  CHECK(r.field.x() == 0.0);
  CHECK(r.residual_beta < 1e-3);

  const CompensationResult zero = compensate(Vec3::Zero(), trap(), yb(), p.probe, p.cavity);
  CHECK(zero.field.norm() < 1e-2);

  const CompensationResult two = compensate(Vec3(0, 40.0, -25.0), trap(), yb(), p.probe, p.cavity);
  CHECK(std::abs(two.field.y() + 40.0) < 1.0);
  CHECK(std::abs(two.field.z() - 25.0) < 1.0);

  // Idempotent: compensating the already compensated ion changes nothing.
  const CompensationResult again =
      compensate(Vec3(0, 65.0, 0) + r.field, trap(), yb(), p.probe, p.cavity);
  CHECK(again.field.norm() < 1e-2);
}

TEST_CASE("property: compensation inverts micromotion_from_field inside the box") {
  Gen gen(56);
  const Preset& p = preset();
  for (int t = 0; t < 4; ++t) {
    const Vec3 e = gen.point(Vec3(0, -60, -60), Vec3(0, 60, 60));
    const CompensationResult r = compensate(e, trap(), yb(), p.probe, p.cavity);
    CHECK((r.field + e).norm() < 1e-2);
  }
}

TEST_CASE("compensation: boundary and range errors") {
  const Preset& p = preset();
  CompensationOptions o;
  o.box_min = Vec3(0, -30, -30);
  o.box_max = Vec3(0, 30, 30);
  CHECK_THROWS_AS(compensate(Vec3(0, 50.0, 0), trap(), yb(), p.probe, p.cavity, o), DomainError);
  o.box_min = Vec3(0, -500, -500);
  o.box_max = Vec3(0, 500, 500);
  CHECK_THROWS_AS(compensate(Vec3(0, 65.0, 0), trap(), yb(), p.probe, p.cavity, o), DomainError);
}
