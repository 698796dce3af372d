#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "generators.hpp"
#include "iontrap/constants.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/error.hpp"
#include "iontrap/layout_design.hpp"
#include "iontrap/layout_io.hpp"

using namespace iontrap;
using iontrap::testing::Gen;
using iontrap::testing::rel_err;

namespace {

const IonSpecies kYb = IonSpecies::ytterbium174();
const RfDrive kDrive{127.0, units::angular(16.4e6)};

// Grounded-plane Green's function integrated over the patch by composite
// Simpson: phi = V z / (2 pi) * int int dA / r^3.
double quadrature_potential(const RectPatch& r, double v, const Vec3& p, int n) {
  const double hx = (r.x2 - r.x1) / n;
  const double hy = (r.y2 - r.y1) / n;
  auto w = [n](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double dx = r.x1 + i * hx - p.x();
    for (int j = 0; j <= n; ++j) {
      const double dy = r.y1 + j * hy - p.y();
      const double d2 = dx * dx + dy * dy + p.z() * p.z();
      sum += w(i) * w(j) / (d2 * std::sqrt(d2));
    }
  }
  return v * p.z() / (2.0 * constants::pi) * sum * hx * hy / 9.0;
}

// Two long RF rails of width b either side of a grounded center strip of width a.
TrapLayout long_rails(double a, double b) {
  const double len = 1.0;
  Electrode rf{"rf", ElectrodeRole::rf, 0.0,
               {{-len, len, -a / 2 - b, -a / 2}, {-len, len, a / 2, a / 2 + b}}};
  return TrapLayout({rf}, kDrive);
}

TrapLayout five_wire() {
  FiveWireGeometry g;
  return build_five_wire(g, kDrive);
}

}  // namespace

TEST_CASE("patch potential: boundary values") {
  const RectPatch r{-1e-4, 1e-4, -1e-4, 1e-4};
  CHECK(patch_potential(r, 2.5, Vec3(0, 0, 1e-12)) == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(std::abs(patch_potential(r, 2.5, Vec3(0, 0, 1e3))) < 1e-12);
  CHECK_THROWS_AS(patch_potential(r, 1.0, Vec3(0, 0, 0)), DomainError);
  CHECK_THROWS_AS(patch_potential(r, 1.0, Vec3(0, 0, -1e-6)), DomainError);
}

TEST_CASE("patch potential matches surface-integral quadrature") {
  const RectPatch r{-0.5, 0.5, -0.5, 0.5};
  const Vec3 p(0.0, 0.0, std::sqrt(0.5));
  const double exact = patch_potential(r, 1.0, p);
  const double quad = quadrature_potential(r, 1.0, p, 400);
  CHECK(rel_err(exact, quad) < 1e-6);

  // Off-center point, non-square patch.
  const RectPatch s{-0.3, 0.9, 0.1, 0.6};
  const Vec3 q(0.2, -0.4, 0.35);
  CHECK(rel_err(patch_potential(s, -3.0, q), quadrature_potential(s, -3.0, q, 600)) < 1e-6);
}

TEST_CASE("property: Laplace residual of patch potential") {
  Gen gen(11);
  const RectPatch r{-50e-6, 70e-6, -30e-6, 40e-6};
  for (int k = 0; k < 100; ++k) {
    const Vec3 p = gen.point(Vec3(-150e-6, -150e-6, 20e-6), Vec3(150e-6, 150e-6, 300e-6));
    const double h = p.z();
    const double d = 2e-4 * h;
    const double phi = patch_potential(r, 1.0, p);
    double lap = -6.0 * phi;
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = d;
      lap += patch_potential(r, 1.0, p + e) + patch_potential(r, 1.0, p - e);
    }
    lap /= d * d;
    CHECK(std::abs(lap) < 1e-5 * std::abs(phi) / (h * h));
  }
}

TEST_CASE("property: analytic patch field equals central-difference gradient") {
  Gen gen(12);
  const RectPatch r{-80e-6, 20e-6, -60e-6, 90e-6};
  for (int k = 0; k < 100; ++k) {
    const Vec3 p = gen.point(Vec3(-200e-6, -200e-6, 30e-6), Vec3(200e-6, 200e-6, 300e-6));
    const double d = 1e-5 * p.z();
    Vec3 fd;
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = d;
      fd[i] = -(patch_potential(r, 1.0, p + e) - patch_potential(r, 1.0, p - e)) / (2 * d);
    }
    const Vec3 f = patch_field(r, 1.0, p);
    CHECK((f - fd).norm() < 1e-6 * f.norm());
  }
}

TEST_CASE("total_dc: zero, linearity, superposition, finite differences at 134 um") {
  const TrapLayout base = five_wire();
  const TrapLayout dc = base.with_dc_voltage("dc01", 1.3)
                            .with_dc_voltage("dc18", -0.7)
                            .with_role_voltage(ElectrodeRole::periodic_inner, -1.0)
                            .with_role_voltage(ElectrodeRole::periodic_outer, 0.9);
  const Vec3 p = base.rf_center() + Vec3(20e-6, 5e-6, 134e-6);

  const DcSample zero = total_dc(base.without_dc(), p);
  CHECK(zero.potential == 0.0);
  CHECK(zero.field.norm() == 0.0);

  std::vector<Electrode> doubled = dc.electrodes();
  for (auto& e : doubled) e.dc_voltage *= 2.0;
  const DcSample one = total_dc(dc, p);
  const DcSample two = total_dc(TrapLayout(doubled, dc.drive()), p);
  CHECK(two.potential == doctest::Approx(2.0 * one.potential).epsilon(1e-14));
  CHECK((two.field - 2.0 * one.field).norm() < 1e-13 * one.field.norm());

  double phi = 0.0;
  Vec3 field = Vec3::Zero();
  for (const auto& e : dc.electrodes()) {
    if (e.dc_voltage == 0.0) continue;
    for (const auto& r : e.patches) {
      phi += patch_potential(r, e.dc_voltage, p);
      field += patch_field(r, e.dc_voltage, p);
    }
  }
  CHECK(std::abs(one.potential - phi) < 1e-13 * std::abs(phi));
  CHECK((one.field - field).norm() < 1e-12 * field.norm());

  const double d = 1e-9;
  Vec3 fd;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = d;
    fd[i] = -(total_dc(dc, p + e).potential - total_dc(dc, p - e).potential) / (2 * d);
  }
  CHECK((one.field - fd).norm() < 1e-6 * one.field.norm());
}

TEST_CASE("property: field gradients equal finite differences of the field") {
  Gen gen(13);
  const TrapLayout layout = five_wire().with_dc_voltage("dc03", 2.0);
  const Vec3 c = layout.rf_center();
  for (int k = 0; k < 30; ++k) {
    const Vec3 p = c + gen.point(Vec3(-100e-6, -100e-6, 60e-6), Vec3(100e-6, 100e-6, 250e-6));
    const double d = 1e-9;
    Mat3 fd_rf, fd_dc;
    for (int j = 0; j < 3; ++j) {
      Vec3 e = Vec3::Zero();
      e[j] = d;
      fd_rf.col(j) = (rf_field(layout, p + e) - rf_field(layout, p - e)) / (2 * d);
      fd_dc.col(j) = (total_dc(layout, p + e).field - total_dc(layout, p - e).field) / (2 * d);
    }
    const Mat3 g_rf = rf_field_gradient(layout, p);
    const Mat3 g_dc = dc_field_gradient(layout, p);
    CHECK((g_rf - fd_rf).norm() < 1e-6 * g_rf.norm());
    CHECK((g_dc - fd_dc).norm() < 1e-6 * g_dc.norm());
    // Curl-free and divergence-free.
    CHECK((g_rf - g_rf.transpose()).norm() < 1e-9 * g_rf.norm());
    CHECK(std::abs(g_rf.trace()) < 1e-9 * g_rf.norm());
  }
}

TEST_CASE("pseudopotential: non-negative, quadratic in drive amplitude, zero at the null") {
  Gen gen(14);
  const TrapLayout layout = five_wire();
  const TrapLayout twice = layout.with_drive({2.0 * kDrive.amplitude, kDrive.angular_frequency});
  for (int k = 0; k < 50; ++k) {
    const Vec3 p = layout.rf_center() + gen.point(Vec3(-1e-4, -2e-4, 2e-5), Vec3(1e-4, 2e-4, 4e-4));
    const double a = pseudopotential(layout, kYb, p);
    CHECK(a >= 0.0);
    CHECK(pseudopotential(twice, kYb, p) == doctest::Approx(4.0 * a).epsilon(1e-13));
  }
  const RfNull null = find_rf_null(layout);
  CHECK(null.residual < 1e-3);
  CHECK(pseudopotential(layout, kYb, null.position) < 1e-12);
}

TEST_CASE("rf null of long rails matches the two-dimensional closed form") {
  const double a = 120e-6;
  const double b = 180e-6;
  const RfNull null = find_rf_null(long_rails(a, b), NullOptions{1e-6, 0.0, 100});
  const double h = std::sqrt((a / 2) * (a / 2 + b));
  CHECK(null.height() == doctest::Approx(h).epsilon(1e-6));
  CHECK(std::abs(null.position.y()) < 1e-12);
}

TEST_CASE("rf null: symmetry plane and translation covariance") {
  const TrapLayout layout = five_wire();
  const RfNull a = find_rf_null(layout);
  CHECK(std::abs(a.position.y() - layout.rf_center().y()) < 1e-9);
  const TrapLayout moved = layout.translated(37e-6, -12e-6);
  NullOptions opt;
  opt.axial_position = a.position.x() + 37e-6;
  const RfNull b = find_rf_null(moved, opt);
  CHECK((b.position - a.position - Vec3(37e-6, -12e-6, 0.0)).norm() < 1e-9);
}

TEST_CASE("property: Mathieu consistency for pure-RF confinement") {
  Gen gen(15);
  for (int k = 0; k < 6; ++k) {
    FiveWireGeometry g;
    g.center_width = gen.uniform(80e-6, 200e-6);
    g.rf_width = gen.uniform(120e-6, 260e-6);
    const double v = gen.uniform(40.0, 150.0);
    const TrapLayout layout = build_five_wire(g, {v, kDrive.angular_frequency}).rf_only();
    CharacterizeOptions opt;
    opt.compute_depth = false;
    const TrapCharacterization t = characterize(layout, kYb, opt);
    if (std::abs(t.mathieu_q) > 0.3) continue;
    for (int i = 0; i < 2; ++i) {
      // Pair each radial secular axis with the RF gradient axis it overlaps most.
      Eigen::Index j = 0;
      (t.rf_axes.transpose() * t.axes.col(i)).cwiseAbs().maxCoeff(&j);
      const double ratio =
          t.frequencies[i] * 2.0 * std::sqrt(2.0) / (std::abs(t.rf_q[j]) * t.drive_frequency);
      CHECK(std::abs(ratio - 1.0) < 0.05);
    }
  }
}

TEST_CASE("characterize: depth agrees with a brute-force scan above the null") {
  const TrapLayout layout = five_wire().rf_only();
  const TrapCharacterization t = characterize(layout, kYb);
  const Vec3 n = t.equilibrium;
  double barrier = 0.0;
  for (double z = n.z(); z < n.z() + 8.0 * n.z(); z += 0.001 * n.z()) {
    barrier = std::max(barrier, pseudopotential(layout, kYb, Vec3(n.x(), n.y(), z)));
  }
  const double base = pseudopotential(layout, kYb, n);
  CHECK(t.depth == doctest::Approx(barrier - base).epsilon(0.02));
}

TEST_CASE("characterize: a DC quadrupole without RF is a saddle") {
  const TrapLayout layout =
      five_wire().with_drive({1e-6, kDrive.angular_frequency})
          .with_dc_voltage("dc06", 5.0)
          .with_dc_voltage("dc18", 5.0)
          .with_dc_voltage("dc07", 5.0)
          .with_dc_voltage("dc19", 5.0);
  CHECK_THROWS_AS(characterize(layout, kYb), UnstableError);
}

TEST_CASE("periodic potential: flat at zero volts, linear in the inner voltage, period") {
  const TrapLayout layout = reference_layout();
  const PeriodicPotential flat = periodic_axial_potential(layout, 0.0, 0.0, 138e-6);
  for (double v : flat.potential) CHECK(v == 0.0);

  const PeriodicPotential one = periodic_axial_potential(layout, -1.0, 0.9, 138e-6);
  const PeriodicPotential two = periodic_axial_potential(layout, -2.0, 1.8, 138e-6);
  CHECK(one.model.period == doctest::Approx(160e-6).epsilon(0.01));
  CHECK(two.model.amplitude == doctest::Approx(2.0 * one.model.amplitude).epsilon(1e-6));
  for (std::size_t i = 0; i < one.potential.size(); ++i) {
    CHECK(two.potential[i] == doctest::Approx(2.0 * one.potential[i]).epsilon(1e-12));
  }
}

TEST_CASE("fit_axial_model recovers a synthetic model") {
  AxialPotentialModel m;
  m.poly = {0.01, 3.0, 2e5, 0.0, 4e13};
  m.amplitude = -3.5e-3;
  m.period = 161.3e-6;
  m.phase = 0.4;
  m.center = 25e-6;
  std::vector<double> x, v;
  for (int i = 0; i <= 320; ++i) {
    x.push_back(m.center - 800e-6 + i * 5e-6);
    v.push_back(m.value(x.back()));
  }
  const AxialPotentialModel f = fit_axial_model(x, v, 160e-6, m.center);
  CHECK(f.period == doctest::Approx(m.period).epsilon(1e-6));
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(f.value(x[i]) - v[i]));
  CHECK(worst < 1e-8);
  CHECK_THROWS_AS(fit_axial_model({0.0, 1.0}, {0.0, 1.0}, 160e-6, 0.0), DomainError);
}

TEST_CASE("layout validation") {
  const RfDrive d = kDrive;
  CHECK_THROWS_AS(TrapLayout({{"dc", ElectrodeRole::dc, 1.0, {{0, 1, 0, 1}}}}, d), ConfigError);
  CHECK_THROWS_AS(TrapLayout({{"rf", ElectrodeRole::rf, 0.0, {{1, 0, 0, 1}}}}, d), ConfigError);
  CHECK_THROWS_AS(TrapLayout({{"rf", ElectrodeRole::rf, 0.0, {{0, 1, 0, 1}}}}, {127.0, 0.0}),
                  ConfigError);
  CHECK_THROWS_AS(TrapLayout({{"rf", ElectrodeRole::rf, 0.0, {{0, 1, 0, 1}}},
                              {"dc", ElectrodeRole::dc, 0.0, {{0.5, 2, 0.5, 2}}}},
                             d),
                  ConfigError);
}

TEST_CASE("layout JSON round trip and schema checks") {
  const TrapLayout layout = reference_layout();
  const std::string text = layout_to_json(layout);
  const TrapLayout back = layout_from_json(text);
  REQUIRE(back.electrodes().size() == layout.electrodes().size());
  const Vec3 p = layout.rf_center() + Vec3(3e-6, 4e-6, 130e-6);
  CHECK((rf_field(back, p) - rf_field(layout, p)).norm() == 0.0);
  CHECK(layout_to_json(back) == text);

  auto doc = nlohmann::json::parse(text);
  doc["extra_key"] = 1;
  CHECK_THROWS_AS(layout_from_json(doc.dump()), ConfigError);
  doc = nlohmann::json::parse(text);
  doc["schema"] = "iontrap-layout/0";
  CHECK_THROWS_AS(layout_from_json(doc.dump()), ConfigError);
  CHECK_THROWS_AS(layout_from_json("{"), ConfigError);
}

TEST_CASE("field map CSV header") {
  std::ostringstream os;
  const TrapLayout layout = reference_layout();
  write_field_map_csv(os, layout, kYb, {layout.rf_center() + Vec3(0, 0, 1e-4)});
  const std::string s = os.str();
  CHECK(s.rfind("x,y,z,phi_dc,Ex,Ey,Ez,phips_eV\n", 0) == 0);
}

TEST_CASE("design: targets met, scaling law, infeasible target") {
  DesignTargets targets;
  targets.omega_radial = units::angular(1.3e6);
  targets.depth = 0.084;
  const DesignResult r = design_solve(targets, kDrive, kYb);
  CHECK(r.achieved.height() == doctest::Approx(134e-6).epsilon(0.05));
  CHECK(r.achieved.mathieu_q == doctest::Approx(0.22).epsilon(0.05));
  CHECK(r.achieved.omega_radial_low() == doctest::Approx(targets.omega_radial).epsilon(0.05));
  CHECK(r.vertical_field_ratio < 0.05);

  // Lengths times s with the drive amplitude times s^2 leave q unchanged.
  const double s = 1.7;
  CharacterizeOptions opt;
  opt.compute_depth = false;
  const TrapLayout rf = r.layout.rf_only();
  const TrapCharacterization a = characterize(rf, kYb, opt);
  const TrapCharacterization b = characterize(
      rf.scaled(s).with_drive({kDrive.amplitude * s * s, kDrive.angular_frequency}), kYb, opt);
  CHECK(b.mathieu_q == doctest::Approx(a.mathieu_q).epsilon(1e-6));
  CHECK(b.height() == doctest::Approx(s * a.height()).epsilon(1e-6));

  DesignTargets far;
  far.height = 10.0;
  far.omega_radial = targets.omega_radial;
  CHECK_THROWS_AS(design_solve(far, kDrive, kYb), Error);
}
