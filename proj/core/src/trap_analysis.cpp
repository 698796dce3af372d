#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "iontrap/constants.hpp"
#include "iontrap/electrostatics.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

namespace {

double golden_minimize(const auto& f, double a, double b, double tol, double* fmin) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
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
  }
  const double x = 0.5 * (a + b);
  if (fmin) *fmin = f(x);
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// RF null

RfNull find_rf_null(const TrapLayout& layout, const NullOptions& options) {
  // The null position does not depend on the drive amplitude.
  TrapLayout probe = layout.rf_only();
  if (probe.drive().amplitude == 0.0) {
    probe = probe.with_drive({1.0, probe.drive().angular_frequency});
  }
  const Vec3 c = probe.rf_center();
  const double xa = options.axial_position.value_or(c.x());
  const double w = probe.rf_half_width();
  if (!(w > 0.0)) throw ConfigError("layout RF electrodes have zero transverse extent");

  constexpr double kSeeds[] = {0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0};
  std::vector<RfNull> found;
  double best_residual = std::numeric_limits<double>::infinity();

  for (double seed : kSeeds) {
    Eigen::Vector2d yz(c.y(), seed * w);
    int it = 0;
    for (; it < options.max_iterations; ++it) {
      const Vec3 p(xa, yz[0], yz[1]);
      const Vec3 e = rf_field(probe, p);
      const Eigen::Vector2d r(e.y(), e.z());
      best_residual = std::min(best_residual, e.norm());
      if (r.norm() < options.tolerance) {
        found.push_back({p, e.norm(), it});
        break;
      }
      const Mat3 J = rf_field_gradient(probe, p);
      const Eigen::Matrix2d J2 = J.block<2, 2>(1, 1);
      Eigen::Vector2d step = -J2.fullPivLu().solve(r);
      if (!step.allFinite()) break;
      const double limit = 0.5 * yz[1];
      if (step.norm() > limit) step *= limit / step.norm();
      yz += step;
      if (!(yz[1] > 0.0) || yz[1] > 100.0 * w) break;
    }
  }
  if (found.empty()) {
    throw ConvergenceError("RF null search did not converge; best |E_rf| = " +
                               std::to_string(best_residual) + " V/m",
                           best_residual);
  }
  const auto lowest = std::min_element(found.begin(), found.end(), [](const auto& a, const auto& b) {
    return a.position.z() < b.position.z();
  });
  RfNull out = *lowest;
  // Report the residual at the caller's drive amplitude when it is nonzero.
  if (layout.drive().amplitude != 0.0) out.residual = rf_field(layout.rf_only(), out.position).norm();
  return out;
}

// ---------------------------------------------------------------------------
// Characterization

TrapCharacterization TrapCharacterization::ideal_linear(double omega_radial, double mathieu_q,
                                                        double drive_frequency,
                                                        double omega_axial) {
  TrapCharacterization t;
  t.frequencies = Vec3(omega_radial, omega_radial, omega_axial);
  t.axes.col(0) = Vec3::UnitY();
  t.axes.col(1) = Vec3::UnitZ();
  t.axes.col(2) = Vec3::UnitX();
  t.rf_axes = t.axes;
  t.rf_q = Vec3(mathieu_q, -mathieu_q, 0.0);
  t.mathieu_q = mathieu_q;
  t.axially_confined = omega_axial > 0.0;
  t.drive_frequency = drive_frequency;
  return t;
}

namespace {

struct Principal {
  Vec3 eigenvalues;  // [radial low, radial high, axial]
  Mat3 axes;
};

// Splits the Hessian's eigenpairs into the axial one (largest x component)
// and the two radial ones.
Principal principal_axes(const Mat3& H) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(H);
  const Vec3 lam = es.eigenvalues();
  const Mat3 vec = es.eigenvectors();
  int axial = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(vec(0, i)) > std::abs(vec(0, axial))) axial = i;
  }
  int r[2], k = 0;
  for (int i = 0; i < 3; ++i) {
    if (i != axial) r[k++] = i;
  }
  if (lam[r[0]] > lam[r[1]]) std::swap(r[0], r[1]);
  Principal p;
  p.eigenvalues = Vec3(lam[r[0]], lam[r[1]], lam[axial]);
  p.axes.col(0) = vec.col(r[0]);
  p.axes.col(1) = vec.col(r[1]);
  p.axes.col(2) = vec.col(axial);
  return p;
}

void check_stability(const Principal& p, double floor) {
  if (!(p.eigenvalues[0] > 0.0)) {
    throw UnstableError("unstable operating point: radial curvature " +
                        std::to_string(p.eigenvalues[0]) + " eV/m^2 is not positive (saddle)");
  }
  if (p.eigenvalues[2] < -floor * p.eigenvalues[1]) {
    throw UnstableError("unstable operating point: axial curvature " +
                        std::to_string(p.eigenvalues[2]) + " eV/m^2 is negative (saddle)");
  }
}

}  // namespace

double escape_depth(const TrapLayout& layout, const IonSpecies& species, const Vec3& minimum,
                    const Vec3& direction, const Vec3& perpendicular, double length_scale,
                    const CharacterizeOptions& options) {
  const double u0 = trap_energy(layout, species, minimum);
  const double ds = options.depth_step_fraction * length_scale;
  const double s_max = options.depth_max_distance * length_scale;
  const double window = 0.25 * length_scale;
  const double t_tol = 1e-7 * length_scale;

  auto energy_at = [&](const Vec3& p) {
    if (!(p.z() > 1e-3 * length_scale)) return std::numeric_limits<double>::infinity();
    return trap_energy(layout, species, p);
  };
  double t_prev = 0.0;
  // Lowest energy across the perpendicular at path coordinate s.
  auto valley = [&](double s, double t_center, double* t_at) {
    const Vec3 base = minimum + s * direction;
    double e = 0.0;
    const double t = golden_minimize([&](double tt) { return energy_at(base + tt * perpendicular); },
                                     t_center - window, t_center + window, t_tol, &e);
    if (t_at) *t_at = t;
    return e;
  };

  double u_max = u0, s_at_max = 0.0, t_at_max = 0.0;
  bool passed = false;
  for (double s = ds; s <= s_max; s += ds) {
    double t = 0.0;
    const double u = valley(s, t_prev, &t);
    t_prev = t;
    if (u > u_max) {
      u_max = u;
      s_at_max = s;
      t_at_max = t;
    } else if (u < u_max - 0.5 * (u_max - u0) && s > s_at_max) {
      passed = true;
      break;
    }
  }
  if (!passed || s_at_max == 0.0) {
    throw ConvergenceError("no escape barrier found within " +
                               std::to_string(options.depth_max_distance) + " trap heights",
                           u_max - u0);
  }
  double barrier = u_max;
  golden_minimize(
      [&](double s) { return -valley(s, t_at_max, nullptr); }, s_at_max - ds, s_at_max + ds,
      1e-6 * length_scale, &barrier);
  return std::max(-barrier, u_max) - u0;
}

TrapCharacterization characterize(const TrapLayout& layout, const IonSpecies& species,
                                  const CharacterizeOptions& options) {
  species.validate();
  const RfNull null = find_rf_null(layout, options.null);
  const double h = null.height();

  TrapCharacterization out;
  out.null_position = null.position;
  out.drive_frequency = layout.drive().angular_frequency;

  // Newton iterations to the secular minimum in the confined directions.
  Vec3 p = null.position;
  Principal pr;
  for (int it = 0; it < 60; ++it) {
    pr = principal_axes(trap_energy_hessian(layout, species, p, 1e-5 * h));
    check_stability(pr, options.axial_floor);
    const Vec3 g = trap_energy_gradient(layout, species, p);
    Vec3 step = Vec3::Zero();
    for (int i = 0; i < 3; ++i) {
      const double lam = pr.eigenvalues[i];
      if (i == 2 && lam <= options.axial_floor * pr.eigenvalues[1]) continue;
      step -= (pr.axes.col(i).dot(g) / lam) * pr.axes.col(i);
    }
    const double limit = 0.25 * p.z();
    if (step.norm() > limit) step *= limit / step.norm();
    p += step;
    if (step.norm() < 1e-13 * h) break;
  }
  pr = principal_axes(trap_energy_hessian(layout, species, p, 1e-5 * h));
  check_stability(pr, options.axial_floor);
  out.equilibrium = p;
  out.axes = pr.axes;
  out.axially_confined = pr.eigenvalues[2] > options.axial_floor * pr.eigenvalues[1];

  const double to_joules = constants::elementary_charge;
  for (int i = 0; i < 3; ++i) {
    const double lam = (i == 2 && !out.axially_confined) ? 0.0 : pr.eigenvalues[i];
    out.frequencies[i] = std::sqrt(lam * to_joules / species.mass);
  }

  // Mathieu q from the RF field gradient at the null.
  const Mat3 J = rf_field_gradient(layout, null.position);
  Eigen::SelfAdjointEigenSolver<Mat3> rf(0.5 * (J + J.transpose()));
  const double omega = layout.drive().angular_frequency;
  const double qscale = 2.0 * species.charge / (species.mass * omega * omega);
  out.rf_axes = rf.eigenvectors();
  out.rf_q = qscale * rf.eigenvalues();
  out.mathieu_q = out.rf_q.cwiseAbs().maxCoeff();

  if (options.compute_depth && layout.drive().amplitude != 0.0) {
    Vec3 weak = out.axes.col(0);
    const Vec3 axial = out.axes.col(2);
    const double split = (out.frequencies[1] - out.frequencies[0]) / out.frequencies[1];
    if (split < 0.01) {
      // Degenerate radial pair: escape along the surface normal projected on the radial plane.
      weak = Vec3::UnitZ() - Vec3::UnitZ().dot(axial) * axial;
      weak.normalize();
    }
    if (weak.z() < 0.0) weak = -weak;
    Vec3 perp = axial.cross(weak);
    perp.normalize();
    out.depth = escape_depth(layout, species, p, weak, perp, h, options);
  }
  return out;
}

}  // namespace iontrap
