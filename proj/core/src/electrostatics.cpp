#include "iontrap/electrostatics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dual.hpp"
#include "iontrap/constants.hpp"
#include "iontrap/error.hpp"

namespace iontrap {

using detail::Dual3;

// ---------------------------------------------------------------------------
// Roles and layout

std::string_view to_string(ElectrodeRole role) {
  switch (role) {
    case ElectrodeRole::rf: return "rf";
    case ElectrodeRole::dc: return "dc";
    case ElectrodeRole::periodic_inner: return "periodic_inner";
    case ElectrodeRole::periodic_outer: return "periodic_outer";
  }
  return "dc";
}

ElectrodeRole electrode_role_from_string(std::string_view name) {
  if (name == "rf") return ElectrodeRole::rf;
  if (name == "dc") return ElectrodeRole::dc;
  if (name == "periodic_inner") return ElectrodeRole::periodic_inner;
  if (name == "periodic_outer") return ElectrodeRole::periodic_outer;
  throw ConfigError("unknown electrode role '" + std::string(name) + "'");
}

namespace {

constexpr double kOverlapSlack = 1e-12;  // m

bool interiors_overlap(const RectPatch& a, const RectPatch& b) {
  return a.x1 < b.x2 - kOverlapSlack && b.x1 < a.x2 - kOverlapSlack &&
         a.y1 < b.y2 - kOverlapSlack && b.y1 < a.y2 - kOverlapSlack;
}

void validate_layout(const std::vector<Electrode>& electrodes, const RfDrive& drive) {
  if (!(drive.angular_frequency > 0.0)) {
    throw ConfigError("RF drive frequency must be positive");
  }
  if (!std::isfinite(drive.amplitude)) throw ConfigError("RF amplitude must be finite");

  struct Tagged {
    const RectPatch* patch;
    const Electrode* owner;
  };
  std::vector<Tagged> all;
  bool any_rf = false;
  for (const auto& e : electrodes) {
    if (e.patches.empty()) throw ConfigError("electrode '" + e.name + "' has no patches");
    if (e.role == ElectrodeRole::rf) any_rf = true;
    for (const auto& p : e.patches) {
      if (!p.valid()) {
        throw ConfigError("electrode '" + e.name + "' has a patch with x1 >= x2 or y1 >= y2");
      }
      all.push_back({&p, &e});
    }
  }
  if (!any_rf) throw ConfigError("layout has no RF electrode");

  std::sort(all.begin(), all.end(),
            [](const Tagged& a, const Tagged& b) { return a.patch->x1 < b.patch->x1; });
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[j].patch->x1 >= all[i].patch->x2 - kOverlapSlack) break;
      if (interiors_overlap(*all[i].patch, *all[j].patch)) {
        throw ConfigError("patches of electrodes '" + all[i].owner->name + "' and '" +
                          all[j].owner->name + "' overlap");
      }
    }
  }
}

}  // namespace

TrapLayout::TrapLayout(std::vector<Electrode> electrodes, RfDrive drive)
    : electrodes_(std::move(electrodes)), drive_(drive) {
  validate_layout(electrodes_, drive_);
}

const Electrode& TrapLayout::electrode(std::string_view name) const {
  for (const auto& e : electrodes_) {
    if (e.name == name) return e;
  }
  throw ConfigError("layout has no electrode named '" + std::string(name) + "'");
}

bool TrapLayout::has_role(ElectrodeRole role) const {
  return std::any_of(electrodes_.begin(), electrodes_.end(),
                     [role](const Electrode& e) { return e.role == role; });
}

TrapLayout TrapLayout::with_drive(RfDrive drive) const {
  if (!(drive.angular_frequency > 0.0)) throw ConfigError("RF drive frequency must be positive");
  TrapLayout t = *this;
  t.drive_ = drive;
  return t;
}

TrapLayout TrapLayout::with_dc_voltage(std::string_view name, double volts) const {
  TrapLayout t = *this;
  for (auto& e : t.electrodes_) {
    if (e.name == name) {
      e.dc_voltage = volts;
      return t;
    }
  }
  throw ConfigError("layout has no electrode named '" + std::string(name) + "'");
}

TrapLayout TrapLayout::with_role_voltage(ElectrodeRole role, double volts) const {
  TrapLayout t = *this;
  for (auto& e : t.electrodes_) {
    if (e.role == role) e.dc_voltage = volts;
  }
  return t;
}

TrapLayout TrapLayout::without_dc() const {
  TrapLayout t = *this;
  for (auto& e : t.electrodes_) e.dc_voltage = 0.0;
  return t;
}

TrapLayout TrapLayout::translated(double dx, double dy) const {
  TrapLayout t = *this;
  for (auto& e : t.electrodes_) {
    for (auto& p : e.patches) {
      p.x1 += dx;
      p.x2 += dx;
      p.y1 += dy;
      p.y2 += dy;
    }
  }
  return t;
}

TrapLayout TrapLayout::scaled(double s) const {
  if (!(s > 0.0)) throw DomainError("layout scale factor must be positive");
  TrapLayout t = *this;
  for (auto& e : t.electrodes_) {
    for (auto& p : e.patches) {
      p.x1 *= s;
      p.x2 *= s;
      p.y1 *= s;
      p.y2 *= s;
    }
  }
  t.array_period *= s;
  return t;
}

TrapLayout TrapLayout::rf_only() const {
  TrapLayout t = *this;
  std::erase_if(t.electrodes_, [](const Electrode& e) { return e.role != ElectrodeRole::rf; });
  return t;
}

Vec3 TrapLayout::rf_center() const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& e : electrodes_) {
    if (e.role != ElectrodeRole::rf) continue;
    for (const auto& p : e.patches) {
      xmin = std::min(xmin, p.x1);
      xmax = std::max(xmax, p.x2);
      ymin = std::min(ymin, p.y1);
      ymax = std::max(ymax, p.y2);
    }
  }
  return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax), 0.0};
}

double TrapLayout::rf_half_width() const {
  const double yc = rf_center().y();
  double w = 0.0;
  for (const auto& e : electrodes_) {
    if (e.role != ElectrodeRole::rf) continue;
    for (const auto& p : e.patches) {
      w = std::max({w, std::abs(p.y1 - yc), std::abs(p.y2 - yc)});
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Patch kernels

namespace {

// Gradient of the unit-voltage patch potential
//   G = 1/(2 pi) sum_corners s * atan(X Y / (z R)),  X = xc - x, Y = yc - y.
template <class T>
std::array<T, 3> unit_gradient(const RectPatch& r, const T& x, const T& y, const T& z) {
  using std::sqrt;
  const double xs[2] = {r.x1, r.x2};
  const double ys[2] = {r.y1, r.y2};
  T gx = 0.0, gy = 0.0, gz = 0.0;
  const T z2 = z * z;
  for (int a = 0; a < 2; ++a) {
    const T X = T(xs[a]) - x;
    const T X2 = X * X;
    for (int b = 0; b < 2; ++b) {
      const double s = (a == b) ? 1.0 : -1.0;
      const T Y = T(ys[b]) - y;
      const T Y2 = Y * Y;
      const T R = sqrt(X2 + Y2 + z2);
      const T xz = X2 + z2;
      const T yz = Y2 + z2;
      gx = gx - T(s) * (Y * z) / (R * xz);
      gy = gy - T(s) * (X * z) / (R * yz);
      gz = gz - T(s) * (X * Y * (X2 + Y2 + T(2.0) * z2)) / (R * xz * yz);
    }
  }
  const T norm = 1.0 / constants::two_pi;
  return {gx * norm, gy * norm, gz * norm};
}

double unit_potential(const RectPatch& r, const Vec3& p) {
  const double xs[2] = {r.x1, r.x2};
  const double ys[2] = {r.y1, r.y2};
  const double z = p.z();
  double sum = 0.0;
  for (int a = 0; a < 2; ++a) {
    const double X = xs[a] - p.x();
    for (int b = 0; b < 2; ++b) {
      const double s = (a == b) ? 1.0 : -1.0;
      const double Y = ys[b] - p.y();
      const double R = std::sqrt(X * X + Y * Y + z * z);
      sum += s * std::atan(X * Y / (z * R));
    }
  }
  return sum / constants::two_pi;
}

void require_above_plane(const Vec3& p) {
  if (!(p.z() > 0.0)) {
    throw DomainError("field point must lie strictly above the electrode plane (z > 0)");
  }
}

Vec3 unit_field(const RectPatch& r, const Vec3& p) {
  const auto g = unit_gradient<double>(r, p.x(), p.y(), p.z());
  return {-g[0], -g[1], -g[2]};
}

// J(i, j) = dE_i/dx_j of the unit-voltage field.
Mat3 unit_field_gradient(const RectPatch& r, const Vec3& p) {
  const Dual3 x = Dual3::variable(p.x(), 0);
  const Dual3 y = Dual3::variable(p.y(), 1);
  const Dual3 z = Dual3::variable(p.z(), 2);
  const auto g = unit_gradient<Dual3>(r, x, y, z);
  Mat3 J;
  for (int i = 0; i < 3; ++i) J.row(i) = -g[i].d.transpose();
  return J;
}

template <class Fn>
void for_each_patch(const TrapLayout& layout, bool rf, Fn&& fn) {
  for (const auto& e : layout.electrodes()) {
    if (rf && e.role != ElectrodeRole::rf) continue;
    const double v = rf ? 1.0 : e.dc_voltage;
    if (v == 0.0) continue;
    for (const auto& p : e.patches) fn(p, v);
  }
}

double pseudopotential_coefficient(const TrapLayout& layout, const IonSpecies& species) {
  const double omega = layout.drive().angular_frequency;
  const double z = species.charge_number();
  // (Z e)^2 |E|^2 / (4 m Omega^2) in joules, divided by e for eV.
  return z * z * constants::elementary_charge / (4.0 * species.mass * omega * omega);
}

}  // namespace

double patch_potential(const RectPatch& patch, double voltage, const Vec3& p) {
  require_above_plane(p);
  return voltage * unit_potential(patch, p);
}

Vec3 patch_field(const RectPatch& patch, double voltage, const Vec3& p) {
  require_above_plane(p);
  return voltage * unit_field(patch, p);
}

DcSample total_dc(const TrapLayout& layout, const Vec3& p) {
  require_above_plane(p);
  DcSample s;
  for_each_patch(layout, false, [&](const RectPatch& r, double v) {
    s.potential += v * unit_potential(r, p);
    s.field += v * unit_field(r, p);
  });
  return s;
}

Mat3 dc_field_gradient(const TrapLayout& layout, const Vec3& p) {
  require_above_plane(p);
  Mat3 J = Mat3::Zero();
  for_each_patch(layout, false,
                 [&](const RectPatch& r, double v) { J += v * unit_field_gradient(r, p); });
  return J;
}

Vec3 rf_field(const TrapLayout& layout, const Vec3& p) {
  require_above_plane(p);
  Vec3 e = Vec3::Zero();
  for_each_patch(layout, true, [&](const RectPatch& r, double) { e += unit_field(r, p); });
  return layout.drive().amplitude * e;
}

Mat3 rf_field_gradient(const TrapLayout& layout, const Vec3& p) {
  require_above_plane(p);
  Mat3 J = Mat3::Zero();
  for_each_patch(layout, true,
                 [&](const RectPatch& r, double) { J += unit_field_gradient(r, p); });
  return layout.drive().amplitude * J;
}

double pseudopotential(const TrapLayout& layout, const IonSpecies& species, const Vec3& p) {
  return pseudopotential_coefficient(layout, species) * rf_field(layout, p).squaredNorm();
}

FieldPoint evaluate(const TrapLayout& layout, const IonSpecies& species, const Vec3& p) {
  FieldPoint f;
  f.position = p;
  const DcSample dc = total_dc(layout, p);
  f.dc_potential = dc.potential;
  f.dc_field = dc.field;
  f.rf_field = rf_field(layout, p);
  f.pseudopotential = pseudopotential_coefficient(layout, species) * f.rf_field.squaredNorm();
  return f;
}

double trap_energy(const TrapLayout& layout, const IonSpecies& species, const Vec3& p) {
  return pseudopotential(layout, species, p) +
         species.charge_number() * total_dc(layout, p).potential;
}

Vec3 trap_energy_gradient(const TrapLayout& layout, const IonSpecies& species, const Vec3& p) {
  const Vec3 e = rf_field(layout, p);
  const Mat3 J = rf_field_gradient(layout, p);
  // grad |E|^2 = 2 J^T E; grad(Z phi) = -Z E_dc.
  return 2.0 * pseudopotential_coefficient(layout, species) * (J.transpose() * e) -
         species.charge_number() * total_dc(layout, p).field;
}

Mat3 trap_energy_hessian(const TrapLayout& layout, const IonSpecies& species, const Vec3& p,
                         double step) {
  Mat3 H;
  for (int j = 0; j < 3; ++j) {
    Vec3 dp = Vec3::Zero();
    dp[j] = step;
    H.col(j) = (trap_energy_gradient(layout, species, p + dp) -
                trap_energy_gradient(layout, species, p - dp)) /
               (2.0 * step);
  }
  return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Periodic potential

namespace {

struct LinearFit {
  Eigen::VectorXd coef;
  double rss = 0.0;
};

LinearFit fit_fixed_period(const std::vector<double>& x, const std::vector<double>& v,
                           double period, double center, double half_range) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd A(n, 7);
  Eigen::VectorXd b(n);
  const double k = constants::two_pi / period;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (x[i] - center) / half_range;
    A(i, 0) = 1.0;
    A(i, 1) = t;
    A(i, 2) = t * t;
    A(i, 3) = t * t * t;
    A(i, 4) = t * t * t * t;
    A(i, 5) = std::cos(k * (x[i] - center));
    A(i, 6) = std::sin(k * (x[i] - center));
    b[i] = v[i];
  }
  LinearFit f;
  f.coef = A.colPivHouseholderQr().solve(b);
  f.rss = (A * f.coef - b).squaredNorm();
  return f;
}

}  // namespace

AxialPotentialModel fit_axial_model(const std::vector<double>& x, const std::vector<double>& v,
                                    double period_guess, double center) {
  if (x.size() != v.size() || x.size() < 8) {
    throw DomainError("axial model fit needs at least 8 matching samples");
  }
  if (!(period_guess > 0.0)) throw DomainError("period guess must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double half_range = std::max(std::abs(*lo_it - center), std::abs(*hi_it - center));

  auto rss = [&](double d) { return fit_fixed_period(x, v, d, center, half_range).rss; };

  // Coarse scan, then golden-section refinement of the bracketing cell.
  constexpr int kScan = 121;
  const double d_lo = 0.7 * period_guess, d_hi = 1.3 * period_guess;
  const double h = (d_hi - d_lo) / (kScan - 1);
  int best = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kScan; ++i) {
    const double r = rss(d_lo + i * h);
    if (r < best_rss) {
      best_rss = r;
      best = i;
    }
  }
  double a = d_lo + std::max(best - 1, 0) * h;
  double b = d_lo + std::min(best + 1, kScan - 1) * h;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = rss(c), fd = rss(d);
  for (int it = 0; it < 80 && (b - a) > 1e-9 * period_guess; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = rss(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = rss(d);
    }
  }
  const double period = 0.5 * (a + b);
  const LinearFit fit = fit_fixed_period(x, v, period, center, half_range);

  AxialPotentialModel m;
  m.center = center;
  for (int kpow = 0; kpow < 5; ++kpow) m.poly[kpow] = fit.coef[kpow] / std::pow(half_range, kpow);
  const double ac = fit.coef[5], as = fit.coef[6];
  m.amplitude = std::hypot(ac, as);
  const double scale = std::max(std::abs(*std::max_element(v.begin(), v.end())),
                                std::abs(*std::min_element(v.begin(), v.end())));
  if (m.amplitude <= 1e-12 * scale || m.amplitude == 0.0) {
    m.amplitude = 0.0;
    m.period = period_guess;
    m.phase = 0.0;
  } else {
    m.period = period;
    // A cos(k t + phase) = ac cos(k t) + as sin(k t)
    m.phase = std::atan2(-as, ac);
  }
  return m;
}

PeriodicPotential periodic_axial_potential(const TrapLayout& layout, double inner_volts,
                                           double outer_volts, double height,
                                           const PeriodicFitOptions& options) {
  if (!layout.has_role(ElectrodeRole::periodic_inner) ||
      !layout.has_role(ElectrodeRole::periodic_outer)) {
    throw ConfigError("layout has no periodic electrodes");
  }
  if (!(layout.array_period > 0.0)) throw ConfigError("layout array period is not set");
  if (!(height > 0.0)) throw DomainError("evaluation height must be positive");
  if (options.periods_each_side < 1 || options.samples_per_period < 4) {
    throw DomainError("periodic sampling needs >= 1 period each side and >= 4 samples/period");
  }

  const TrapLayout periodic = layout.without_dc()
                                  .with_role_voltage(ElectrodeRole::periodic_inner, inner_volts)
                                  .with_role_voltage(ElectrodeRole::periodic_outer, outer_volts);
  const Vec3 c = layout.rf_center();
  const double y = options.transverse_position.value_or(c.y());
  const double d = layout.array_period;
  const int n = 2 * options.periods_each_side * options.samples_per_period + 1;
  const double x0 = c.x() - options.periods_each_side * d;
  const double dx = d / options.samples_per_period;

  PeriodicPotential out;
  out.x.reserve(n);
  out.potential.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = x0 + i * dx;
    out.x.push_back(x);
    out.potential.push_back(total_dc(periodic, {x, y, height}).potential);
  }
  out.model = fit_axial_model(out.x, out.potential, d, c.x());

  double ss = 0.0;
  out.fitted.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.fitted.push_back(out.model.value(out.x[i]));
    const double r = out.fitted.back() - out.potential[i];
    ss += r * r;
  }
  out.residual_rms = std::sqrt(ss / n);
  if (out.model.amplitude > 0.0 &&
      out.residual_rms > options.residual_warning * out.model.amplitude) {
    out.warnings.push_back("periodic fit residual exceeds " +
                           std::to_string(options.residual_warning) + " of the amplitude");
  }
  return out;
}

}  // namespace iontrap
