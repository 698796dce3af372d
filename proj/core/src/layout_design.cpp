#include "iontrap/layout_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "iontrap/error.hpp"

namespace iontrap {

void FiveWireGeometry::validate() const {
  if (!(center_width > 0.0) || !(rf_width > 0.0) || !(array_period > 0.0) ||
      !(inner_lane_width > 0.0) || !(chip_width > 0.0) || !(chip_length > 0.0)) {
    throw DomainError("five-wire geometry lengths must be positive");
  }
  if (array_sites < 1 || dc_per_side < 1) throw DomainError("site and DC counts must be >= 1");
  if (!(inner_duty > 0.0 && inner_duty < 1.0)) throw DomainError("inner duty must be in (0, 1)");
  if (inner_lane_width >= center_width) {
    throw DomainError("inner lane must be narrower than the center electrode");
  }
  if (0.5 * center_width + rf_width >= 0.5 * chip_width) {
    throw DomainError("RF rails do not fit on the chip");
  }
  if (array_sites * array_period >= chip_length) {
    throw DomainError("periodic array longer than the chip");
  }
}

TrapLayout build_five_wire(const FiveWireGeometry& g, const RfDrive& drive) {
  g.validate();
  const double a = 0.5 * g.center_width;
  const double r = a + g.rf_width;
  const double w = 0.5 * g.chip_width;
  const double half_len = 0.5 * g.chip_length;
  const double lane = 0.5 * g.inner_lane_width;
  const double x_start = -0.5 * g.array_sites * g.array_period;
  const double x_end = -x_start;

  std::vector<Electrode> es;
  es.push_back({"rf_upper", ElectrodeRole::rf, 0.0, {{-half_len, half_len, a, r}}});
  es.push_back({"rf_lower", ElectrodeRole::rf, 0.0, {{-half_len, half_len, -r, -a}}});
  es.push_back({"center_ground",
                ElectrodeRole::dc,
                0.0,
                {{-half_len, x_start, -a, a}, {x_end, half_len, -a, a}}});

  Electrode inner{"periodic_inner", ElectrodeRole::periodic_inner, 0.0, {}};
  Electrode outer_up{"periodic_outer_upper", ElectrodeRole::periodic_outer, 0.0, {}};
  Electrode outer_lo{"periodic_outer_lower", ElectrodeRole::periodic_outer, 0.0, {}};
  for (int k = 0; k < g.array_sites; ++k) {
    const double xa = x_start + k * g.array_period;
    const double xm = xa + g.inner_duty * g.array_period;
    const double xb = (k + 1 == g.array_sites) ? x_end : xa + g.array_period;
    inner.patches.push_back({xa, xm, -a, a});
    inner.patches.push_back({xm, xb, -lane, lane});
    outer_up.patches.push_back({xm, xb, lane, a});
    outer_lo.patches.push_back({xm, xb, -a, -lane});
  }
  es.push_back(std::move(inner));
  es.push_back(std::move(outer_up));
  es.push_back(std::move(outer_lo));

  const double seg = g.chip_length / g.dc_per_side;
  for (int side = 0; side < 2; ++side) {
    for (int k = 0; k < g.dc_per_side; ++k) {
      const double x1 = -half_len + k * seg;
      const double x2 = (k + 1 == g.dc_per_side) ? half_len : x1 + seg;
      const RectPatch patch = side == 0 ? RectPatch{x1, x2, r, w} : RectPatch{x1, x2, -w, -r};
      es.push_back({fmt::format("dc{:02d}", side * g.dc_per_side + k + 1), ElectrodeRole::dc, 0.0,
                    {patch}});
    }
  }
  TrapLayout layout(std::move(es), drive);
  layout.array_period = g.array_period;
  return layout;
}

double central_well_position(const FiveWireGeometry& g) {
  const double x_start = -0.5 * g.array_sites * g.array_period;
  const int k = g.array_sites / 2;
  return x_start + (k + 0.5 * g.inner_duty) * g.array_period;
}

double periodic_vertical_field(const TrapLayout& layout, const FiveWireGeometry& geometry,
                               double height, double inner, double outer) {
  const TrapLayout l = layout.without_dc()
                           .with_role_voltage(ElectrodeRole::periodic_inner, inner)
                           .with_role_voltage(ElectrodeRole::periodic_outer, outer);
  const Vec3 c = layout.rf_center();
  return total_dc(l, {central_well_position(geometry), c.y(), height}).field.z();
}

namespace {

struct Evaluation {
  Eigen::Vector4d residual = Eigen::Vector4d::Constant(1e3);
  TrapCharacterization achieved;
  bool ok = false;
};

TrapLayout rf_rails(double center, double rf, double length, const RfDrive& drive) {
  const double a = 0.5 * center, r = a + rf, h = 0.5 * length;
  return TrapLayout({{"rf_upper", ElectrodeRole::rf, 0.0, {{-h, h, a, r}}},
                     {"rf_lower", ElectrodeRole::rf, 0.0, {{-h, h, -r, -a}}}},
                    drive);
}

Evaluation evaluate_design(const Eigen::Vector2d& log_widths, const DesignTargets& t,
                           const RfDrive& drive, const IonSpecies& species, double chip_length) {
  Evaluation ev;
  try {
    const TrapLayout l =
        rf_rails(std::exp(log_widths[0]), std::exp(log_widths[1]), chip_length, drive);
    CharacterizeOptions opt;
    opt.compute_depth = t.depth.has_value();
    ev.achieved = characterize(l, species, opt);
    ev.residual[0] = ev.achieved.height() / t.height - 1.0;
    ev.residual[1] = ev.achieved.mathieu_q / t.mathieu_q - 1.0;
    ev.residual[2] = t.omega_radial > 0.0 ? ev.achieved.omega_radial_low() / t.omega_radial - 1.0
                                          : 0.0;
    ev.residual[3] = t.depth ? t.depth_weight * (ev.achieved.depth / *t.depth - 1.0) : 0.0;
    ev.ok = ev.residual.allFinite();
    if (!ev.ok) ev.residual.setConstant(1e3);
  } catch (const Error&) {
    ev.ok = false;
  }
  return ev;
}

}  // namespace

DesignResult design_solve(const DesignTargets& targets, const RfDrive& drive,
                          const IonSpecies& species, const DesignOptions& options) {
  if (!(targets.height > 0.0) || !(targets.mathieu_q > 0.0)) {
    throw DomainError("design targets must be positive");
  }
  FiveWireGeometry geometry;
  const double lo = std::log(options.min_length), hi = std::log(options.max_length);
  auto clamp = [&](Eigen::Vector2d v) {
    return Eigen::Vector2d(std::clamp(v[0], lo, hi), std::clamp(v[1], lo, hi));
  };

  Eigen::Vector2d best_x(0.0, 0.0);
  Evaluation best;
  double best_cost = std::numeric_limits<double>::infinity();

  constexpr double kCenterSeeds[] = {0.5, 1.0, 1.5};
  constexpr double kRfSeeds[] = {0.7, 1.5, 3.0};
  for (double cs : kCenterSeeds) {
    for (double rs : kRfSeeds) {
      Eigen::Vector2d x = clamp({std::log(cs * targets.height), std::log(rs * targets.height)});
      Evaluation cur = evaluate_design(x, targets, drive, species, geometry.chip_length);
      double cost = cur.residual.squaredNorm();
      double lambda = 1e-2;
      for (int it = 0; it < options.max_iterations && cur.ok; ++it) {
        Eigen::Matrix<double, 4, 2> J;
        constexpr double h = 1e-5;
        for (int j = 0; j < 2; ++j) {
          Eigen::Vector2d xp = x;
          xp[j] += h;
          const Evaluation e = evaluate_design(xp, targets, drive, species, geometry.chip_length);
          if (!e.ok) {
            J.col(j).setZero();
            continue;
          }
          J.col(j) = (e.residual - cur.residual) / h;
        }
        const Eigen::Matrix2d A = J.transpose() * J;
        const Eigen::Vector2d g = J.transpose() * cur.residual;
        bool improved = false;
        for (int tries = 0; tries < 12 && !improved; ++tries) {
          Eigen::Matrix2d D = A;
          D.diagonal() *= (1.0 + lambda);
          const Eigen::Vector2d step = -D.ldlt().solve(g);
          const Eigen::Vector2d xn = clamp(x + step);
          const Evaluation e = evaluate_design(xn, targets, drive, species, geometry.chip_length);
          const double c = e.residual.squaredNorm();
          if (e.ok && c < cost) {
            x = xn;
            cur = e;
            improved = true;
            lambda = std::max(lambda * 0.3, 1e-9);
            if (cost - c < 1e-14 * std::max(cost, 1e-30)) {
              cost = c;
              it = options.max_iterations;
              break;
            }
            cost = c;
          } else {
            lambda *= 10.0;
          }
        }
        if (!improved || cost < 1e-20) break;
      }
      if (cur.ok && cost < best_cost) {
        best_cost = cost;
        best = cur;
        best_x = x;
      }
    }
  }

  const double worst = best.ok ? std::max({std::abs(best.residual[0]), std::abs(best.residual[1]),
                                           std::abs(best.residual[2])})
                               : std::numeric_limits<double>::infinity();
  if (!(worst < options.tolerance)) {
    throw ConvergenceError(
        fmt::format("design search failed: best candidate center {:.4g} m, rf {:.4g} m, "
                    "relative residuals height {:.3g}, q {:.3g}, omega {:.3g}",
                    std::exp(best_x[0]), std::exp(best_x[1]), best.residual[0], best.residual[1],
                    best.residual[2]),
        worst);
  }

  geometry.center_width = std::exp(best_x[0]);
  geometry.rf_width = std::exp(best_x[1]);
  const double height = best.achieved.height();

  // Periodic duty: bisection on the out-of-plane field at the central well.
  constexpr double inner = -1.0;
  const double outer = targets.periodic_ratio * inner;
  auto vertical = [&](double duty) {
    FiveWireGeometry g = geometry;
    g.inner_duty = duty;
    const TrapLayout l = build_five_wire(g, drive);
    return periodic_vertical_field(l, g, height, inner, outer);
  };
  double f_lo = 0.05, f_hi = 0.95;
  double v_lo = vertical(f_lo), v_hi = vertical(f_hi);
  if (v_lo * v_hi > 0.0) {
    throw ConvergenceError("periodic duty search failed: field does not change sign", std::min(
        std::abs(v_lo), std::abs(v_hi)));
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (f_lo + f_hi);
    const double v = vertical(mid);
    if (v * v_lo > 0.0) {
      f_lo = mid;
      v_lo = v;
    } else {
      f_hi = mid;
    }
  }
  geometry.inner_duty = 0.5 * (f_lo + f_hi);

  DesignResult out;
  out.geometry = geometry;
  out.layout = build_five_wire(geometry, drive);
  out.layout.label = "fitted";
  out.layout.provenance = fmt::format(
      "design_solve: height {:.6g} m, q {:.6g}, omega {:.6g} rad/s at {:.6g} V, {:.6g} rad/s",
      targets.height, targets.mathieu_q, targets.omega_radial, drive.amplitude,
      drive.angular_frequency);
  CharacterizeOptions opt;
  out.achieved = characterize(out.layout, species, opt);
  out.residuals = {best.residual[0], best.residual[1], best.residual[2],
                   targets.depth ? out.achieved.depth / *targets.depth - 1.0 : 0.0};
  const double comp = periodic_vertical_field(out.layout, geometry, height, inner, outer);
  const double bare = periodic_vertical_field(out.layout, geometry, height, inner, 0.0);
  out.vertical_field_ratio = std::abs(comp) / std::abs(bare);
  return out;
}

}  // namespace iontrap
