#pragma once

#include <cmath>

#include <Eigen/Core>

// Forward-mode dual number carrying a 3-component gradient. Only the
// operations needed by the patch field formulas are provided.
namespace iontrap::detail {

struct Dual3 {
  double v = 0.0;
  Eigen::Vector3d d = Eigen::Vector3d::Zero();

  Dual3() = default;
  Dual3(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  Dual3(double value, const Eigen::Vector3d& grad) : v(value), d(grad) {}

  static Dual3 variable(double value, int axis) {
    Dual3 r(value);
    r.d[axis] = 1.0;
    return r;
  }
};

inline Dual3 operator+(const Dual3& a, const Dual3& b) { return {a.v + b.v, a.d + b.d}; }
inline Dual3 operator-(const Dual3& a, const Dual3& b) { return {a.v - b.v, a.d - b.d}; }
inline Dual3 operator-(const Dual3& a) { return {-a.v, -a.d}; }
inline Dual3 operator*(const Dual3& a, const Dual3& b) { return {a.v * b.v, a.d * b.v + b.d * a.v}; }
inline Dual3 operator/(const Dual3& a, const Dual3& b) {
  return {a.v / b.v, (a.d * b.v - b.d * a.v) / (b.v * b.v)};
}
inline Dual3 sqrt(const Dual3& a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual3& x) { return x.v; }

}  // namespace iontrap::detail
