#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace dtnlqr::detail {

/// One classical Runge-Kutta step of y' = f(t, y).
template <class F, class Y>
Y rk4_step(F&& f, double t, const Y& y, double h) {
  const Y k1 = f(t, y);
  const Y k2 = f(t + 0.5 * h, Y(y + (0.5 * h) * k1));
  const Y k3 = f(t + 0.5 * h, Y(y + (0.5 * h) * k2));
  const Y k4 = f(t + h, Y(y + h * k3));
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// sinh(y) - y without cancellation near 0.
inline double sinh_minus_id(double y) {
  if (std::abs(y) < 0.5) {
    double term = y * y * y / 6.0;
    double sum = term;
    for (int n = 5; n < 40; n += 2) {
      term *= y * y / ((n - 1.0) * n);
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::sinh(y) - y;
}

/// cosh(y) - 1.
inline double cosh_minus_one(double y) {
  const double s = std::sinh(0.5 * y);
  return 2.0 * s * s;
}

/// f(y) = sinh y - y - (cosh y - 1)(e^y - 1) = -sum_{n>=2} (2^n - 2) y^{n+1}/(n+1)!
inline double conjugate_f(double y) {
  if (std::abs(y) < 1.0) {
    double sum = 0.0;
    double pow2 = 4.0;                // 2^n
    double term = y * y * y / 6.0;    // y^{n+1}/(n+1)! at n = 2
    for (int n = 2; n < 60; ++n) {
      const double add = (pow2 - 2.0) * term;
      sum += add;
      if (n > 4 && std::abs(add) < 1e-18 * std::abs(sum)) break;
      pow2 *= 2.0;
      term *= y / (n + 2.0);
    }
    return -sum;
  }
  return sinh_minus_id(y) - cosh_minus_one(y) * std::expm1(y);
}

/// (1 - e^{-y}) / y, continuous at 0.
inline double phi1(double y) {
  if (std::abs(y) < 1e-8) return 1.0 - 0.5 * y;
  return -std::expm1(-y) / y;
}

/// (e^{-y} - 1 + y) / y^2, continuous at 0.
inline double phi2(double y) {
  if (std::abs(y) < 1e-3) {
    // 1/2 - y/6 + y^2/24 - y^3/120 + y^4/720
    return 0.5 + y * (-1.0 / 6.0 + y * (1.0 / 24.0 + y * (-1.0 / 120.0 + y / 720.0)));
  }
  return (std::expm1(-y) + y) / (y * y);
}

/// Index of the grid interval containing t on a uniform grid starting at t0.
inline std::size_t interval_index(double t0, double h, std::size_t n_points, double t) {
  if (n_points < 2) return 0;
  double pos = (t - t0) / h;
  if (pos <= 0.0) return 0;
  auto j = static_cast<std::size_t>(pos);
  if (j >= n_points - 1) j = n_points - 2;
  return j;
}

}  // namespace dtnlqr::detail
