#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace caplim::quadrature {

/// Adaptive Gauss-Kronrod on a finite interval.
template <class F>
double integrate(F&& f, double a, double b, double tolerance = 1e-12) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 18, tolerance);
}

/// Integral over (0, 1) of a function that may be singular at 0.
template <class F>
double integrate_unit(F&& f, double tolerance = 1e-10) {
  thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(f, 0.0, 1.0, tolerance);
}

/// Integral over (a, b) of a function that may be singular at either endpoint.
template <class F>
double integrate_endpoint(F&& f, double a, double b, double tolerance = 1e-10) {
  if (!(b > a)) return 0.0;
  thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(f, a, b, tolerance);
}

/// Result of a piecewise adaptive integration.
struct PiecewiseResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

template <class F>
void simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                  double tolerance, int depth, PiecewiseResult& out) {
  const double mid = 0.5 * (a + b);
  const double lm = f(0.5 * (a + mid));
  const double rm = f(0.5 * (mid + b));
  out.evaluations += 2;
  const double left = (mid - a) / 6.0 * (fa + 4.0 * lm + fm);
  const double right = (b - mid) / 6.0 * (fm + 4.0 * rm + fb);
  const double refined = left + right;
  const double diff = refined - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tolerance || (b - a) <= 1e-12 * std::max(1.0, std::abs(a))) {
    out.value += refined + diff / 15.0;
    out.error += std::abs(diff) / 15.0;
    return;
  }
  simpson_step(f, a, mid, fa, lm, fm, left, 0.5 * tolerance, depth - 1, out);
  simpson_step(f, mid, b, fm, rm, fb, right, 0.5 * tolerance, depth - 1, out);
}

}  // namespace detail

/// Adaptive Simpson rule over [breaks[0], breaks.back()], subdividing at every
/// supplied breakpoint. Inside each piece the integrand is sampled strictly in the
/// open interval, so a piecewise-constant integrand with jumps at the breakpoints
/// integrates exactly. `tolerance` is split evenly across the pieces.
template <class F>
PiecewiseResult adaptive_simpson(const F& f, std::span<const double> breaks, double tolerance,
                                 int max_depth = 40) {
  PiecewiseResult out;
  if (breaks.size() < 2) return out;
  const double share = tolerance / static_cast<double>(breaks.size() - 1);
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i];
    const double b = breaks[i + 1];
    if (!(b > a)) continue;
    const double fa = f(std::nextafter(a, b));
    const double fm = f(0.5 * (a + b));
    const double fb = f(std::nextafter(b, a));
    out.evaluations += 3;
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    detail::simpson_step(f, a, b, fa, fm, fb, whole, share, max_depth, out);
  }
  return out;
}

}  // namespace caplim::quadrature
