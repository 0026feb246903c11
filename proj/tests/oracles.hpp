#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's own helpers (Boost Bessel functions and quadrature instead of the
// closed-form integrals, long-double binning instead of integer floor
// division).

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// ------------------------------------------------------------ correlation

/// All ordered pairs (start in a, stop in b) with |tau| <= max_tau, keyed by
/// the bin whose half-open interval [j w - w/2, j w + w/2) contains tau.
inline std::map<std::int64_t, std::uint64_t> pair_histogram(const std::vector<std::int64_t>& a,
                                                            const std::vector<std::int64_t>& b, std::int64_t w,
                                                            std::int64_t max_tau) {
  std::map<std::int64_t, std::uint64_t> h;
  const std::int64_t jmax = max_tau / w;
  for (std::int64_t s : a) {
    for (std::int64_t t : b) {
      const long double tau = static_cast<long double>(t) - static_cast<long double>(s);
      const auto j = static_cast<std::int64_t>(std::floor(tau / w + 0.5L));
      if (j >= -jmax && j <= jmax) ++h[j];
    }
  }
  return h;
}

/// Sorted, strictly increasing random times in [0, span).
inline std::vector<std::int64_t> random_times(std::mt19937_64& rng, std::size_t n, std::int64_t span) {
  std::uniform_int_distribution<std::int64_t> d(0, span - 1);
  std::vector<std::int64_t> v(n);
  for (auto& x : v) x = d(rng);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// ------------------------------------------------------------ fused silica

struct IndexPoint {
  double wavelength_nm;
  double n;
};

/// Published refractive index of fused silica at 20 C (tabulated values).
inline const std::vector<IndexPoint>& silica_table() {
  static const std::vector<IndexPoint> t = {
      {404.7, 1.4696}, {486.1, 1.4632}, {587.6, 1.4585}, {600.0, 1.4580},
      {656.3, 1.4564}, {1014.0, 1.4502}, {1310.0, 1.4468}, {1550.0, 1.4440},
  };
  return t;
}

// ------------------------------------------------------------ HE11 fields

/// Full vector fields of the HE11 mode (unit axial amplitude, circular
/// polarization, omega*eps0 = 1) rebuilt from an effective index.
struct He11Fields {
  double k, a, n1, n2, beta, h, q, u, w, s, s1, s2, gamma;

  He11Fields(double radius_nm, double n1_, double n2_, double wavelength_nm, double n_eff)
      : k(2.0 * std::numbers::pi / wavelength_nm), a(radius_nm), n1(n1_), n2(n2_) {
    using boost::math::cyl_bessel_j;
    using boost::math::cyl_bessel_k;
    beta = n_eff * k;
    h = std::sqrt(k * k * n1 * n1 - beta * beta);
    q = std::sqrt(beta * beta - k * k * n2 * n2);
    u = h * a;
    w = q * a;
    const double j0 = cyl_bessel_j(0, u), j1 = cyl_bessel_j(1, u), j2 = cyl_bessel_j(2, u);
    const double k0 = cyl_bessel_k(0, w), k1 = cyl_bessel_k(1, w), k2 = cyl_bessel_k(2, w);
    const double j1p = 0.5 * (j0 - j2);
    const double k1p = -0.5 * (k0 + k2);
    s = (1.0 / (u * u) + 1.0 / (w * w)) / (j1p / (u * j1) + k1p / (w * k1));
    s1 = beta * beta * s / (k * k * n1 * n1);
    s2 = beta * beta * s / (k * k * n2 * n2);
    gamma = j1 / k1;
  }

  // Radial and azimuthal components; E_r and H_phi carry a factor i that
  // cancels in S_z, so only magnitudes with their signs are returned.
  struct Components {
    double er, ephi, ez, hr, hphi;
  };

  Components at(double r) const {
    using boost::math::cyl_bessel_j;
    using boost::math::cyl_bessel_k;
    Components c{};
    if (r < a) {
      const double x = h * r;
      const double j0 = cyl_bessel_j(0, x), j1 = cyl_bessel_j(1, x), j2 = cyl_bessel_j(2, x);
      c.er = beta / (2 * h) * ((1 - s) * j0 - (1 + s) * j2);
      c.ephi = -beta / (2 * h) * ((1 - s) * j0 + (1 + s) * j2);
      c.ez = j1;
      c.hr = n1 * n1 / (2 * h) * ((1 - s1) * j0 + (1 + s1) * j2);
      c.hphi = n1 * n1 / (2 * h) * ((1 - s1) * j0 - (1 + s1) * j2);
    } else {
      const double x = q * r;
      const double k0 = cyl_bessel_k(0, x), k1 = cyl_bessel_k(1, x), k2 = cyl_bessel_k(2, x);
      c.er = beta / (2 * q) * gamma * ((1 - s) * k0 + (1 + s) * k2);
      c.ephi = -beta / (2 * q) * gamma * ((1 - s) * k0 - (1 + s) * k2);
      c.ez = gamma * k1;
      c.hr = n2 * n2 / (2 * q) * gamma * ((1 - s2) * k0 - (1 + s2) * k2);
      c.hphi = n2 * n2 / (2 * q) * gamma * ((1 - s2) * k0 + (1 + s2) * k2);
    }
    return c;
  }

  /// Axial Poynting flux, up to a constant: Re(E_r H_phi* - E_phi H_r*).
  double sz(double r) const {
    const auto c = at(r);
    return c.er * c.hphi - c.ephi * c.hr;
  }

  double intensity(double r) const {
    const auto c = at(r);
    return c.er * c.er + c.ephi * c.ephi + c.ez * c.ez;
  }

  /// Largest relative mismatch of the tangential E, tangential H and normal
  /// D components across the glass surface.
  double boundary_mismatch() const {
    const auto in = at(a * (1 - 1e-12));
    const auto out = at(a);
    const auto rel = [](double x, double y) { return std::abs(x - y) / std::max(std::abs(x), std::abs(y)); };
    return std::max({rel(in.ephi, out.ephi), rel(in.hphi, out.hphi), rel(n1 * n1 * in.er, n2 * n2 * out.er),
                     rel(in.ez, out.ez)});
  }

  /// Fraction of the axial power outside the glass by adaptive quadrature.
  double evanescent_fraction() const {
    const auto f = [this](double r) { return sz(r) * r; };
    const double inside = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, a, 12, 1e-14);
    boost::math::quadrature::exp_sinh<double> tail;
    const double outside = tail.integrate(f, a, std::numeric_limits<double>::infinity());
    return outside / (inside + outside);
  }
};

/// Scalar LP01 limit of the evanescent fraction (weakly guiding fiber).
inline double lp01_evanescent_fraction(double v) {
  using boost::math::cyl_bessel_j;
  using boost::math::cyl_bessel_k;
  const auto f = [v](double u) {
    const double w = std::sqrt(v * v - u * u);
    return u * cyl_bessel_j(1, u) / cyl_bessel_j(0, u) - w * cyl_bessel_k(1, w) / cyl_bessel_k(0, w);
  };
  double lo = 1e-9, hi = std::min(v, 2.404825557695773) * (1 - 1e-12);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((f(lo) < 0) == (f(mid) < 0) ? lo : hi) = mid;
  }
  const double u = 0.5 * (lo + hi);
  const double w = std::sqrt(v * v - u * u);
  const double ratio = cyl_bessel_k(0, w) / cyl_bessel_k(1, w);
  return u * u / (v * v) * (1.0 - ratio * ratio);
}

// ------------------------------------------------------------ taper

/// Elongation at which a constant hot zone of length l0 thins r0 down to
/// target: integrates dr/dx = -r / (2 l0) with classical RK4.
inline double elongation_by_integration(double r0, double target, double l0, double dx = 1e-4) {
  const auto f = [l0](double r) { return -r / (2.0 * l0); };
  double x = 0.0;
  double r = r0;
  while (true) {
    const double k1 = f(r), k2 = f(r + 0.5 * dx * k1), k3 = f(r + 0.5 * dx * k2), k4 = f(r + dx * k3);
    const double next = r + dx / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (next <= target) {
      // Log-linear interpolation inside the last step.
      return x + dx * std::log(r / target) / std::log(r / next);
    }
    r = next;
    x += dx;
  }
}

}  // namespace oracle
