#include "nfw/fiber_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nfw/errors.hpp"

namespace nfw::fiber {
namespace {

constexpr double kPi = std::numbers::pi;

double bessel_j(int n, double x) { return std::cyl_bessel_j(static_cast<double>(n), x); }

// e^x K_n(x). The library K underflows near x ~ 700, so large arguments use
// the Hankel asymptotic series.
double scaled_k(int n, double x) {
  if (x < 300.0) return std::cyl_bessel_k(static_cast<double>(n), x) * std::exp(x);
  const double mu = 4.0 * n * n;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 40; ++k) {
    term *= (mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (k * 8.0 * x);
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return std::sqrt(kPi / (2.0 * x)) * sum;
}

// K0(w) / K1(w)
double k_ratio(double w) { return scaled_k(0, w) / scaled_k(1, w); }

struct ModeParams {
  double k, a, u, w, beta;
  double j0, j1, j2, j3;
  double rho0;  // K0(w)/K1(w)
  double s, s1, s2;
};

ModeParams mode_params(const FiberSpec& spec, double u) {
  ModeParams p{};
  p.k = 2.0 * kPi / spec.wavelength_nm;
  p.a = spec.radius_nm;
  const double v = v_number(spec);
  p.u = u;
  p.w = std::sqrt(std::max(v * v - u * u, 0.0));
  p.beta = std::sqrt(p.k * p.k * spec.n1 * spec.n1 - (u / p.a) * (u / p.a));
  p.j0 = bessel_j(0, u);
  p.j1 = bessel_j(1, u);
  p.j2 = bessel_j(2, u);
  p.j3 = bessel_j(3, u);
  p.rho0 = k_ratio(p.w);
  const double jp = (p.j0 - p.j1 / u) / (u * p.j1);
  const double kp = -p.rho0 / p.w - 1.0 / (p.w * p.w);
  p.s = (1.0 / (u * u) + 1.0 / (p.w * p.w)) / (jp + kp);
  const double bk2 = p.beta * p.beta / (p.k * p.k);
  p.s1 = bk2 * p.s / (spec.n1 * spec.n1);
  p.s2 = bk2 * p.s / (spec.n2 * spec.n2);
  return p;
}

std::vector<double> j1_zeros_below(double limit) {
  std::vector<double> zeros;
  for (int m = 1;; ++m) {
    const double b = (m + 0.25) * kPi;
    double x = b - 3.0 / (8.0 * b);
    for (int it = 0; it < 50; ++it) {
      const double j1 = bessel_j(1, x);
      const double dj = bessel_j(0, x) - j1 / x;
      const double dx = j1 / dj;
      x -= dx;
      if (std::abs(dx) < 1e-15 * x) break;
    }
    if (x >= limit) break;
    zeros.push_back(x);
  }
  return zeros;
}

double polish_root(const FiberSpec& spec, double lo, double hi) {
  double flo = he_characteristic(spec, lo);
  for (int it = 0; it < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = he_characteristic(spec, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  // Secant polish on the final bracket; keep whichever end point is best.
  double x0 = lo, x1 = hi;
  double f0 = he_characteristic(spec, x0), f1 = he_characteristic(spec, x1);
  double best = std::abs(f0) < std::abs(f1) ? x0 : x1;
  double fbest = std::min(std::abs(f0), std::abs(f1));
  for (int it = 0; it < 8 && f1 != f0; ++it) {
    const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
    if (!(x2 > lo - (hi - lo)) || !(x2 < hi + (hi - lo))) break;
    const double f2 = he_characteristic(spec, x2);
    if (std::abs(f2) < fbest) {
      best = x2;
      fbest = std::abs(f2);
    }
    x0 = x1;
    f0 = f1;
    x1 = x2;
    f1 = f2;
  }
  return best;
}

std::vector<double> he1m_u_roots(const FiberSpec& spec, std::size_t max_modes) {
  spec.validate();
  const double v = v_number(spec);
  const double k = 2.0 * kPi / spec.wavelength_nm;
  const double a = spec.radius_nm;
  constexpr double eps = 1e-9;
  const auto u_of = [&](double n_eff) {
    return a * std::sqrt(std::max(k * k * (spec.n1 * spec.n1 - n_eff * n_eff), 0.0));
  };
  const double u_min = u_of(spec.n1 - eps);
  const double u_max = u_of(spec.n2 + eps);
  if (!(u_min > 0.0) || !(u_max > u_min)) {
    throw NumericalError("HE11 bracket is empty: u in [" + std::to_string(u_min) + ", " +
                         std::to_string(u_max) + "], V = " + std::to_string(v));
  }

  std::vector<double> edges{u_min};
  for (double z : j1_zeros_below(u_max)) {
    if (z > u_min) edges.push_back(z);
  }
  edges.push_back(u_max);

  std::vector<double> roots;
  constexpr int kGrid = 400;
  for (std::size_t seg = 0; seg + 1 < edges.size() && roots.size() < max_modes; ++seg) {
    const double lo = edges[seg];
    const double hi = edges[seg + 1];
    const double pad = (seg == 0 ? 0.0 : 1e-12 * hi);
    const double tail = (seg + 2 == edges.size() ? 0.0 : 1e-12 * hi);
    double prev_x = lo + pad;
    double prev_f = he_characteristic(spec, prev_x);
    for (int i = 1; i <= kGrid && roots.size() < max_modes; ++i) {
      const double t = 0.5 * (1.0 - std::cos(kPi * i / kGrid));
      const double x = i == kGrid ? hi - tail : lo + pad + t * (hi - tail - lo - pad);
      const double f = he_characteristic(spec, x);
      if (std::isfinite(prev_f) && std::isfinite(f) && (prev_f < 0.0) != (f < 0.0)) {
        roots.push_back(polish_root(spec, prev_x, x));
        break;  // one HE1m root per segment between poles
      }
      prev_x = x;
      prev_f = f;
    }
  }
  return roots;
}

}  // namespace

void FiberSpec::validate() const {
  if (!(radius_nm > 0.0) || !std::isfinite(radius_nm)) throw ValidationError("radius_nm must be > 0");
  if (!(wavelength_nm > 0.0) || !std::isfinite(wavelength_nm)) throw ValidationError("wavelength_nm must be > 0");
  if (!(n2 >= 1.0)) throw ValidationError("n2 must be >= 1");
  if (!(n1 > n2) || !std::isfinite(n1)) throw ValidationError("n1 must exceed n2");
}

double v_number(const FiberSpec& spec) {
  return 2.0 * kPi / spec.wavelength_nm * spec.radius_nm * std::sqrt(spec.n1 * spec.n1 - spec.n2 * spec.n2);
}

SingleModeCheck single_mode_check(const FiberSpec& spec) {
  const double v = v_number(spec);
  return {v < kSingleModeCutoff, v, kSingleModeCutoff - v};
}

double cutoff_radius_nm(double wavelength_nm, double n1, double n2) {
  if (!(n1 > n2)) throw ValidationError("cutoff radius needs n1 > n2");
  return kSingleModeCutoff * wavelength_nm / (2.0 * kPi * std::sqrt(n1 * n1 - n2 * n2));
}

SubwavelengthCheck subwavelength_check(const FiberSpec& spec) {
  const double diameter = 2.0 * spec.radius_nm;
  return {diameter <= spec.wavelength_nm / 2.0, spec.wavelength_nm / diameter};
}

double sellmeier_silica(double wavelength_nm) {
  if (!(wavelength_nm >= 210.0 && wavelength_nm <= 3700.0)) {
    throw ValidationError("wavelength " + std::to_string(wavelength_nm) + " nm outside Sellmeier range 210-3700 nm");
  }
  constexpr double b[3] = {0.6961663, 0.4079426, 0.8974794};
  constexpr double c[3] = {0.0684043, 0.1162414, 9.896161};
  const double l2 = (wavelength_nm * 1e-3) * (wavelength_nm * 1e-3);
  double n2 = 1.0;
  for (int i = 0; i < 3; ++i) n2 += b[i] * l2 / (l2 - c[i] * c[i]);
  return std::sqrt(n2);
}

double he_characteristic(const FiberSpec& spec, double u) {
  const double k = 2.0 * kPi / spec.wavelength_nm;
  const double v = v_number(spec);
  const double w = std::sqrt(v * v - u * u);
  const double a = spec.radius_nm;
  const double n1s = spec.n1 * spec.n1;
  const double n2s = spec.n2 * spec.n2;
  const double beta = std::sqrt(k * k * n1s - (u / a) * (u / a));
  const double kw = -k_ratio(w) / w - 1.0 / (w * w);  // K1'(w) / (w K1(w))
  const double c = (n1s - n2s) / (2.0 * n1s);
  const double bn = beta / (spec.n1 * k);
  const double inv = 1.0 / (w * w) + 1.0 / (u * u);
  const double r = std::sqrt(c * c * kw * kw + bn * bn * inv * inv);
  return bessel_j(0, u) / (u * bessel_j(1, u)) + (n1s + n2s) / (2.0 * n1s) * kw - 1.0 / (u * u) + r;
}

std::vector<double> he1m_effective_indices(const FiberSpec& spec, std::size_t max_modes) {
  const double k = 2.0 * kPi / spec.wavelength_nm;
  std::vector<double> out;
  for (double u : he1m_u_roots(spec, max_modes)) {
    const double ua = u / spec.radius_nm;
    out.push_back(std::sqrt(k * k * spec.n1 * spec.n1 - ua * ua) / k);
  }
  return out;
}

ModeSolution solve_he11(const FiberSpec& spec) {
  const auto roots = he1m_u_roots(spec, 1);
  if (roots.empty()) {
    throw NumericalError("no HE11 sign change found for V = " + std::to_string(v_number(spec)) + " (radius " +
                         std::to_string(spec.radius_nm) + " nm)");
  }
  const ModeParams p = mode_params(spec, roots.front());

  ModeSolution m;
  m.spec = spec;
  m.u = p.u;
  m.w = p.w;
  m.n_eff = p.beta / p.k;
  m.beta_per_m = p.beta * 1e9;
  m.residual = std::abs(he_characteristic(spec, p.u));

  // Radial Poynting integrals in closed form; common factors cancel.
  const double n1s = spec.n1 * spec.n1;
  const double n2s = spec.n2 * spec.n2;
  const double rho2 = p.rho0 + 2.0 / p.w;
  const double rho3 = 1.0 + 4.0 / p.w * rho2;
  const double p_in = n1s / (p.u * p.u) *
                      ((1 - p.s) * (1 - p.s1) * (p.j0 * p.j0 + p.j1 * p.j1) +
                       (1 + p.s) * (1 + p.s1) * (p.j2 * p.j2 - p.j1 * p.j3));
  const double p_out = n2s / (p.w * p.w) * p.j1 * p.j1 *
                       ((1 - p.s) * (1 - p.s2) * (1.0 - p.rho0 * p.rho0) + (1 + p.s) * (1 + p.s2) * (rho3 - rho2 * rho2));
  m.evanescent_fraction = p_out / (p_in + p_out);

  const double surface = he11_intensity(m, spec.radius_nm).total();
  double peak = surface;
  constexpr int kScan = 256;
  for (int i = 0; i < kScan; ++i) {
    const double r = spec.radius_nm * i / kScan;
    peak = std::max(peak, he11_intensity(m, r).total());
  }
  m.surface_intensity_ratio = surface / peak;
  return m;
}

FieldIntensity he11_intensity(const ModeSolution& mode, double r_nm) {
  const ModeParams p = mode_params(mode.spec, mode.u);
  const double a0 = 1.0 - p.s;
  const double a2 = 1.0 + p.s;
  FieldIntensity f;
  if (r_nm < p.a) {
    const double h = p.u / p.a;
    const double x = h * r_nm;
    const double j0 = bessel_j(0, x), j1 = bessel_j(1, x), j2 = bessel_j(2, x);
    const double c = p.beta * p.beta / (4.0 * h * h);
    f.e_r2 = c * (a0 * j0 - a2 * j2) * (a0 * j0 - a2 * j2);
    f.e_phi2 = c * (a0 * j0 + a2 * j2) * (a0 * j0 + a2 * j2);
    f.e_z2 = j1 * j1;
    return f;
  }
  const double q = p.w / p.a;
  const double x = q * r_nm;
  // gamma K_n(q r) with gamma = J1(u) / K1(w)
  const double scale = p.j1 * std::exp(p.w - x) / scaled_k(1, p.w);
  const double k0 = scale * scaled_k(0, x), k1 = scale * scaled_k(1, x), k2 = scale * scaled_k(2, x);
  const double c = p.beta * p.beta / (4.0 * q * q);
  f.e_r2 = c * (a0 * k0 + a2 * k2) * (a0 * k0 + a2 * k2);
  f.e_phi2 = c * (a0 * k0 - a2 * k2) * (a0 * k0 - a2 * k2);
  f.e_z2 = k1 * k1;
  return f;
}

double evanescent_decay_length_nm(const ModeSolution& mode) { return mode.spec.radius_nm / mode.w; }

double coupling_efficiency_estimate(const ModeSolution& mode, double emitter_offset_nm) {
  if (!(emitter_offset_nm >= 0.0)) throw ValidationError("emitter offset must be >= 0");
  if (std::isinf(emitter_offset_nm)) return 0.0;
  const ModeParams p = mode_params(mode.spec, mode.u);
  const double a0 = 1.0 - p.s;
  const double a2 = 1.0 + p.s;
  const double h2 = (p.u / p.a) * (p.u / p.a);
  const double q2 = (p.w / p.a) * (p.w / p.a);
  const double b2 = p.beta * p.beta;
  const double half_a2 = 0.5 * p.a * p.a;

  // int |E|^2 dA over the glass and the outside, closed form.
  const double i_j0 = half_a2 * (p.j0 * p.j0 + p.j1 * p.j1);
  const double i_j1 = half_a2 * (p.j1 * p.j1 - p.j0 * p.j2);
  const double i_j2 = half_a2 * (p.j2 * p.j2 - p.j1 * p.j3);
  const double rho2 = p.rho0 + 2.0 / p.w;
  const double rho3 = 1.0 + 4.0 / p.w * rho2;
  const double g2 = p.j1 * p.j1 * half_a2;
  const double i_k0 = g2 * (1.0 - p.rho0 * p.rho0);
  const double i_k1 = g2 * (p.rho0 * rho2 - 1.0);
  const double i_k2 = g2 * (rho3 - rho2 * rho2);
  const double inside = b2 / (2.0 * h2) * (a0 * a0 * i_j0 + a2 * a2 * i_j2) + i_j1;
  const double outside = b2 / (2.0 * q2) * (a0 * a0 * i_k0 + a2 * a2 * i_k2) + i_k1;
  const double total = 2.0 * kPi * (inside + outside);

  const double surface = he11_intensity(mode, p.a).total();
  const double area = total / surface;
  const double lambda = mode.spec.wavelength_nm;
  const double beta0 = lambda * lambda / (4.0 * kPi * area);
  const double decay = std::exp(-2.0 * emitter_offset_nm / evanescent_decay_length_nm(mode));
  return std::clamp(beta0 * decay, 0.0, 1.0);
}

}  // namespace nfw::fiber
