#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <utility>

namespace nfw {

struct LmOptions {
  int max_iterations = 200;
  double relative_step_tolerance = 1e-8;
};

template <std::size_t N>
struct LmResult {
  std::array<double, N> params{};
  int iterations = 0;
  bool converged = false;
  double rms = 0.0;
};

namespace detail {

/// Solves A x = b for small dense systems (partial pivoting). Returns false if
/// the matrix is numerically singular.
template <std::size_t N>
bool solve_small(std::array<std::array<double, N>, N> a, std::array<double, N> b, std::array<double, N>& x) {
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < N; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (!(std::abs(a[piv][col]) > 0.0)) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < N; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = N; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < N; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return true;
}

}  // namespace detail

/// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling).
///
/// `point(p, i)` returns {residual y_i - f_i(p), gradient df_i/dp}. Steps that
/// leave the region accepted by `feasible(p)` are treated as failed trials.
/// Converges when every parameter moves by less than the relative tolerance.
template <std::size_t N, typename Point, typename Feasible>
LmResult<N> levenberg_marquardt(Point&& point, std::size_t m, std::array<double, N> p0, Feasible&& feasible,
                                const LmOptions& opt = {}) {
  using Vec = std::array<double, N>;
  using Mat = std::array<Vec, N>;
  auto cost_of = [&](const Vec& p) {
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = point(p, i).first;
      c += r * r;
    }
    return c;
  };

  LmResult<N> out;
  out.params = p0;
  double cost = cost_of(p0);
  double lambda = -1.0;
  for (out.iterations = 0; out.iterations < opt.max_iterations; ++out.iterations) {
    Mat jtj{};
    Vec jtr{};
    for (std::size_t i = 0; i < m; ++i) {
      const auto [r, g] = point(out.params, i);
      for (std::size_t a = 0; a < N; ++a) {
        jtr[a] += g[a] * r;
        for (std::size_t b = 0; b < N; ++b) jtj[a][b] += g[a] * g[b];
      }
    }
    if (lambda < 0.0) {
      double diag_max = 0.0;
      for (std::size_t a = 0; a < N; ++a) diag_max = std::max(diag_max, jtj[a][a]);
      lambda = 1e-3;
      if (!(diag_max > 0.0)) return out;
    }
    bool stepped = false;
    while (lambda < 1e16) {
      Mat damped = jtj;
      for (std::size_t a = 0; a < N; ++a) damped[a][a] += lambda * std::max(jtj[a][a], 1e-300);
      Vec delta{};
      if (!detail::solve_small(damped, jtr, delta)) {
        lambda *= 10.0;
        continue;
      }
      Vec trial = out.params;
      for (std::size_t a = 0; a < N; ++a) trial[a] += delta[a];
      const double trial_cost = feasible(trial) ? cost_of(trial) : INFINITY;
      if (trial_cost <= cost) {
        bool small = true;
        for (std::size_t a = 0; a < N; ++a) {
          small = small && std::abs(delta[a]) <= opt.relative_step_tolerance * std::max(std::abs(trial[a]), 1e-300);
        }
        out.params = trial;
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (small) {
          out.converged = true;
          out.rms = std::sqrt(cost / static_cast<double>(m));
          ++out.iterations;
          return out;
        }
        break;
      }
      lambda *= 4.0;
    }
    if (!stepped) {
      // No descent direction left at any damping: the current point is a
      // minimum to machine precision.
      out.converged = true;
      break;
    }
  }
  out.rms = std::sqrt(cost / static_cast<double>(m));
  return out;
}

template <std::size_t N, typename Point>
LmResult<N> levenberg_marquardt(Point&& point, std::size_t m, std::array<double, N> p0, const LmOptions& opt = {}) {
  return levenberg_marquardt<N>(std::forward<Point>(point), m, p0, [](const std::array<double, N>&) { return true; },
                                opt);
}

}  // namespace nfw
