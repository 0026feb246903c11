#include "nfw/photostats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <string>

#include "nfw/errors.hpp"
#include "nfw/least_squares.hpp"

namespace nfw {

double blinking_filter(std::span<const double> repeats, std::size_t keep) {
  if (keep == 0) throw ValidationError("blinking_filter: keep must be >= 1");
  if (repeats.size() < keep) {
    throw ValidationError("blinking_filter: " + std::to_string(repeats.size()) + " repeats, need at least " +
                          std::to_string(keep));
  }
  std::vector<double> v(repeats.begin(), repeats.end());
  std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), v.end(), std::greater<>());
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), 0.0) /
         static_cast<double>(keep);
}

double saturation_model(double power_nw, double i_inf, double p_sat_nw) {
  return i_inf * power_nw / (power_nw + p_sat_nw);
}

SaturationFit fit_saturation_curve(std::span<const double> powers, std::span<const double> intensities,
                                   SaturationWeighting weighting) {
  if (powers.size() != intensities.size()) throw ValidationError("fit_saturation: size mismatch");
  const std::set<double> distinct(powers.begin(), powers.end());
  if (distinct.size() < 3) throw ValidationError("fit_saturation: need at least 3 distinct powers (degenerate data)");
  for (double p : powers) {
    if (!(p >= 0.0)) throw ValidationError("fit_saturation: power must be >= 0");
  }

  const auto imax = std::max_element(intensities.begin(), intensities.end());
  const double i0 = *imax;
  if (!(i0 > 0.0)) throw ValidationError("fit_saturation: intensities must include a positive value");
  if (weighting == SaturationWeighting::relative) {
    for (double v : intensities) {
      if (!(v > 0.0)) throw ValidationError("fit_saturation: relative weighting needs positive intensities");
    }
  }
  std::size_t knee = 0;
  for (std::size_t i = 1; i < powers.size(); ++i) {
    if (std::abs(intensities[i] - i0 / 2) < std::abs(intensities[knee] - i0 / 2)) knee = i;
  }
  const double p0 = powers[knee] > 0.0 ? powers[knee] : *distinct.rbegin() / 2.0;

  auto point = [&](const std::array<double, 2>& p, std::size_t i) {
    const double x = powers[i];
    const double d = x + p[1];
    const double f = p[0] * x / d;
    // Relative weighting divides each residual by the measured intensity.
    const double wgt = weighting == SaturationWeighting::relative ? 1.0 / intensities[i] : 1.0;
    return std::pair{wgt * (intensities[i] - f), std::array<double, 2>{wgt * x / d, -wgt * p[0] * x / (d * d)}};
  };
  auto feasible = [](const std::array<double, 2>& p) { return p[0] > 0.0 && p[1] > 0.0; };
  const auto r = levenberg_marquardt<2>(point, powers.size(), {i0, p0}, feasible);
  if (!r.converged) throw NumericalError("fit_saturation: no convergence after " + std::to_string(r.iterations) + " iterations");
  return {r.params[0], r.params[1], r.rms, r.iterations};
}

SaturationFit fit_saturation(std::span<const SaturationPoint> points, const SaturationFitOptions& options) {
  std::vector<double> powers;
  std::vector<double> values;
  for (const SaturationPoint& sp : points) {
    if (sp.repeats.empty()) throw ValidationError("fit_saturation: empty repeats");
    powers.push_back(sp.power_nw);
    values.push_back(options.filter_blinking
                         ? blinking_filter(sp.repeats, options.keep)
                         : std::accumulate(sp.repeats.begin(), sp.repeats.end(), 0.0) /
                               static_cast<double>(sp.repeats.size()));
  }
  return fit_saturation_curve(powers, values, options.weighting);
}

std::vector<SpectrumBin> histogram_spectrum(std::span<const double> samples, double bin_width_nm) {
  if (samples.empty()) throw ValidationError("spectrum: no samples");
  if (!(bin_width_nm > 0.0)) throw ValidationError("spectrum: bin width must be > 0");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double origin = std::floor(*lo_it / bin_width_nm) * bin_width_nm - bin_width_nm;
  const auto n = static_cast<std::size_t>(std::floor((*hi_it - origin) / bin_width_nm)) + 2;
  std::vector<SpectrumBin> bins(n);
  for (std::size_t i = 0; i < n; ++i) bins[i].wavelength_nm = origin + (static_cast<double>(i) + 0.5) * bin_width_nm;
  for (double s : samples) {
    const auto i = static_cast<std::size_t>(std::floor((s - origin) / bin_width_nm));
    bins[std::min(i, n - 1)].counts += 1.0;
  }
  return bins;
}

SpectrumFit fit_spectrum_binned(std::span<const SpectrumBin> bins) {
  if (bins.size() < 3) throw ValidationError("spectrum: need at least 3 bins");
  double total = 0.0;
  for (const auto& b : bins) total += b.counts;
  if (!(total > 0.0)) throw ValidationError("spectrum: no counts");
  const double width = std::abs(bins[1].wavelength_nm - bins[0].wavelength_nm);

  // Start on the dominant line: mode of the 5-bin smoothed histogram and its
  // half-maximum width. The sample mean can sit between two lines.
  const std::size_t nb = bins.size();
  std::vector<double> smooth(nb, 0.0);
  for (std::size_t i = 0; i < nb; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(nb - 1, i + 2);
    for (std::size_t j = lo; j <= hi; ++j) smooth[i] += bins[j].counts;
    smooth[i] /= static_cast<double>(hi - lo + 1);
  }
  const auto mode = static_cast<std::size_t>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
  std::size_t left = mode;
  std::size_t right = mode;
  while (left > 0 && smooth[left] > smooth[mode] / 2.0) --left;
  while (right + 1 < nb && smooth[right] > smooth[mode] / 2.0) ++right;
  const double amp0 = smooth[mode];
  const double center0 = bins[mode].wavelength_nm;
  const double sigma0 = std::max(static_cast<double>(right - left) * width / kFwhmPerSigma, width / 2.0);

  auto point = [&](const std::array<double, 3>& p, std::size_t i) {
    const double x = bins[i].wavelength_nm;
    const double z = (x - p[1]) / p[2];
    const double g = std::exp(-0.5 * z * z);
    const double f = p[0] * g;
    return std::pair{bins[i].counts - f, std::array<double, 3>{g, f * z / p[2], f * z * z / p[2]}};
  };
  auto feasible = [](const std::array<double, 3>& p) { return p[0] > 0.0 && p[2] > 0.0; };
  const auto r = levenberg_marquardt<3>(point, bins.size(), {amp0, center0, sigma0}, feasible);
  if (!r.converged) throw NumericalError("fit_spectrum: no convergence after " + std::to_string(r.iterations) + " iterations");

  SpectrumFit fit;
  fit.amplitude = r.params[0];
  fit.center_nm = r.params[1];
  fit.fwhm_nm = kFwhmPerSigma * r.params[2];
  fit.residual = r.rms;
  fit.bin_width_nm = width;
  fit.iterations = r.iterations;
  fit.unresolved = fit.fwhm_nm < 2.0 * width;

  // Secondary structure: smoothed positive residual against the main peak.
  std::vector<double> resid(bins.size());
  for (std::size_t i = 0; i < bins.size(); ++i) resid[i] = point(r.params, i).first;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    double s = 0.0;
    int n = 0;
    for (std::size_t j = (i >= 2 ? i - 2 : 0); j <= std::min(bins.size() - 1, i + 2); ++j, ++n) s += resid[j];
    if (s / n > 0.2 * fit.amplitude) fit.multimodal = true;
  }
  return fit;
}

SpectrumFit fit_spectrum(std::span<const double> samples, const SpectrumFitOptions& options) {
  if (samples.empty()) throw ValidationError("spectrum: no samples");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  const double width = options.bin_width_nm.value_or(std::max(options.min_bin_width_nm, sd / 20.0));
  if (sd < width) {
    // Delta-like line: the width is below what the binning can resolve.
    SpectrumFit fit;
    fit.center_nm = mean;
    fit.fwhm_nm = width;
    fit.amplitude = n;
    fit.bin_width_nm = width;
    fit.unresolved = true;
    return fit;
  }
  const auto bins = histogram_spectrum(samples, width);
  return fit_spectrum_binned(bins);
}

StokesVector stokes_from_intensities(double i_h, double i_v, double i_d, double i_a, double i_r, double i_l) {
  for (double i : {i_h, i_v, i_d, i_a, i_r, i_l}) {
    if (!(i >= 0.0)) throw ValidationError("stokes: intensities must be >= 0");
  }
  return {i_h + i_v, i_h - i_v, i_d - i_a, i_r - i_l};
}

PolarizationDegree degree_of_polarization(const StokesVector& s) {
  if (!(s.s0 > 0.0)) throw ValidationError("degree_of_polarization: s0 must be > 0");
  PolarizationDegree d;
  d.unclamped = std::sqrt(s.s1 * s.s1 + s.s2 * s.s2 + s.s3 * s.s3) / s.s0;
  d.out_of_range = d.unclamped > 1.0;
  d.value = std::clamp(d.unclamped, 0.0, 1.0);
  return d;
}

}  // namespace nfw
