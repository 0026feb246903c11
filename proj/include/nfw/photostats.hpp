#pragma once

#include <optional>
#include <span>
#include <vector>

namespace nfw {

/// Mean of the `keep` largest repeats. Selects the measurements taken while
/// the emitter was on.
[[nodiscard]] double blinking_filter(std::span<const double> repeats, std::size_t keep = 3);

struct SaturationPoint {
  double power_nw = 0.0;
  std::vector<double> repeats;  ///< counts/s, nominally 10 per power
};

enum class SaturationWeighting { absolute, relative };

struct SaturationFit {
  double i_inf = 0.0;     ///< counts/s
  double p_sat_nw = 0.0;
  double residual = 0.0;  ///< rms of (data - model), divided by data when weighted relative
  int iterations = 0;
};

[[nodiscard]] double saturation_model(double power_nw, double i_inf, double p_sat_nw);

struct SaturationFitOptions {
  std::size_t keep = 3;
  bool filter_blinking = true;  ///< false: fit the plain mean of all repeats
  SaturationWeighting weighting = SaturationWeighting::relative;
};

/// Least-squares fit of I(P) = I_inf * P / (P + P_sat) to the
/// blinking-filtered intensities. Start: I_inf = max intensity, P_sat = the
/// power whose intensity is nearest half of that.
[[nodiscard]] SaturationFit fit_saturation(std::span<const SaturationPoint> points,
                                           const SaturationFitOptions& options = {});

[[nodiscard]] SaturationFit fit_saturation_curve(std::span<const double> powers_nw,
                                                 std::span<const double> intensities,
                                                 SaturationWeighting weighting = SaturationWeighting::relative);

struct SpectrumBin {
  double wavelength_nm = 0.0;
  double counts = 0.0;
};

struct SpectrumFit {
  double center_nm = 0.0;
  double fwhm_nm = 0.0;
  double amplitude = 0.0;
  double residual = 0.0;
  double bin_width_nm = 0.0;
  bool multimodal = false;  ///< secondary structure above 20% of the main peak
  bool unresolved = false;  ///< line narrower than the binning
  int iterations = 0;
};

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

struct SpectrumFitOptions {
  std::optional<double> bin_width_nm;  ///< default: sample sigma / 20
  double min_bin_width_nm = 0.1;
};

[[nodiscard]] std::vector<SpectrumBin> histogram_spectrum(std::span<const double> samples, double bin_width_nm);

[[nodiscard]] SpectrumFit fit_spectrum(std::span<const double> wavelength_samples,
                                       const SpectrumFitOptions& options = {});

/// Gaussian fit of an already binned spectrum (uniform spacing assumed).
[[nodiscard]] SpectrumFit fit_spectrum_binned(std::span<const SpectrumBin> bins);

struct StokesVector {
  double s0 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  friend bool operator==(const StokesVector&, const StokesVector&) = default;
};

[[nodiscard]] StokesVector stokes_from_intensities(double i_h, double i_v, double i_d, double i_a, double i_r,
                                                   double i_l);

struct PolarizationDegree {
  double value = 0.0;       ///< clamped to [0, 1]
  double unclamped = 0.0;
  bool out_of_range = false;
};

[[nodiscard]] PolarizationDegree degree_of_polarization(const StokesVector& s);

inline constexpr double kUnpolarizedThreshold = 0.1;

[[nodiscard]] inline bool is_unpolarized(double dop, double threshold = kUnpolarizedThreshold) {
  return dop < threshold;
}

}  // namespace nfw
