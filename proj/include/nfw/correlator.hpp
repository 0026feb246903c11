#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "nfw/timetag.hpp"

namespace nfw {

/// Bin j covers tau in [j*w - w/2, j*w + w/2): centered bins, and a pair that
/// lands exactly on a boundary goes to the higher bin.
[[nodiscard]] std::int64_t bin_of(Picoseconds tau, Picoseconds bin_width) noexcept;

struct ExcisedRegion {
  Picoseconds half_width = 0;  ///< bins with |tau_center| < half_width are masked
  std::size_t masked_bins = 0;

  friend bool operator==(const ExcisedRegion&, const ExcisedRegion&) = default;
};

/// Coincidence counts over consecutive bins first_bin .. first_bin+size-1.
/// A symmetric histogram for max_tau has first_bin = -floor(max_tau / w) and
/// 2*floor(max_tau / w) + 1 bins.
struct CorrelationHistogram {
  Picoseconds bin_width = 1;
  std::int64_t first_bin = 0;
  std::vector<std::uint64_t> bins;
  std::vector<std::uint8_t> masked;  ///< empty, or one flag per bin
  std::uint64_t n_start = 0;
  std::uint64_t n_stop = 0;
  Picoseconds duration = 0;
  std::optional<ExcisedRegion> excised;

  [[nodiscard]] std::size_t size() const noexcept { return bins.size(); }
  [[nodiscard]] std::int64_t last_bin() const noexcept {
    return first_bin + static_cast<std::int64_t>(bins.size()) - 1;
  }
  [[nodiscard]] Picoseconds tau(std::size_t i) const noexcept {
    return (first_bin + static_cast<std::int64_t>(i)) * bin_width;
  }
  [[nodiscard]] bool is_masked(std::size_t i) const noexcept { return !masked.empty() && masked[i] != 0; }
  /// Largest |tau| represented by a symmetric histogram.
  [[nodiscard]] Picoseconds max_tau() const noexcept { return last_bin() * bin_width; }

  friend bool operator==(const CorrelationHistogram&, const CorrelationHistogram&) = default;
};

/// Sliding-window sweep; cost O(N + pairs in range). `threads` > 1 shards the
/// start channel and merges bin-wise, which yields the identical histogram.
[[nodiscard]] CorrelationHistogram cross_correlate(std::span<const Picoseconds> ch0,
                                                   std::span<const Picoseconds> ch1,
                                                   Picoseconds bin_width, Picoseconds max_tau,
                                                   unsigned threads = 1);

/// Same sweep restricted to bins [first_bin, last_bin], for long-delay windows.
[[nodiscard]] CorrelationHistogram cross_correlate_range(std::span<const Picoseconds> ch0,
                                                         std::span<const Picoseconds> ch1,
                                                         Picoseconds bin_width, std::int64_t first_bin,
                                                         std::int64_t last_bin, unsigned threads = 1);

/// O(N^2) reference over all pairs. Test oracle only.
[[nodiscard]] CorrelationHistogram brute_force_correlate(std::span<const Picoseconds> ch0,
                                                         std::span<const Picoseconds> ch1,
                                                         Picoseconds bin_width, Picoseconds max_tau);

/// Bin-wise sum of two histograms over the same bins.
[[nodiscard]] CorrelationHistogram merge_histograms(const CorrelationHistogram& a,
                                                    const CorrelationHistogram& b);

/// Masks bins whose center lies within the router dead-time gap. Counts are
/// left untouched; masked bins are skipped by every downstream estimator.
[[nodiscard]] CorrelationHistogram excise_dead_time_region(const CorrelationHistogram& hist,
                                                           double dead_time_ns);

/// Half-width of the run of empty bins around tau = 0, or 0 if the central bin
/// has counts.
[[nodiscard]] Picoseconds detect_dead_time_gap(const CorrelationHistogram& hist);

/// Pulsed coincidence peaks sit at zero_delay + k * period.
struct PeakComb {
  double period_ns = 200.0;
  double zero_delay_ns = 0.0;
};

struct BackgroundEstimate {
  double per_bin = 0.0;
  double variance = 0.0;  ///< of per_bin
  std::size_t bins_used = 0;
};

/// Mean count over the central half of every inter-peak gap (unmasked bins).
[[nodiscard]] BackgroundEstimate estimate_background(const CorrelationHistogram& hist, const PeakComb& comb);

struct PeakArea {
  std::int64_t k = 0;
  Picoseconds center = 0;
  double area = 0.0;  ///< background-subtracted (or normalized) area
  double sigma = 0.0;
  std::uint64_t raw = 0;
  std::size_t n_bins = 0;
  bool masked = false;
};

[[nodiscard]] double default_peak_window_ns(double period_ns, std::optional<double> lifetime_ns);

/// Sums 2*floor(window/(2w))+1 bins around every peak center that lies fully
/// inside the histogram, minus the background. Peaks touching a masked bin
/// are returned with masked = true and excluded from normalization.
[[nodiscard]] std::vector<PeakArea> integrate_peaks(const CorrelationHistogram& hist, const PeakComb& comb,
                                                    double window_ns, const BackgroundEstimate& background);
[[nodiscard]] std::vector<PeakArea> integrate_peaks(const CorrelationHistogram& hist, const PeakComb& comb,
                                                    double window_ns);

/// Range of |k * period| (ns) used for normalization.
struct LongDelayWindow {
  double lo_ns = 9.99e6;
  double hi_ns = 10.01e6;
};

struct Normalization {
  double factor = 0.0;
  double factor_sigma = 0.0;
  std::size_t peaks_used = 0;
  std::vector<PeakArea> peaks;  ///< areas and sigmas divided by factor
  std::optional<double> g2_zero_raw;
};

inline constexpr std::size_t kMinNormalizationPeaks = 10;

/// Divides every area by the mean area of the unmasked peaks whose |k*T| lies
/// in `window`. Applying it to an already normalized set is the identity.
[[nodiscard]] Normalization normalize_long_delay(std::span<const PeakArea> peaks, double period_ns,
                                                 const LongDelayWindow& window);

enum class Verdict { single_photon, not_single_photon };
enum class Quality { high_purity, standard };

struct Classification {
  Verdict verdict;
  Quality quality;
};

inline constexpr double kSinglePhotonThreshold = 0.5;
inline constexpr double kHighPurityThreshold = 0.1;

[[nodiscard]] Classification classify_g2(double g2_zero);

/// Per-bin normalization for continuous-wave data: C * T / (N1 * N2 * w).
/// Masked bins come back as NaN.
[[nodiscard]] std::vector<double> normalize_cw(const CorrelationHistogram& hist);

struct PulsedAnalysisParams {
  Picoseconds bin_width = 512;
  PeakComb comb;
  double dead_time_ns = 0.0;
  std::optional<double> lifetime_ns;
  std::optional<double> peak_window_ns;
  std::optional<double> near_range_ns;  ///< default |zero_delay| + 10 periods
  LongDelayWindow long_delay;
  unsigned threads = 1;
};

struct G2Result {
  CorrelationHistogram near;             ///< around tau = 0, with dead-time mask
  std::vector<double> normalized;        ///< per-bin curve, far-peak height = 1
  BackgroundEstimate background;         ///< near histogram
  BackgroundEstimate background_far;
  double normalization_factor = 0.0;
  double normalization_sigma = 0.0;
  std::vector<PeakArea> peak_areas;      ///< background-subtracted, near and far
  std::vector<PeakArea> normalized_peaks;
  double g2_zero = 0.0;                  ///< clamped at 0
  double g2_zero_raw = 0.0;
  double g2_zero_sigma = 0.0;
  std::optional<ExcisedRegion> excised_region;
  Classification classification{Verdict::not_single_photon, Quality::standard};
  double peak_window_ns = 0.0;
  LongDelayWindow long_delay;
};

/// Full pulsed pipeline: correlate near and long-delay windows, excise the
/// dead-time gap, subtract background, integrate peaks, normalize at long
/// delay, classify. Fails if the zero-delay peak is masked or unavailable.
[[nodiscard]] G2Result analyze_pulsed(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1,
                                      Picoseconds duration, const PulsedAnalysisParams& params);

/// Normalized peak value at index k, if present and unmasked.
[[nodiscard]] std::optional<PeakArea> find_peak(std::span<const PeakArea> peaks, std::int64_t k);

}  // namespace nfw
