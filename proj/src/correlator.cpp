#include "nfw/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "nfw/errors.hpp"

namespace nfw {

namespace {

constexpr double kPsPerNs = 1e3;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

Picoseconds ns_to_ps(double ns) { return static_cast<Picoseconds>(std::llround(ns * kPsPerNs)); }

void require_sorted(std::span<const Picoseconds> times, const char* name) {
  const auto it = std::is_sorted_until(times.begin(), times.end());
  if (it != times.end()) {
    throw ValidationError(std::string(name) + ": unsorted input at index " +
                              std::to_string(it - times.begin()),
                          it - times.begin());
  }
}

/// Smallest tau whose bin index is >= j.
Picoseconds first_tau_of_bin(std::int64_t j, Picoseconds w) { return ceil_div(2 * j * w - w, 2); }

void sweep(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1, Picoseconds w,
           std::int64_t first_bin, std::int64_t last_bin, std::vector<std::uint64_t>& bins) {
  const Picoseconds lo_tau = first_tau_of_bin(first_bin, w);
  const Picoseconds hi_tau = first_tau_of_bin(last_bin + 1, w);
  if (ch0.empty() || ch1.empty()) return;
  auto start = std::lower_bound(ch1.begin(), ch1.end(), ch0.front() + lo_tau);
  for (const Picoseconds a : ch0) {
    const Picoseconds lo = a + lo_tau;
    const Picoseconds hi = a + hi_tau;
    while (start != ch1.end() && *start < lo) ++start;
    for (auto b = start; b != ch1.end() && *b < hi; ++b) {
      ++bins[static_cast<std::size_t>(bin_of(*b - a, w) - first_bin)];
    }
  }
}

CorrelationHistogram empty_histogram(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1,
                                     Picoseconds w, std::int64_t first_bin, std::int64_t last_bin) {
  if (w <= 0) throw ValidationError("bin_width: must be > 0");
  if (last_bin < first_bin) throw ValidationError("histogram range is empty");
  CorrelationHistogram h;
  h.bin_width = w;
  h.first_bin = first_bin;
  h.bins.assign(static_cast<std::size_t>(last_bin - first_bin + 1), 0);
  h.n_start = ch0.size();
  h.n_stop = ch1.size();
  const Picoseconds end0 = ch0.empty() ? 0 : ch0.back();
  const Picoseconds end1 = ch1.empty() ? 0 : ch1.back();
  h.duration = std::max(end0, end1);
  return h;
}

std::int64_t symmetric_half_bins(Picoseconds w, Picoseconds max_tau) {
  if (w <= 0) throw ValidationError("bin_width: must be > 0");
  if (max_tau < w) throw ValidationError("max_tau: must be >= bin_width");
  return max_tau / w;
}

}  // namespace

std::int64_t bin_of(Picoseconds tau, Picoseconds bin_width) noexcept {
  return floor_div(2 * tau + bin_width, 2 * bin_width);
}

CorrelationHistogram cross_correlate_range(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1,
                                           Picoseconds bin_width, std::int64_t first_bin, std::int64_t last_bin,
                                           unsigned threads) {
  require_sorted(ch0, "ch0");
  require_sorted(ch1, "ch1");
  CorrelationHistogram h = empty_histogram(ch0, ch1, bin_width, first_bin, last_bin);
  const std::size_t shards = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, ch0.size() / 4096));
  if (shards <= 1) {
    sweep(ch0, ch1, bin_width, first_bin, last_bin, h.bins);
    return h;
  }
  std::vector<std::vector<std::uint64_t>> partial(shards, std::vector<std::uint64_t>(h.bins.size(), 0));
  {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (ch0.size() + shards - 1) / shards;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t begin = std::min(ch0.size(), s * chunk);
      const std::size_t len = std::min(chunk, ch0.size() - begin);
      workers.emplace_back([&, s, begin, len] {
        sweep(ch0.subspan(begin, len), ch1, bin_width, first_bin, last_bin, partial[s]);
      });
    }
  }
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < p.size(); ++i) h.bins[i] += p[i];
  }
  return h;
}

CorrelationHistogram cross_correlate(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1,
                                     Picoseconds bin_width, Picoseconds max_tau, unsigned threads) {
  const std::int64_t m = symmetric_half_bins(bin_width, max_tau);
  return cross_correlate_range(ch0, ch1, bin_width, -m, m, threads);
}

CorrelationHistogram brute_force_correlate(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1,
                                           Picoseconds bin_width, Picoseconds max_tau) {
  const std::int64_t m = symmetric_half_bins(bin_width, max_tau);
  CorrelationHistogram h = empty_histogram(ch0, ch1, bin_width, -m, m);
  for (const Picoseconds a : ch0) {
    for (const Picoseconds b : ch1) {
      const std::int64_t j = bin_of(b - a, bin_width);
      if (j >= -m && j <= m) ++h.bins[static_cast<std::size_t>(j + m)];
    }
  }
  return h;
}

CorrelationHistogram merge_histograms(const CorrelationHistogram& a, const CorrelationHistogram& b) {
  if (a.bin_width != b.bin_width || a.first_bin != b.first_bin || a.size() != b.size()) {
    throw ValidationError("merge_histograms: incompatible bin layouts");
  }
  CorrelationHistogram out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.bins[i] += b.bins[i];
  out.n_start += b.n_start;
  out.n_stop += b.n_stop;
  out.duration = std::max(a.duration, b.duration);
  return out;
}

CorrelationHistogram excise_dead_time_region(const CorrelationHistogram& hist, double dead_time_ns) {
  if (!(dead_time_ns >= 0.0)) throw ValidationError("dead_time: must be >= 0");
  CorrelationHistogram out = hist;
  const Picoseconds half = ns_to_ps(dead_time_ns);
  if (half <= 0) return out;
  out.masked.assign(out.size(), 0);
  if (!hist.masked.empty()) out.masked = hist.masked;
  std::size_t count = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Picoseconds t = out.tau(i);
    if (t > -half && t < half) {
      out.masked[i] = 1;
      ++count;
    }
  }
  out.excised = ExcisedRegion{half, count};
  return out;
}

Picoseconds detect_dead_time_gap(const CorrelationHistogram& hist) {
  if (hist.first_bin > 0 || hist.last_bin() < 0) return 0;
  const auto zero = static_cast<std::size_t>(-hist.first_bin);
  if (hist.bins[zero] != 0) return 0;
  std::size_t r = 0;
  while (zero + r + 1 < hist.size() && zero >= r + 1 && hist.bins[zero + r + 1] == 0 &&
         hist.bins[zero - r - 1] == 0) {
    ++r;
  }
  return static_cast<Picoseconds>(r + 1) * hist.bin_width;
}

BackgroundEstimate estimate_background(const CorrelationHistogram& hist, const PeakComb& comb) {
  if (!(comb.period_ns > 0.0)) throw ValidationError("repetition_period: must be > 0");
  const Picoseconds period = ns_to_ps(comb.period_ns);
  const Picoseconds zero = ns_to_ps(comb.zero_delay_ns);
  const Picoseconds w = hist.bin_width;
  const std::int64_t half = period / (4 * w);  // central 50% of the gap
  const Picoseconds tau_lo = hist.first_bin * w;
  const Picoseconds tau_hi = hist.last_bin() * w;
  double sum = 0.0;
  std::size_t used = 0;
  const std::int64_t k_lo = floor_div(tau_lo - zero, period) - 1;
  const std::int64_t k_hi = ceil_div(tau_hi - zero, period) + 1;
  for (std::int64_t k = k_lo; k <= k_hi; ++k) {
    const Picoseconds mid = zero + k * period + period / 2;
    const std::int64_t jc = bin_of(mid, w);
    if (jc - half < hist.first_bin || jc + half > hist.last_bin()) continue;
    for (std::int64_t j = jc - half; j <= jc + half; ++j) {
      const auto i = static_cast<std::size_t>(j - hist.first_bin);
      if (hist.is_masked(i)) continue;
      sum += static_cast<double>(hist.bins[i]);
      ++used;
    }
  }
  if (used == 0) throw ValidationError("estimate_background: no inter-peak bins available");
  BackgroundEstimate b;
  b.per_bin = sum / static_cast<double>(used);
  b.variance = b.per_bin / static_cast<double>(used);
  b.bins_used = used;
  return b;
}

double default_peak_window_ns(double period_ns, std::optional<double> lifetime_ns) {
  const double half_period = period_ns / 2.0;
  return lifetime_ns ? std::min(half_period, 10.0 * *lifetime_ns) : half_period;
}

std::vector<PeakArea> integrate_peaks(const CorrelationHistogram& hist, const PeakComb& comb, double window_ns,
                                      const BackgroundEstimate& background) {
  if (!(comb.period_ns > 0.0)) throw ValidationError("repetition_period: must be > 0");
  if (!(window_ns > 0.0)) throw ValidationError("peak window: must be > 0");
  if (window_ns > comb.period_ns) throw ValidationError("peak window exceeds the repetition period");
  const Picoseconds period = ns_to_ps(comb.period_ns);
  const Picoseconds zero = ns_to_ps(comb.zero_delay_ns);
  const Picoseconds w = hist.bin_width;
  const std::int64_t half = ns_to_ps(window_ns) / (2 * w);
  const auto n = static_cast<std::size_t>(2 * half + 1);
  const double b = background.per_bin;
  const auto nd = static_cast<double>(n);

  std::vector<PeakArea> peaks;
  const std::int64_t k_lo = floor_div(hist.first_bin * w - zero, period) - 1;
  const std::int64_t k_hi = ceil_div(hist.last_bin() * w - zero, period) + 1;
  for (std::int64_t k = k_lo; k <= k_hi; ++k) {
    const Picoseconds center = zero + k * period;
    const std::int64_t jc = bin_of(center, w);
    if (jc - half < hist.first_bin || jc + half > hist.last_bin()) continue;
    PeakArea p;
    p.k = k;
    p.center = center;
    p.n_bins = n;
    for (std::int64_t j = jc - half; j <= jc + half; ++j) {
      const auto i = static_cast<std::size_t>(j - hist.first_bin);
      p.raw += hist.bins[i];
      p.masked = p.masked || hist.is_masked(i);
    }
    p.area = static_cast<double>(p.raw) - nd * b;
    p.sigma = std::sqrt(static_cast<double>(p.raw) + nd * nd * background.variance);
    peaks.push_back(p);
  }
  return peaks;
}

std::vector<PeakArea> integrate_peaks(const CorrelationHistogram& hist, const PeakComb& comb, double window_ns) {
  return integrate_peaks(hist, comb, window_ns, estimate_background(hist, comb));
}

Normalization normalize_long_delay(std::span<const PeakArea> peaks, double period_ns, const LongDelayWindow& window) {
  if (!(window.hi_ns >= window.lo_ns && window.lo_ns >= 0.0)) {
    throw ValidationError("long-delay window: need 0 <= lo <= hi");
  }
  double sum = 0.0;
  double var = 0.0;
  std::size_t used = 0;
  for (const PeakArea& p : peaks) {
    const double delay = std::abs(static_cast<double>(p.k)) * period_ns;
    if (p.masked || delay < window.lo_ns || delay > window.hi_ns) continue;
    sum += p.area;
    var += p.sigma * p.sigma;
    ++used;
  }
  if (used == 0) throw ValidationError("long-delay window contains no peaks");
  if (used < kMinNormalizationPeaks) {
    throw ValidationError("long-delay window contains " + std::to_string(used) + " peaks, need at least " +
                          std::to_string(kMinNormalizationPeaks));
  }
  Normalization out;
  out.peaks_used = used;
  out.factor = sum / static_cast<double>(used);
  if (!(out.factor > 0.0)) throw NumericalError("long-delay normalization factor is not positive");
  out.factor_sigma = std::sqrt(var) / static_cast<double>(used);
  const double rel_f = out.factor_sigma / out.factor;
  out.peaks.reserve(peaks.size());
  for (PeakArea p : peaks) {
    p.area /= out.factor;
    p.sigma = std::sqrt(std::pow(p.sigma / out.factor, 2) + std::pow(p.area * rel_f, 2));
    if (p.k == 0 && !p.masked) out.g2_zero_raw = p.area;
    out.peaks.push_back(p);
  }
  return out;
}

Classification classify_g2(double g2_zero) {
  return {g2_zero < kSinglePhotonThreshold ? Verdict::single_photon : Verdict::not_single_photon,
          g2_zero < kHighPurityThreshold ? Quality::high_purity : Quality::standard};
}

std::vector<double> normalize_cw(const CorrelationHistogram& hist) {
  std::vector<double> out(hist.size(), std::numeric_limits<double>::quiet_NaN());
  const double denom = static_cast<double>(hist.n_start) * static_cast<double>(hist.n_stop) *
                       static_cast<double>(hist.bin_width);
  if (!(denom > 0.0) || hist.duration <= 0) throw ValidationError("normalize_cw: empty channels or duration");
  const double scale = static_cast<double>(hist.duration) / denom;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    if (!hist.is_masked(i)) out[i] = static_cast<double>(hist.bins[i]) * scale;
  }
  return out;
}

std::optional<PeakArea> find_peak(std::span<const PeakArea> peaks, std::int64_t k) {
  for (const PeakArea& p : peaks) {
    if (p.k == k && !p.masked) return p;
  }
  return std::nullopt;
}

G2Result analyze_pulsed(std::span<const Picoseconds> ch0, std::span<const Picoseconds> ch1, Picoseconds duration,
                        const PulsedAnalysisParams& params) {
  const PeakComb& comb = params.comb;
  if (!(comb.period_ns > 0.0)) throw ValidationError("repetition_period: must be > 0");
  const Picoseconds w = params.bin_width;
  if (w <= 0) throw ValidationError("bin_width: must be > 0");

  G2Result r;
  r.long_delay = params.long_delay;
  r.peak_window_ns = params.peak_window_ns.value_or(default_peak_window_ns(comb.period_ns, params.lifetime_ns));
  const double near_ns = params.near_range_ns.value_or(std::abs(comb.zero_delay_ns) + 10.0 * comb.period_ns);
  const Picoseconds near_ps = std::max(ns_to_ps(near_ns), w);

  CorrelationHistogram near = cross_correlate(ch0, ch1, w, near_ps, params.threads);
  near.duration = std::max(near.duration, duration);
  r.near = excise_dead_time_region(near, params.dead_time_ns);
  r.excised_region = r.near.excised;
  r.background = estimate_background(r.near, comb);
  r.peak_areas = integrate_peaks(r.near, comb, r.peak_window_ns, r.background);

  // Long-delay peaks on both sides of zero, each in its own narrow histogram.
  const Picoseconds zero = ns_to_ps(comb.zero_delay_ns);
  const Picoseconds pad = ns_to_ps(comb.period_ns);
  const Picoseconds lo = ns_to_ps(params.long_delay.lo_ns);
  const Picoseconds hi = ns_to_ps(params.long_delay.hi_ns);
  double far_sum = 0.0;
  std::size_t far_bins = 0;
  std::vector<std::vector<double>> far_profiles;
  const std::int64_t half = ns_to_ps(r.peak_window_ns) / (2 * w);
  for (const int side : {+1, -1}) {
    const Picoseconds t_a = zero + side * lo;
    const Picoseconds t_b = zero + side * hi;
    const std::int64_t j_lo = bin_of(std::min(t_a, t_b) - pad, w);
    const std::int64_t j_hi = bin_of(std::max(t_a, t_b) + pad, w);
    CorrelationHistogram far = cross_correlate_range(ch0, ch1, w, j_lo, j_hi, params.threads);
    const BackgroundEstimate bg = estimate_background(far, comb);
    far_sum += bg.per_bin * static_cast<double>(bg.bins_used);
    far_bins += bg.bins_used;
    for (const PeakArea& p : integrate_peaks(far, comb, r.peak_window_ns, bg)) {
      const double delay = std::abs(static_cast<double>(p.k)) * comb.period_ns;
      if (delay < params.long_delay.lo_ns || delay > params.long_delay.hi_ns) continue;
      r.peak_areas.push_back(p);
      std::vector<double> profile;
      const std::int64_t jc = bin_of(p.center, w);
      for (std::int64_t j = jc - half; j <= jc + half; ++j) {
        profile.push_back(static_cast<double>(far.bins[static_cast<std::size_t>(j - far.first_bin)]) - bg.per_bin);
      }
      far_profiles.push_back(std::move(profile));
    }
  }
  r.background_far.per_bin = far_bins ? far_sum / static_cast<double>(far_bins) : 0.0;
  r.background_far.bins_used = far_bins;
  r.background_far.variance = far_bins ? r.background_far.per_bin / static_cast<double>(far_bins) : 0.0;

  Normalization norm = normalize_long_delay(r.peak_areas, comb.period_ns, params.long_delay);
  r.normalization_factor = norm.factor;
  r.normalization_sigma = norm.factor_sigma;
  r.normalized_peaks = std::move(norm.peaks);
  if (!norm.g2_zero_raw) {
    throw ValidationError(
        "zero-delay peak is masked by the dead-time gap or outside the histogram; "
        "shift it with a channel delay larger than the dead time");
  }
  r.g2_zero_raw = *norm.g2_zero_raw;
  r.g2_zero = std::max(0.0, r.g2_zero_raw);
  r.g2_zero_sigma = find_peak(r.normalized_peaks, 0)->sigma;
  r.classification = classify_g2(r.g2_zero);

  // Plot scale: height of the averaged far-peak profile.
  double height = 0.0;
  if (!far_profiles.empty()) {
    std::vector<double> mean(far_profiles.front().size(), 0.0);
    for (const auto& prof : far_profiles) {
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += prof[i];
    }
    height = *std::max_element(mean.begin(), mean.end()) / static_cast<double>(far_profiles.size());
  }
  r.normalized.assign(r.near.size(), std::numeric_limits<double>::quiet_NaN());
  if (height > 0.0) {
    for (std::size_t i = 0; i < r.near.size(); ++i) {
      if (!r.near.is_masked(i)) r.normalized[i] = (static_cast<double>(r.near.bins[i]) - r.background.per_bin) / height;
    }
  }
  return r;
}

}  // namespace nfw
