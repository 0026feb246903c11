#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "nfw/correlator.hpp"
#include "nfw/emitter_sim.hpp"
#include "nfw/errors.hpp"
#include "nfw/repro.hpp"
#include "oracles.hpp"

using namespace nfw;

namespace {

constexpr Picoseconds kNs = 1000;

std::uint64_t count_at(const CorrelationHistogram& h, Picoseconds tau) {
  const std::int64_t j = bin_of(tau, h.bin_width);
  if (j < h.first_bin || j > h.last_bin()) return 0;
  return h.bins[static_cast<std::size_t>(j - h.first_bin)];
}

CorrelationHistogram flat_histogram(std::int64_t half_bins, Picoseconds w, std::uint64_t value) {
  CorrelationHistogram h;
  h.bin_width = w;
  h.first_bin = -half_bins;
  h.bins.assign(static_cast<std::size_t>(2 * half_bins + 1), value);
  return h;
}

bool matches_oracle(const CorrelationHistogram& h, const std::vector<Picoseconds>& a,
                    const std::vector<Picoseconds>& b, Picoseconds w, Picoseconds max_tau) {
  const auto ref = oracle::pair_histogram(a, b, w, max_tau);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const std::int64_t j = h.first_bin + static_cast<std::int64_t>(i);
    const auto it = ref.find(j);
    if (h.bins[i] != (it == ref.end() ? 0 : it->second)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("bin_of uses centered bins and sends ties up") {
  CHECK(bin_of(0, 10) == 0);
  CHECK(bin_of(4, 10) == 0);
  CHECK(bin_of(5, 10) == 1);
  CHECK(bin_of(-5, 10) == 0);
  CHECK(bin_of(-6, 10) == -1);
  CHECK(bin_of(14, 10) == 1);
  CHECK(bin_of(15, 10) == 2);
  CHECK(bin_of(1, 3) == 0);
  CHECK(bin_of(2, 3) == 1);
  CHECK(bin_of(-2, 3) == -1);
}

TEST_CASE("hand-enumerated pairs") {
  const std::vector<Picoseconds> a{0};
  const std::vector<Picoseconds> b{3 * kNs};
  const auto h = cross_correlate(a, b, kNs, 5 * kNs);
  CHECK(h.size() == 11);
  CHECK(std::accumulate(h.bins.begin(), h.bins.end(), std::uint64_t{0}) == 1);
  CHECK(count_at(h, 3 * kNs) == 1);

  const std::vector<Picoseconds> c{0, 10 * kNs};
  const std::vector<Picoseconds> d{3 * kNs, 12 * kNs};
  const auto g = cross_correlate(c, d, kNs, 15 * kNs);
  for (Picoseconds t : {3, 12, -7, 2}) CHECK(count_at(g, t * kNs) == 1);
  CHECK(std::accumulate(g.bins.begin(), g.bins.end(), std::uint64_t{0}) == 4);
}

TEST_CASE("sweep equals the pair oracle on random streams") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n0 = rng() % 800;
    const std::size_t n1 = rng() % 800;
    const Picoseconds span = 1 + static_cast<Picoseconds>(rng() % 2'000'000);
    const Picoseconds w = 1 + static_cast<Picoseconds>(rng() % 3000);
    const Picoseconds max_tau = w + static_cast<Picoseconds>(rng() % 200'000);
    const auto a = oracle::random_times(rng, n0, span);
    const auto b = oracle::random_times(rng, n1, span);
    const auto h = cross_correlate(a, b, w, max_tau);
    CHECK(h.first_bin == -(max_tau / w));
    CHECK(matches_oracle(h, a, b, w, max_tau));
    CHECK(h == brute_force_correlate(a, b, w, max_tau));
  }
}

TEST_CASE("pairs landing exactly on bin edges") {
  // Every difference is a multiple of w/2, so half of them sit on an edge.
  const std::vector<Picoseconds> a{0, 5, 10, 15, 20};
  const std::vector<Picoseconds> b{0, 5, 10, 15, 20, 25};
  const auto h = cross_correlate(a, b, 10, 40);
  CHECK(matches_oracle(h, a, b, 10, 40));
  CHECK(h == brute_force_correlate(a, b, 10, 40));
}

TEST_CASE("restricted range matches the full histogram") {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_times(rng, 3000, 10'000'000);
  const auto b = oracle::random_times(rng, 3000, 10'000'000);
  const auto full = cross_correlate(a, b, 100, 50'000);
  const auto part = cross_correlate_range(a, b, 100, 120, 300);
  REQUIRE(part.size() == 181);
  for (std::size_t i = 0; i < part.size(); ++i) {
    CHECK(part.bins[i] == full.bins[static_cast<std::size_t>(part.first_bin + static_cast<std::int64_t>(i) - full.first_bin)]);
  }
}

TEST_CASE("threaded sweep gives the identical histogram") {
  const TagStream s = simulate_poisson_stream({2e5, 2e5}, 0.5, 99);
  const auto c = split_channels(s);
  REQUIRE(c.ch0.size() > 8 * 4096);
  const auto one = cross_correlate(c.ch0, c.ch1, 512, 2'000'000, 1);
  for (unsigned t : {2u, 3u, 8u}) CHECK(cross_correlate(c.ch0, c.ch1, 512, 2'000'000, t) == one);
}

TEST_CASE("swapping channels mirrors the histogram when no pair can tie") {
  std::mt19937_64 rng(21);
  const auto a = oracle::random_times(rng, 2000, 5'000'000);
  const auto b = oracle::random_times(rng, 2000, 5'000'000);
  const Picoseconds w = 7;  // odd width: edges sit at half-integers
  const auto ab = cross_correlate(a, b, w, 7000);
  const auto ba = cross_correlate(b, a, w, 7000);
  std::vector<std::uint64_t> mirrored(ba.bins.rbegin(), ba.bins.rend());
  CHECK(ab.bins == mirrored);
}

TEST_CASE("input validation") {
  const std::vector<Picoseconds> ok{1, 2};
  const std::vector<Picoseconds> bad{2, 1};
  CHECK_THROWS_AS((void)cross_correlate(bad, ok, 1, 10), ValidationError);
  CHECK_THROWS_AS((void)cross_correlate(ok, bad, 1, 10), ValidationError);
  CHECK_THROWS_AS((void)cross_correlate(ok, ok, 0, 10), ValidationError);
  CHECK_THROWS_AS((void)cross_correlate(ok, ok, 10, 5), ValidationError);
  const auto empty = cross_correlate({}, ok, 1, 10);
  CHECK(std::all_of(empty.bins.begin(), empty.bins.end(), [](auto v) { return v == 0; }));
}

TEST_CASE("merge_histograms") {
  auto a = flat_histogram(3, 10, 2);
  auto b = flat_histogram(3, 10, 5);
  a.n_start = 1;
  b.n_start = 2;
  const auto m = merge_histograms(a, b);
  CHECK(std::all_of(m.bins.begin(), m.bins.end(), [](auto v) { return v == 7; }));
  CHECK(m.n_start == 3);
  CHECK_THROWS_AS((void)merge_histograms(a, flat_histogram(4, 10, 0)), ValidationError);
}

TEST_CASE("dead-time excision") {
  const auto h = flat_histogram(500, kNs, 1);
  const auto none = excise_dead_time_region(h, 0.0);
  CHECK(none.masked.empty());
  CHECK_FALSE(none.excised.has_value());

  const auto cut = excise_dead_time_region(h, 100.0);
  REQUIRE(cut.excised.has_value());
  CHECK(cut.excised->masked_bins == 199);
  CHECK(std::count(cut.masked.begin(), cut.masked.end(), 1) == 199);
  CHECK(cut.bins == h.bins);
  CHECK(cut.is_masked(static_cast<std::size_t>(-cut.first_bin)));
  CHECK_FALSE(cut.is_masked(static_cast<std::size_t>(-cut.first_bin + 100)));
  CHECK(cut.is_masked(static_cast<std::size_t>(-cut.first_bin + 99)));
  CHECK_THROWS_AS((void)excise_dead_time_region(h, -1.0), ValidationError);
}

TEST_CASE("detect_dead_time_gap") {
  auto h = flat_histogram(50, kNs, 3);
  CHECK(detect_dead_time_gap(h) == 0);
  for (std::int64_t j = -9; j <= 9; ++j) h.bins[static_cast<std::size_t>(j + 50)] = 0;
  CHECK(detect_dead_time_gap(h) == 10 * kNs);
}

TEST_CASE("background of a constant offset is that offset") {
  const auto h = flat_histogram(2000, kNs, 7);
  const auto b = estimate_background(h, {200.0, 0.0});
  CHECK(b.per_bin == doctest::Approx(7.0));
  CHECK(b.bins_used > 0);

  auto masked = excise_dead_time_region(h, 150.0);
  CHECK(estimate_background(masked, {200.0, 0.0}).per_bin == doctest::Approx(7.0));

  CHECK_THROWS_AS((void)estimate_background(flat_histogram(20, kNs, 1), {200.0, 0.0}), ValidationError);
}

TEST_CASE("background matches the accidental rate of uncorrelated light") {
  const double duration_s = 2.0;
  const TagStream s = simulate_poisson_stream({40'000.0, 25'000.0}, duration_s, 1234);
  const auto c = split_channels(s);
  const Picoseconds w = 512;
  const auto h = cross_correlate(c.ch0, c.ch1, w, 3'000'000);
  const auto b = estimate_background(h, {200.0, 0.0});
  const double expected = static_cast<double>(c.ch0.size()) * static_cast<double>(c.ch1.size()) *
                          static_cast<double>(w) / (duration_s * 1e12);
  const double sigma = std::sqrt(expected / static_cast<double>(b.bins_used));
  CHECK(std::abs(b.per_bin - expected) < 3.0 * sigma);
}

TEST_CASE("ideal emitter leaves no background") {
  const auto sc = repro::ideal_scenario();
  const auto c = split_channels(simulate_stream(sc.emitter, sc.excitation, sc.chain, 0.05, 1));
  const auto h = cross_correlate(c.ch0, c.ch1, 512, 2'000'000);
  const auto bg = estimate_background(h, {200.0, 0.0});
  const auto side = find_peak(integrate_peaks(h, {200.0, 0.0}, 100.0, bg), 3);
  REQUIRE(side.has_value());
  // Only the fluorescence tail reaches the gaps.
  CHECK(bg.per_bin * static_cast<double>(side->n_bins) < 1e-3 * side->area);
}

TEST_CASE("peak windows and integration") {
  CHECK(default_peak_window_ns(200.0, std::nullopt) == 100.0);
  CHECK(default_peak_window_ns(200.0, 5.0) == 50.0);
  CHECK(default_peak_window_ns(200.0, 30.0) == 100.0);

  auto h = flat_histogram(1000, kNs, 2);
  h.bins[1000 + 200] += 50;
  const auto peaks = integrate_peaks(h, {200.0, 0.0}, 21.0);
  const auto p1 = find_peak(peaks, 1);
  REQUIRE(p1.has_value());
  CHECK(p1->n_bins == 21);
  CHECK(p1->area == doctest::Approx(50.0));
  CHECK(find_peak(peaks, 0)->area == doctest::Approx(0.0));
  CHECK(find_peak(peaks, 6) == std::nullopt);

  CHECK_THROWS_AS((void)integrate_peaks(h, {200.0, 0.0}, 0.0), ValidationError);
  CHECK_THROWS_AS((void)integrate_peaks(h, {200.0, 0.0}, 250.0), ValidationError);

  const auto masked = excise_dead_time_region(h, 100.0);
  const auto mp = integrate_peaks(masked, {200.0, 0.0}, 21.0);
  CHECK(std::find_if(mp.begin(), mp.end(), [](auto& p) { return p.k == 0; })->masked);
  CHECK(find_peak(mp, 0) == std::nullopt);
}

TEST_CASE("coherent light gives equal peak areas") {
  ExcitationModel ex;
  DetectionChain chain;
  chain.timing_jitter_ps = 300.0;
  const TagStream s = simulate_laser_stream(0.05, ex, chain, 1.0, 77);
  const auto c = split_channels(s);
  const auto h = cross_correlate(c.ch0, c.ch1, 512, 2'100'000);
  const auto peaks = integrate_peaks(h, {200.0, 0.0}, 50.0);
  double mean = 0.0;
  for (const auto& p : peaks) mean += p.area;
  mean /= static_cast<double>(peaks.size());
  for (const auto& p : peaks) CHECK(std::abs(p.area - mean) < 3.0 * p.sigma);
}

TEST_CASE("long-delay normalization") {
  auto make = [](std::vector<double> areas) {
    std::vector<PeakArea> v;
    for (std::size_t i = 0; i < areas.size(); ++i) {
      PeakArea p;
      p.k = static_cast<std::int64_t>(i);
      p.area = areas[i];
      p.sigma = 0.01;
      v.push_back(p);
    }
    return v;
  };
  const LongDelayWindow far{1000.0, 5000.0};

  const auto flat = normalize_long_delay(make(std::vector<double>(30, 4.0)), 200.0, far);
  for (const auto& p : flat.peaks) CHECK(p.area == doctest::Approx(1.0));
  CHECK(flat.peaks_used == 21);

  std::vector<double> areas{0.05, 1.5, 1.4, 1.3, 1.2};
  areas.resize(30, 1.0);
  const auto n = normalize_long_delay(make(areas), 200.0, far);
  REQUIRE(n.g2_zero_raw.has_value());
  CHECK(*n.g2_zero_raw == doctest::Approx(0.05));
  CHECK(n.peaks[1].area == doctest::Approx(1.5));
  CHECK(n.peaks[4].area > 1.0);

  const auto again = normalize_long_delay(n.peaks, 200.0, far);
  CHECK(again.factor == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < n.peaks.size(); ++i) CHECK(again.peaks[i].area == doctest::Approx(n.peaks[i].area));

  CHECK_THROWS_AS((void)normalize_long_delay(make(areas), 200.0, {1e5, 2e5}), ValidationError);
  CHECK_THROWS_AS((void)normalize_long_delay(make(areas), 200.0, {1000.0, 2000.0}), ValidationError);
  CHECK_THROWS_AS((void)normalize_long_delay(make(areas), 200.0, {3.0, 1.0}), ValidationError);
  CHECK_THROWS_AS((void)normalize_long_delay(make(std::vector<double>(30, 0.0)), 200.0, far), NumericalError);
}

TEST_CASE("classification thresholds") {
  const auto a = classify_g2(0.05);
  CHECK(a.verdict == Verdict::single_photon);
  CHECK(a.quality == Quality::high_purity);
  CHECK(classify_g2(0.5).verdict == Verdict::not_single_photon);
  const auto b = classify_g2(0.2);
  CHECK(b.verdict == Verdict::single_photon);
  CHECK(b.quality == Quality::standard);
  CHECK(classify_g2(0.1).quality == Quality::standard);
  CHECK(classify_g2(0.0999).quality == Quality::high_purity);
}

TEST_CASE("cw normalization of uncorrelated light is flat") {
  const TagStream s = simulate_poisson_stream({50'000.0, 50'000.0}, 4.0, 8);
  const auto c = split_channels(s);
  auto h = cross_correlate(c.ch0, c.ch1, 100'000, 20'000'000);
  h.duration = s.meta().duration;
  const auto g = normalize_cw(h);
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(g.size());
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));

  const auto masked = normalize_cw(excise_dead_time_region(h, 150.0));
  CHECK(std::isnan(masked[static_cast<std::size_t>(-h.first_bin)]));
  CHECK_THROWS_AS((void)normalize_cw(flat_histogram(3, 10, 1)), ValidationError);
}

TEST_CASE("pulsed pipeline refuses a masked zero-delay peak") {
  auto sc = repro::fig4_scenario();
  sc.chain.channel_delay_ns = 0.0;
  sc.duration_s = 0.05;
  const auto c = split_channels(simulate_stream(sc.emitter, sc.excitation, sc.chain, sc.duration_s, 3));
  PulsedAnalysisParams p;
  p.dead_time_ns = 100.0;
  p.long_delay = {9.99e6, 10.01e6};
  CHECK_THROWS_AS((void)analyze_pulsed(c.ch0, c.ch1, 50'000'000'000, p), ValidationError);
}

TEST_CASE("dead time depletes the centre but leaves the side peaks alone") {
  auto sc = repro::fig4_scenario();
  sc.emitter.blinking.kind = BlinkingKind::none;
  sc.duration_s = 3.0;
  auto free = sc;
  free.chain.router_dead_time_ns = 0.0;
  const auto with = split_channels(simulate_stream(sc.emitter, sc.excitation, sc.chain, sc.duration_s, 5));
  const auto without = split_channels(simulate_stream(free.emitter, free.excitation, free.chain, free.duration_s, 5));

  const auto raw = cross_correlate(with.ch0, with.ch1, kNs, 3'000'000);
  const auto ref = cross_correlate(without.ch0, without.ch1, kNs, 3'000'000);
  const auto centre = static_cast<std::size_t>(-raw.first_bin);
  std::uint64_t in_gap = 0;
  for (std::size_t i = centre - 95; i <= centre + 95; ++i) in_gap += raw.bins[i];
  CHECK(in_gap == 0);
  CHECK(detect_dead_time_gap(raw) >= 95 * kNs);

  const PeakComb comb{200.0, sc.chain.channel_delay_ns};
  const auto cut = excise_dead_time_region(raw, 100.0);
  const auto a = integrate_peaks(cut, comb, 50.0);
  const auto b = integrate_peaks(ref, comb, 50.0);
  std::size_t compared = 0;
  for (const auto& p : a) {
    if (p.masked || p.k == 0) continue;
    const auto q = find_peak(b, p.k);
    REQUIRE(q.has_value());
    CHECK(std::abs(p.area - q->area) < 3.0 * std::hypot(p.sigma, q->sigma));
    ++compared;
  }
  CHECK(compared >= 20);
}
