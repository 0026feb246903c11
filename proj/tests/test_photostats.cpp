#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "nfw/emitter_sim.hpp"
#include "nfw/errors.hpp"
#include "nfw/photostats.hpp"
#include "nfw/repro.hpp"

using namespace nfw;

namespace {

std::vector<double> curve(const std::vector<double>& p, double i_inf, double p_sat) {
  std::vector<double> y;
  for (double x : p) y.push_back(i_inf * x / (x + p_sat));
  return y;
}

const std::vector<double> kEightPowers{10, 20, 40, 80, 160, 320, 640, 1280};

}  // namespace

TEST_CASE("blinking filter keeps the brightest repeats") {
  const std::vector<double> v{1, 9, 3, 7, 5, 8, 2, 6, 4, 10};
  CHECK(blinking_filter(v) == doctest::Approx(9.0));
  CHECK(blinking_filter(v, 1) == 10.0);
  CHECK(blinking_filter(v, 10) == doctest::Approx(5.5));
  CHECK(blinking_filter(std::vector<double>(10, 5.0)) == 5.0);
  CHECK_THROWS_AS((void)blinking_filter(v, 0), ValidationError);
  CHECK_THROWS_AS((void)blinking_filter(std::vector<double>{1, 2}), ValidationError);
}

TEST_CASE("blinking filter recovers the on-state rate of a simulated trace") {
  auto sc = repro::ideal_scenario();
  sc.chain.collection_efficiency = 0.01;
  sc.excitation.power_nw = sc.emitter.p_sat_nw;
  sc.emitter.blinking.kind = BlinkingKind::two_state_exponential;
  sc.emitter.blinking.mean_on_s = 3.0;
  sc.emitter.blinking.mean_off_s = 1.0;
  // Pulses per second times excitation and detection probabilities.
  const double on_rate = 1e9 / sc.excitation.repetition_period_ns * 0.5 * 0.01;
  const auto trace = simulate_intensity_trace(sc.emitter, sc.excitation, sc.chain, 1000.0, 10.0, 14);
  REQUIRE(trace.size() == 10);
  std::vector<double> windows(trace.begin(), trace.end());
  const double filtered = blinking_filter(windows);
  const double mean = std::accumulate(windows.begin(), windows.end(), 0.0) / 10.0;
  CHECK(std::abs(filtered / on_rate - 1.0) < 0.05);
  CHECK(mean < on_rate - 3.0 * std::sqrt(on_rate));
}

TEST_CASE("saturation model identity at P = P_sat") {
  CHECK(saturation_model(80.0, 2e5, 80.0) == doctest::Approx(1e5));
  CHECK(saturation_model(0.0, 2e5, 80.0) == 0.0);
}

TEST_CASE("noiseless saturation data") {
  for (auto weighting : {SaturationWeighting::absolute, SaturationWeighting::relative}) {
    const auto y = curve(kEightPowers, 1.2e5, 80.0);
    const auto f = fit_saturation_curve(kEightPowers, y, weighting);
    CHECK(std::abs(f.p_sat_nw - 80.0) < 0.1);
    CHECK(f.i_inf == doctest::Approx(1.2e5).epsilon(1e-6));
    CHECK(f.residual < 1e-6);
    CHECK(saturation_model(f.p_sat_nw, f.i_inf, f.p_sat_nw) == doctest::Approx(f.i_inf / 2));
  }
}

TEST_CASE("fit error shrinks with the noise") {
  double previous = 1.0;
  for (double noise : {1e-2, 1e-4, 1e-6}) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, noise);
    auto y = curve(kEightPowers, 1e5, 80.0);
    for (double& v : y) v *= 1.0 + g(rng);
    const double err = std::abs(fit_saturation_curve(kEightPowers, y).p_sat_nw / 80.0 - 1.0);
    CHECK(err < previous);
    previous = err;
  }
  CHECK(previous < 1e-5);
}

TEST_CASE("Monte Carlo study with 5% noise and eight powers") {
  const int trials = 200;
  double sum = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(t) + 1000);
    std::normal_distribution<double> g(0.0, 0.05);
    auto y = curve(kEightPowers, 1e5, 80.0);
    for (double& v : y) v *= 1.0 + g(rng);
    sum += fit_saturation_curve(kEightPowers, y).p_sat_nw;
  }
  CHECK(std::abs(sum / trials / 80.0 - 1.0) < 0.05);
}

TEST_CASE("saturation fit on repeat sets") {
  std::vector<SaturationPoint> pts;
  for (double p : kEightPowers) {
    SaturationPoint sp;
    sp.power_nw = p;
    const double on = 1e5 * p / (p + 80.0);
    sp.repeats = {on, on, on, 0.2 * on, 0.5 * on, on * 0.9, 0.1 * on, on, 0.3 * on, 0.6 * on};
    pts.push_back(sp);
  }
  SaturationFitOptions opt;
  opt.keep = 3;
  const auto f = fit_saturation(pts, opt);
  CHECK(std::abs(f.p_sat_nw - 80.0) < 0.1);
  opt.filter_blinking = false;
  const auto u = fit_saturation(pts, opt);
  CHECK(u.i_inf < f.i_inf);

  pts[0].repeats.clear();
  CHECK_THROWS_AS((void)fit_saturation(pts, {}), ValidationError);
}

TEST_CASE("saturation fit input errors") {
  const std::vector<double> p{10, 10, 20, 20};
  const std::vector<double> y{1, 1, 2, 2};
  CHECK_THROWS_AS((void)fit_saturation_curve(p, y), ValidationError);
  CHECK_THROWS_AS((void)fit_saturation_curve(kEightPowers, y), ValidationError);
  CHECK_THROWS_AS((void)fit_saturation_curve(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}),
                  ValidationError);
  const std::vector<double> with_zero{0, 80, 160};
  const std::vector<double> counts{0, 50, 200.0 / 3.0};
  CHECK_THROWS_AS((void)fit_saturation_curve(with_zero, counts), ValidationError);
  CHECK(fit_saturation_curve(with_zero, counts, SaturationWeighting::absolute).p_sat_nw == doctest::Approx(80.0));
  CHECK_THROWS_AS((void)fit_saturation_curve(std::vector<double>{-1, 2, 3}, std::vector<double>{1, 1, 2}),
                  ValidationError);
}

TEST_CASE("spectrum fit recovers the simulated line") {
  EmitterModel e;
  e.emission_center_nm = 518.0;
  e.emission_fwhm_nm = 16.0;
  const auto f = fit_spectrum(simulate_spectrum(e, 100'000, 2));
  CHECK(std::abs(f.center_nm - 518.0) < 0.2);
  CHECK(std::abs(f.fwhm_nm - 16.0) < 0.5);
  CHECK_FALSE(f.multimodal);
  CHECK_FALSE(f.unresolved);
}

TEST_CASE("spectrum centers across 480 to 520 nm") {
  for (double c = 480.0; c <= 520.0; c += 5.0) {
    EmitterModel e;
    e.emission_center_nm = c;
    e.emission_fwhm_nm = 16.0;
    const auto f = fit_spectrum(simulate_spectrum(e, 20'000, static_cast<std::uint64_t>(c)));
    CHECK(std::abs(f.center_nm - c) < 0.5);
  }
}

TEST_CASE("delta-like and two-line spectra") {
  const auto f = fit_spectrum(std::vector<double>(1000, 530.0));
  CHECK(f.unresolved);
  CHECK(f.fwhm_nm == doctest::Approx(0.1));
  CHECK(f.center_nm == doctest::Approx(530.0));

  EmitterModel a;
  a.emission_center_nm = 500.0;
  a.emission_fwhm_nm = 6.0;
  EmitterModel b = a;
  b.emission_center_nm = 540.0;
  auto mix = simulate_spectrum(a, 30'000, 1);
  const auto more = simulate_spectrum(b, 30'000, 2);
  mix.insert(mix.end(), more.begin(), more.end());
  CHECK(fit_spectrum(mix, {.bin_width_nm = 1.0}).multimodal);

  CHECK_THROWS_AS((void)fit_spectrum(std::vector<double>{}), ValidationError);
  CHECK_THROWS_AS((void)histogram_spectrum(std::vector<double>{1.0}, 0.0), ValidationError);
}

TEST_CASE("histogram_spectrum keeps every sample") {
  std::vector<double> s{500.0, 500.5, 501.2, 503.9};
  const auto bins = histogram_spectrum(s, 1.0);
  double total = 0.0;
  for (const auto& b : bins) total += b.counts;
  CHECK(total == 4.0);
  CHECK(bins[1].wavelength_nm - bins[0].wavelength_nm == doctest::Approx(1.0));
}

TEST_CASE("Stokes parameters from six analyzer settings") {
  CHECK(stokes_from_intensities(1, 1, 1, 1, 1, 1) == StokesVector{2, 0, 0, 0});
  CHECK(stokes_from_intensities(1, 0, 0.5, 0.5, 0.5, 0.5) == StokesVector{1, 1, 0, 0});
  CHECK(stokes_from_intensities(0.5, 0.5, 0.5, 0.5, 1, 0) == StokesVector{1, 0, 0, 1});
  CHECK_THROWS_AS((void)stokes_from_intensities(-1, 0, 0, 0, 0, 0), ValidationError);
}

TEST_CASE("degree of polarization") {
  CHECK(degree_of_polarization({2, 0, 0, 0}).value == 0.0);
  CHECK(degree_of_polarization({1, 1, 0, 0}).value == 1.0);
  const auto over = degree_of_polarization({1, 1, 1, 0});
  CHECK(over.out_of_range);
  CHECK(over.value == 1.0);
  CHECK(over.unclamped == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS((void)degree_of_polarization({0, 0, 0, 0}), ValidationError);
  CHECK(is_unpolarized(0.05));
  CHECK_FALSE(is_unpolarized(0.1));

  EmitterModel e;
  e.polarization.degree = 0.3;
  e.polarization.axis_deg = 30.0;
  const std::uint64_t n = 100'000;
  const auto c = simulate_polarimetry(e, n, 3);
  const auto dop = degree_of_polarization(stokes_from_intensities(c[0], c[1], c[2], c[3], c[4], c[5]));
  // Each normalized Stokes component carries a binomial error of about 1/sqrt(2n).
  CHECK(std::abs(dop.value - 0.3) < 4.0 / std::sqrt(2.0 * static_cast<double>(n)));
}
