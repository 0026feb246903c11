#include "nfw/repro.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "nfw/emitter_sim.hpp"
#include "nfw/fiber_design.hpp"

namespace nfw::repro {
namespace {

DetectionChain hbt_chain() {
  DetectionChain c;
  c.splitter_ratio = 0.5;
  c.efficiency = {0.6, 0.6};
  c.dark_rate_cps = {200.0, 200.0};
  c.router_dead_time_ns = 100.0;
  c.timing_jitter_ps = 200.0;
  c.channel_delay_ns = 1150.0;
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

Scenario fig4_scenario() {
  Scenario s;
  s.name = "fig4";
  s.emitter.lifetime_ns = 5.0;
  s.emitter.quantum_yield = 0.8;
  s.emitter.p_sat_nw = 80.0;
  s.emitter.blinking.kind = BlinkingKind::two_state_exponential;
  s.emitter.blinking.mean_on_s = 2e-3;
  s.emitter.blinking.mean_off_s = 1e-3;
  s.emitter.bleach_time_s = 900.0;
  s.emitter.emission_center_nm = 518.0;
  s.emitter.emission_fwhm_nm = 16.0;
  s.excitation.mode = ExcitationMode::pulsed;
  s.excitation.repetition_period_ns = 200.0;
  s.excitation.power_nw = 80.0;
  s.excitation.wavelength_nm = 405.0;
  s.chain = hbt_chain();
  s.chain.collection_efficiency = 0.1;
  s.duration_s = 60.0;
  s.seed = 20190401;
  return s;
}

Scenario fig6_scenario() {
  Scenario s;
  s.name = "fig6";
  s.emitter.lifetime_ns = 8.0;
  s.emitter.quantum_yield = 0.7;
  s.emitter.p_sat_nw = 80.0;
  s.emitter.blinking.kind = BlinkingKind::two_state_exponential;
  s.emitter.blinking.mean_on_s = 20e-3;
  s.emitter.blinking.mean_off_s = 2e-3;
  s.emitter.emission_center_nm = 600.0;
  s.emitter.emission_fwhm_nm = 30.0;
  s.emitter.polarization.degree = 0.7;
  s.excitation.mode = ExcitationMode::pulsed;
  s.excitation.repetition_period_ns = 200.0;
  s.excitation.power_nw = 160.0;
  s.excitation.wavelength_nm = 405.0;
  s.chain = hbt_chain();
  s.chain.dark_rate_cps = {400.0, 400.0};
  s.chain.efficiency = {0.57, 0.57};  // detector 0.6 times fiber transmission 0.95
  s.chain.collection_efficiency = fiber_collection_efficiency(150.0, 600.0, 0.0);
  s.duration_s = 60.0;
  s.seed = 20190402;
  return s;
}

Scenario ideal_scenario() {
  Scenario s;
  s.name = "ideal";
  s.emitter.quantum_yield = 1.0;
  s.excitation.power_nw = 80.0;
  s.chain.efficiency = {1.0, 1.0};
  s.chain.dark_rate_cps = {0.0, 0.0};
  s.chain.router_dead_time_ns = 0.0;
  s.chain.collection_efficiency = 1.0;
  s.duration_s = 1.0;
  s.seed = 42;
  return s;
}

double fiber_collection_efficiency(double radius_nm, double wavelength_nm, double offset_nm) {
  const fiber::FiberSpec spec{radius_nm, fiber::sellmeier_silica(wavelength_nm), 1.0, wavelength_nm};
  return 0.5 * fiber::coupling_efficiency_estimate(fiber::solve_he11(spec), offset_nm);
}

PulsedRun run_pulsed(const Scenario& scenario, unsigned threads) {
  scenario.validate();
  PulsedRun run;
  auto t0 = std::chrono::steady_clock::now();
  const TagStream stream = simulate_stream(scenario.emitter, scenario.excitation, scenario.chain, scenario.duration_s,
                                           scenario.seed.value_or(0));
  const ChannelTimes ch = split_channels(stream);
  run.simulate_seconds = seconds_since(t0);
  run.tags_ch0 = ch.ch0.size();
  run.tags_ch1 = ch.ch1.size();

  t0 = std::chrono::steady_clock::now();
  PulsedAnalysisParams params = analysis_params(scenario);
  params.threads = threads;
  run.g2 = analyze_pulsed(ch.ch0, ch.ch1, stream.meta().duration, params);
  run.analyze_seconds = seconds_since(t0);
  return run;
}

Fig4Report run_fig4(unsigned threads) {
  Fig4Report rep;
  Scenario s = fig4_scenario();
  rep.blinking = run_pulsed(s, threads);
  s.emitter.blinking.kind = BlinkingKind::none;
  rep.steady = run_pulsed(s, threads);
  return rep;
}

SidePeakCheck side_peaks(const G2Result& g2, std::int64_t k_max) {
  SidePeakCheck c;
  c.k_max = k_max;
  c.min_area = std::numeric_limits<double>::infinity();
  const double rel_norm = g2.normalization_sigma / g2.normalization_factor;
  for (std::int64_t k = -k_max; k <= k_max; ++k) {
    if (k == 0) continue;
    const auto peak = find_peak(g2.normalized_peaks, k);
    if (!peak) continue;
    ++c.peaks;
    c.min_area = std::min(c.min_area, peak->area);
    const double sigma = std::hypot(peak->sigma, peak->area * rel_norm);
    c.max_abs_z = std::max(c.max_abs_z, std::abs(peak->area - 1.0) / sigma);
  }
  return c;
}

Scenario saturation_scenario() {
  Scenario s;
  s.name = "saturation";
  s.emitter.lifetime_ns = 5.0;
  s.emitter.quantum_yield = 0.8;
  s.emitter.p_sat_nw = 80.0;
  s.emitter.blinking.kind = BlinkingKind::two_state_exponential;
  s.emitter.blinking.mean_on_s = 20.0;
  s.emitter.blinking.mean_off_s = 4.0;
  s.chain.efficiency = {0.6, 0.6};
  s.chain.dark_rate_cps = {0.0, 0.0};  // background-subtracted intensities
  s.chain.router_dead_time_ns = 0.0;
  s.chain.collection_efficiency = 0.1;
  s.seed = 80;
  return s;
}

std::vector<SaturationPoint> saturation_dataset(const Scenario& scenario, const SaturationStudy& study,
                                                std::uint64_t seed) {
  scenario.validate();
  std::mt19937_64 noise_rng(seed);
  std::normal_distribution<double> noise(0.0, study.noise);
  std::vector<SaturationPoint> out;
  std::uint64_t run = 0;
  for (double power : study.powers_nw) {
    ExcitationModel exc = scenario.excitation;
    exc.power_nw = power;
    SaturationPoint pt;
    pt.power_nw = power;
    for (std::size_t r = 0; r < study.repeats; ++r) {
      const auto trace = simulate_intensity_trace(scenario.emitter, exc, scenario.chain, study.window_s * 1e3,
                                                  study.window_s, seed * 1000003ULL + run++);
      const double counts = trace.empty() ? 0.0 : static_cast<double>(trace.front());
      pt.repeats.push_back(counts / study.window_s * (1.0 + noise(noise_rng)));
    }
    out.push_back(std::move(pt));
  }
  return out;
}

}  // namespace nfw::repro
