#include "nfw/emitter_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nfw/errors.hpp"

namespace nfw {

namespace {

constexpr double kPsPerSecond = 1e12;
constexpr double kPsPerNs = 1e3;

// Independent generator per physical process, so that e.g. changing the dark
// rate leaves the signal photons of a given seed untouched.
enum class Substream : std::uint64_t { bleach = 1, blinking, emission, dark0, dark1, laser0, laser1 };

std::mt19937_64 substream(std::uint64_t seed, Substream id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(id)};
  return std::mt19937_64(seq);
}

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw ValidationError(field + ": " + rule);
}

bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }

struct RawEvent {
  double time_ps;
  std::uint8_t channel;
};

/// Pulses skipped before the next success; returns a huge count when p == 0.
std::int64_t geometric_skip(double p, std::mt19937_64& rng) {
  if (p >= 1.0) return 0;
  if (p <= 0.0) return std::numeric_limits<std::int64_t>::max() / 4;
  std::geometric_distribution<std::int64_t> geo(p);
  return geo(rng);
}

double powerlaw_mean(double t_min, double alpha, double cap) {
  if (std::abs(alpha - 2.0) < 1e-9) {
    return std::log(cap / t_min) / (1.0 / t_min - 1.0 / cap);
  }
  const double num = (std::pow(cap, 2.0 - alpha) - std::pow(t_min, 2.0 - alpha)) / (2.0 - alpha);
  const double den = (std::pow(cap, 1.0 - alpha) - std::pow(t_min, 1.0 - alpha)) / (1.0 - alpha);
  return num / den;
}

class DwellSampler {
 public:
  DwellSampler(const BlinkingModel& m, bool on) : kind_(m.kind), alpha_(m.powerlaw_exponent), cap_(m.dwell_cap_s) {
    mean_ = on ? m.mean_on_s : m.mean_off_s;
    if (kind_ == BlinkingKind::two_state_powerlaw) {
      const double t_min = powerlaw_min_dwell(mean_, alpha_, cap_);
      lo_pow_ = std::pow(t_min, 1.0 - alpha_);
      hi_pow_ = std::pow(cap_, 1.0 - alpha_);
    }
  }

  double operator()(std::mt19937_64& rng) const {
    if (kind_ == BlinkingKind::two_state_exponential) {
      return std::exponential_distribution<double>(1.0 / mean_)(rng);
    }
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return std::pow(lo_pow_ - u * (lo_pow_ - hi_pow_), 1.0 / (1.0 - alpha_));
  }

 private:
  BlinkingKind kind_;
  double alpha_;
  double cap_;
  double mean_ = 0.0;
  double lo_pow_ = 0.0;
  double hi_pow_ = 0.0;
};

void add_dark_counts(std::vector<RawEvent>& events, double rate_cps, double duration_ps, std::uint8_t ch,
                     std::mt19937_64& rng) {
  if (rate_cps <= 0.0) return;
  std::exponential_distribution<double> gap(rate_cps / kPsPerSecond);
  for (double t = gap(rng); t < duration_ps; t += gap(rng)) events.push_back({t, ch});
}

/// Quantizes, orders and dead-time-gates raw events into a validated stream.
TagStream finalize(std::vector<RawEvent>& raw, Picoseconds duration_ps, double dead_time_ns,
                   StreamMeta meta, std::uint64_t* dead_time_losses = nullptr) {
  const Picoseconds res = meta.resolution;
  std::vector<TimeTag> tags;
  tags.reserve(raw.size());
  for (const RawEvent& e : raw) {
    auto t = static_cast<Picoseconds>(std::llround(e.time_ps));
    if (t < 0 || t >= duration_ps) continue;
    t -= t % res;
    tags.push_back({t, e.channel});
  }
  std::sort(tags.begin(), tags.end(), [](const TimeTag& a, const TimeTag& b) {
    return a.time != b.time ? a.time < b.time : a.channel < b.channel;
  });
  // A detector cannot register two events in the same tick.
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  const std::size_t before = tags.size();
  tags = apply_router_dead_time(tags, dead_time_ns);
  if (dead_time_losses != nullptr) *dead_time_losses = before - tags.size();
  meta.duration = duration_ps;
  return TagStream(std::move(tags), std::move(meta));
}

Picoseconds to_duration_ps(double duration_s) {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw ValidationError("duration: must be > 0");
  return static_cast<Picoseconds>(std::llround(duration_s * kPsPerSecond));
}

StreamMeta stream_meta(const ExcitationModel& excitation, std::uint64_t seed) {
  StreamMeta meta;
  meta.excitation = ExcitationDescriptor{excitation.mode, excitation.repetition_period_ns,
                                         excitation.wavelength_nm, excitation.power_nw};
  meta.rng_seed = seed;
  return meta;
}

}  // namespace

void BlinkingModel::validate() const {
  require(mean_on_s > 0.0, "blinking.mean_on", "must be > 0");
  require(mean_off_s > 0.0, "blinking.mean_off", "must be > 0");
  require(powerlaw_exponent > 1.0, "blinking.powerlaw_exponent", "must be > 1");
  require(dwell_cap_s > 0.0, "blinking.dwell_cap", "must be > 0");
  if (kind == BlinkingKind::two_state_powerlaw) {
    require(mean_on_s < dwell_cap_s, "blinking.mean_on", "must be below dwell_cap for power-law dwells");
    require(mean_off_s < dwell_cap_s, "blinking.mean_off", "must be below dwell_cap for power-law dwells");
  }
}

void EmitterModel::validate() const {
  require(lifetime_ns > 0.0, "emitter.lifetime", "must be > 0");
  require(is_probability(quantum_yield), "emitter.quantum_yield", "must be in [0,1]");
  require(p_sat_nw > 0.0, "emitter.p_sat", "must be > 0");
  if (bleach_time_s) require(*bleach_time_s > 0.0, "emitter.bleach_time", "must be > 0");
  require(bleach_protection_factor >= 1.0, "emitter.bleach_protection_factor", "must be >= 1");
  require(emission_center_nm > 0.0, "emitter.emission_center", "must be > 0");
  require(emission_fwhm_nm >= 0.0, "emitter.emission_fwhm", "must be >= 0");
  require(is_probability(polarization.degree), "emitter.polarization_degree", "must be in [0,1]");
  blinking.validate();
}

void ExcitationModel::validate() const {
  if (mode == ExcitationMode::pulsed) {
    require(repetition_period_ns > 0.0, "excitation.repetition_period", "must be > 0 in pulsed mode");
  }
  require(power_nw >= 0.0, "excitation.power", "must be >= 0");
  require(wavelength_nm > 0.0, "excitation.wavelength", "must be > 0");
}

void DetectionChain::validate() const {
  require(is_probability(splitter_ratio), "chain.splitter_ratio", "must be in [0,1]");
  require(is_probability(efficiency[0]) && is_probability(efficiency[1]), "chain.efficiency", "must be in [0,1]");
  require(dark_rate_cps[0] >= 0.0 && dark_rate_cps[1] >= 0.0, "chain.dark_rate", "must be >= 0");
  require(router_dead_time_ns >= 0.0, "chain.router_dead_time", "must be >= 0");
  require(timing_jitter_ps >= 0.0, "chain.timing_jitter", "must be >= 0");
  require(is_probability(collection_efficiency), "chain.collection_efficiency", "must be in [0,1]");
  require(channel_delay_ns >= 0.0, "chain.channel_delay", "must be >= 0");
}

double excitation_probability(double power_nw, double p_sat_nw) {
  if (power_nw <= 0.0) return 0.0;
  return std::clamp(power_nw / (power_nw + p_sat_nw), 0.0, 1.0);
}

double powerlaw_min_dwell(double mean_s, double exponent, double cap_s) {
  if (!(mean_s > 0.0 && mean_s < cap_s && exponent > 1.0)) {
    throw ValidationError("power-law dwell: need 0 < mean < cap and exponent > 1");
  }
  // The truncated mean grows monotonically with t_min; bisect in log space.
  double lo = std::log(cap_s) - 80.0;
  double hi = std::log(cap_s);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (powerlaw_mean(std::exp(mid), exponent, cap_s) < mean_s ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

std::vector<OnInterval> blinking_on_intervals(const BlinkingModel& model, double duration_s,
                                              std::mt19937_64& rng) {
  std::vector<OnInterval> out;
  if (duration_s <= 0.0) return out;
  if (model.kind == BlinkingKind::none) {
    out.push_back({0.0, duration_s});
    return out;
  }
  model.validate();
  const DwellSampler on_dwell(model, true);
  const DwellSampler off_dwell(model, false);
  const double on_fraction = model.mean_on_s / (model.mean_on_s + model.mean_off_s);
  bool on = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < on_fraction;
  double t = 0.0;
  while (t < duration_s) {
    const double dwell = on ? on_dwell(rng) : off_dwell(rng);
    if (on) out.push_back({t, std::min(t + dwell, duration_s)});
    t += dwell;
    on = !on;
  }
  return out;
}

std::vector<TimeTag> apply_router_dead_time(std::span<const TimeTag> merged, double dead_time_ns) {
  const auto dead_ps = static_cast<Picoseconds>(std::llround(dead_time_ns * kPsPerNs));
  std::vector<TimeTag> out;
  out.reserve(merged.size());
  for (const TimeTag& t : merged) {
    if (out.empty() || dead_ps <= 0 || t.time - out.back().time >= dead_ps) out.push_back(t);
  }
  return out;
}

SimulationResult simulate_stream_detailed(const EmitterModel& emitter, const ExcitationModel& excitation,
                                          const DetectionChain& chain, double duration_s,
                                          std::uint64_t seed) {
  emitter.validate();
  excitation.validate();
  chain.validate();
  const Picoseconds duration_ps = to_duration_ps(duration_s);

  SimulationTruth truth;
  double signal_end_s = duration_s;
  if (emitter.bleach_time_s) {
    auto rng = substream(seed, Substream::bleach);
    const double mean = *emitter.bleach_time_s * emitter.bleach_protection_factor;
    truth.bleach_time_s = std::exponential_distribution<double>(1.0 / mean)(rng);
    signal_end_s = std::min(signal_end_s, *truth.bleach_time_s);
  }
  {
    auto rng = substream(seed, Substream::blinking);
    truth.on_intervals = blinking_on_intervals(emitter.blinking, signal_end_s, rng);
  }

  const double w0 = chain.splitter_ratio * chain.efficiency[0];
  const double w1 = (1.0 - chain.splitter_ratio) * chain.efficiency[1];
  const double p_ch0 = (w0 + w1) > 0.0 ? w0 / (w0 + w1) : 0.0;
  // Detection probability of one emitted photon on either channel.
  const double p_detect_photon = emitter.quantum_yield * chain.collection_efficiency * (w0 + w1);
  const double lifetime_ps = emitter.lifetime_ns * kPsPerNs;
  const double delay_ps = chain.channel_delay_ns * kPsPerNs;

  std::vector<RawEvent> raw;
  auto rng = substream(seed, Substream::emission);
  std::exponential_distribution<double> decay(1.0 / lifetime_ps);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::bernoulli_distribution to_ch0(p_ch0);
  auto record = [&](double emission_ps) {
    const std::uint8_t ch = to_ch0(rng) ? 0 : 1;
    double t = emission_ps + chain.timing_jitter_ps * jitter(rng);
    if (ch == 1) t += delay_ps;
    raw.push_back({t, ch});
  };

  if (excitation.mode == ExcitationMode::pulsed) {
    const double period_ps = excitation.repetition_period_ns * kPsPerNs;
    const double p_det = excitation_probability(excitation.power_nw, emitter.p_sat_nw) * p_detect_photon;
    raw.reserve(static_cast<std::size_t>(p_det * duration_s * kPsPerSecond / period_ps * 1.05) + 16);
    for (const OnInterval& iv : truth.on_intervals) {
      auto pulse = static_cast<std::int64_t>(std::ceil(iv.start_s * kPsPerSecond / period_ps));
      const auto end = static_cast<std::int64_t>(std::ceil(iv.end_s * kPsPerSecond / period_ps));
      // At most one photon per pulse: a single two-level emitter.
      while (true) {
        const std::int64_t skip = geometric_skip(p_det, rng);
        if (skip >= end - pulse) break;
        pulse += skip;
        record(static_cast<double>(pulse) * period_ps + decay(rng));
        ++pulse;
      }
    }
  } else {
    // Emission cycles: wait for excitation (rate P/P_sat per lifetime), then
    // decay. Only one cycle in G ~ Geometric(p) is detected, so the gap
    // between detections is Gamma(G, 1/r_exc) + Gamma(G, lifetime).
    const double rate_exc = excitation.power_nw / emitter.p_sat_nw / lifetime_ps;
    if (rate_exc > 0.0 && p_detect_photon > 0.0) {
      for (const OnInterval& iv : truth.on_intervals) {
        double t = iv.start_s * kPsPerSecond;
        const double end = iv.end_s * kPsPerSecond;
        while (true) {
          const double cycles = 1.0 + static_cast<double>(geometric_skip(p_detect_photon, rng));
          t += std::gamma_distribution<double>(cycles, 1.0 / rate_exc)(rng) +
               std::gamma_distribution<double>(cycles, lifetime_ps)(rng);
          if (t >= end) break;
          record(t);
        }
      }
    }
  }
  truth.signal_detections = raw.size();

  auto dark0 = substream(seed, Substream::dark0);
  auto dark1 = substream(seed, Substream::dark1);
  const auto duration_ps_d = static_cast<double>(duration_ps);
  add_dark_counts(raw, chain.dark_rate_cps[0], duration_ps_d, 0, dark0);
  add_dark_counts(raw, chain.dark_rate_cps[1], duration_ps_d, 1, dark1);
  truth.dark_detections = raw.size() - truth.signal_detections;

  TagStream stream = finalize(raw, duration_ps, chain.router_dead_time_ns, stream_meta(excitation, seed),
                              &truth.dead_time_losses);
  return {std::move(stream), std::move(truth)};
}

TagStream simulate_stream(const EmitterModel& emitter, const ExcitationModel& excitation,
                          const DetectionChain& chain, double duration_s, std::uint64_t seed) {
  return simulate_stream_detailed(emitter, excitation, chain, duration_s, seed).stream;
}

std::vector<std::uint64_t> bin_counts(const TagStream& stream, double bin_ms) {
  if (!(bin_ms > 0.0)) throw ValidationError("bin: must be > 0");
  const auto bin_ps = std::max<Picoseconds>(1, std::llround(bin_ms * 1e9));
  const Picoseconds duration = stream.meta().duration;
  std::size_t n = static_cast<std::size_t>((duration + bin_ps - 1) / bin_ps);
  if (!stream.empty()) n = std::max(n, static_cast<std::size_t>(stream.tags().back().time / bin_ps) + 1);
  std::vector<std::uint64_t> counts(n, 0);
  for (const TimeTag& t : stream.tags()) ++counts[static_cast<std::size_t>(t.time / bin_ps)];
  return counts;
}

std::vector<std::uint64_t> simulate_intensity_trace(const EmitterModel& emitter,
                                                    const ExcitationModel& excitation,
                                                    const DetectionChain& chain, double bin_ms,
                                                    double duration_s, std::uint64_t seed) {
  if (!(bin_ms > 0.0)) throw ValidationError("bin: must be > 0");
  if (duration_s <= 0.0) return {};
  return bin_counts(simulate_stream(emitter, excitation, chain, duration_s, seed), bin_ms);
}

std::vector<double> simulate_spectrum(const EmitterModel& emitter, std::size_t n_photons, std::uint64_t seed) {
  emitter.validate();
  if (n_photons == 0) throw ValidationError("n_photons: must be > 0");
  const double sigma = emitter.emission_fwhm_nm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  std::vector<double> out(n_photons, emitter.emission_center_nm);
  if (sigma == 0.0) return out;
  auto rng = substream(seed, Substream::emission);
  std::normal_distribution<double> line(emitter.emission_center_nm, sigma);
  for (double& w : out) w = line(rng);
  return out;
}

std::array<double, 6> simulate_polarimetry(const EmitterModel& emitter, std::uint64_t photons_per_setting,
                                           std::uint64_t seed) {
  emitter.validate();
  const double p = emitter.polarization.degree;
  const double theta = emitter.polarization.axis_deg * std::numbers::pi / 180.0;
  const double quarter = std::numbers::pi / 4.0;
  // Analyzer transmission of the linearly polarized fraction.
  const std::array<double, 6> polarized{
      std::pow(std::cos(theta), 2),           std::pow(std::sin(theta), 2),
      std::pow(std::cos(theta - quarter), 2), std::pow(std::sin(theta - quarter), 2),
      0.5,                                    0.5};
  auto rng = substream(seed, Substream::emission);
  std::array<double, 6> counts{};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double q = p * polarized[i] + (1.0 - p) * 0.5;
    std::binomial_distribution<std::uint64_t> pass(photons_per_setting, q);
    counts[i] = static_cast<double>(pass(rng));
  }
  return counts;
}

TagStream simulate_poisson_stream(std::array<double, 2> rates_cps, double duration_s, std::uint64_t seed) {
  require(rates_cps[0] >= 0.0 && rates_cps[1] >= 0.0, "rates", "must be >= 0");
  const Picoseconds duration_ps = to_duration_ps(duration_s);
  std::vector<RawEvent> raw;
  auto r0 = substream(seed, Substream::dark0);
  auto r1 = substream(seed, Substream::dark1);
  add_dark_counts(raw, rates_cps[0], static_cast<double>(duration_ps), 0, r0);
  add_dark_counts(raw, rates_cps[1], static_cast<double>(duration_ps), 1, r1);
  StreamMeta meta;
  meta.rng_seed = seed;
  return finalize(raw, duration_ps, 0.0, meta);
}

TagStream simulate_laser_stream(double mean_photons_per_pulse, const ExcitationModel& excitation,
                                const DetectionChain& chain, double duration_s, std::uint64_t seed) {
  excitation.validate();
  chain.validate();
  require(mean_photons_per_pulse >= 0.0, "mean_photons_per_pulse", "must be >= 0");
  require(excitation.mode == ExcitationMode::pulsed, "excitation.mode", "laser reference needs pulsed mode");
  const Picoseconds duration_ps = to_duration_ps(duration_s);
  const double period_ps = excitation.repetition_period_ns * kPsPerNs;
  const auto n_pulses = static_cast<std::int64_t>(std::ceil(static_cast<double>(duration_ps) / period_ps));
  const std::array<double, 2> share{chain.splitter_ratio * chain.efficiency[0],
                                    (1.0 - chain.splitter_ratio) * chain.efficiency[1]};
  std::vector<RawEvent> raw;
  for (std::uint8_t ch = 0; ch < 2; ++ch) {
    auto rng = substream(seed, ch == 0 ? Substream::laser0 : Substream::laser1);
    std::normal_distribution<double> jitter(0.0, 1.0);
    const double p = 1.0 - std::exp(-mean_photons_per_pulse * chain.collection_efficiency * share[ch]);
    const double offset = ch == 1 ? chain.channel_delay_ns * kPsPerNs : 0.0;
    std::int64_t pulse = 0;
    while (true) {
      const std::int64_t skip = geometric_skip(p, rng);
      if (skip >= n_pulses - pulse) break;
      pulse += skip;
      raw.push_back({static_cast<double>(pulse) * period_ps + offset + chain.timing_jitter_ps * jitter(rng), ch});
      ++pulse;
    }
  }
  auto dark0 = substream(seed, Substream::dark0);
  auto dark1 = substream(seed, Substream::dark1);
  add_dark_counts(raw, chain.dark_rate_cps[0], static_cast<double>(duration_ps), 0, dark0);
  add_dark_counts(raw, chain.dark_rate_cps[1], static_cast<double>(duration_ps), 1, dark1);
  return finalize(raw, duration_ps, chain.router_dead_time_ns, stream_meta(excitation, seed));
}

}  // namespace nfw
