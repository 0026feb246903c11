#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nfw/timetag.hpp"

namespace nfw {

enum class BlinkingKind : std::uint8_t { none, two_state_exponential, two_state_powerlaw };

/// Two-state (on/off) renewal process. For the power-law kind the dwell
/// density is t^-exponent on [t_min, dwell_cap]; t_min is chosen so that the
/// truncated mean equals mean_on / mean_off.
struct BlinkingModel {
  BlinkingKind kind = BlinkingKind::none;
  double mean_on_s = 1e-3;
  double mean_off_s = 1e-3;
  double powerlaw_exponent = 1.5;
  double dwell_cap_s = 10.0;

  void validate() const;
};

struct Polarization {
  double degree = 0.0;    ///< DOP in [0, 1]
  double axis_deg = 0.0;  ///< orientation of the polarized fraction (linear)
};

struct EmitterModel {
  double lifetime_ns = 5.0;
  double quantum_yield = 1.0;
  double p_sat_nw = 80.0;
  BlinkingModel blinking;
  std::optional<double> bleach_time_s;  ///< mean survival; nullopt = never bleaches
  double bleach_protection_factor = 1.0;
  double emission_center_nm = 518.0;
  double emission_fwhm_nm = 16.0;
  Polarization polarization;

  void validate() const;
};

struct ExcitationModel {
  ExcitationMode mode = ExcitationMode::pulsed;
  double repetition_period_ns = 200.0;
  double power_nw = 80.0;
  double wavelength_nm = 405.0;

  void validate() const;
};

/// HBT apparatus. Channel 1 may carry a fixed input delay (cable or
/// programmable offset) that shifts the zero-delay coincidence peak to
/// tau = +channel_delay_ns, outside the router dead-time gap.
struct DetectionChain {
  double splitter_ratio = 0.5;  ///< fraction sent to channel 0
  std::array<double, 2> efficiency{1.0, 1.0};
  std::array<double, 2> dark_rate_cps{0.0, 0.0};
  double router_dead_time_ns = 0.0;
  double timing_jitter_ps = 200.0;
  double collection_efficiency = 1.0;
  double channel_delay_ns = 0.0;

  void validate() const;
};

struct OnInterval {
  double start_s;
  double end_s;
};

/// Ground truth recorded alongside a simulated stream.
struct SimulationTruth {
  std::optional<double> bleach_time_s;
  std::vector<OnInterval> on_intervals;
  std::uint64_t signal_detections = 0;  ///< before dead time
  std::uint64_t dark_detections = 0;    ///< before dead time
  std::uint64_t dead_time_losses = 0;
};

struct SimulationResult {
  TagStream stream;
  SimulationTruth truth;
};

/// Excitation probability per pulse (pulsed) or fraction of the maximum
/// emission rate (cw): P / (P + P_sat), clamped to [0, 1].
[[nodiscard]] double excitation_probability(double power_nw, double p_sat_nw);

/// On-intervals of the blinking process over [0, duration_s). The initial
/// state is drawn from the stationary on-fraction.
[[nodiscard]] std::vector<OnInterval> blinking_on_intervals(const BlinkingModel& model,
                                                            double duration_s,
                                                            std::mt19937_64& rng);

/// Lower dwell bound of the truncated power law whose mean equals `mean_s`.
[[nodiscard]] double powerlaw_min_dwell(double mean_s, double exponent, double cap_s);

[[nodiscard]] SimulationResult simulate_stream_detailed(const EmitterModel& emitter,
                                                        const ExcitationModel& excitation,
                                                        const DetectionChain& chain,
                                                        double duration_s, std::uint64_t seed);

/// Deterministic for a fixed seed: identical inputs give identical tags.
[[nodiscard]] TagStream simulate_stream(const EmitterModel& emitter, const ExcitationModel& excitation,
                                        const DetectionChain& chain, double duration_s,
                                        std::uint64_t seed);

/// Non-paralyzable gate over the merged stream: a tag is kept iff it arrives
/// at least `dead_time_ns` after the last kept tag. Input must be sorted.
[[nodiscard]] std::vector<TimeTag> apply_router_dead_time(std::span<const TimeTag> merged,
                                                          double dead_time_ns);

/// Detected counts per bin for the stream simulate_stream would produce with
/// the same arguments. The last bin may be partial.
[[nodiscard]] std::vector<std::uint64_t> simulate_intensity_trace(const EmitterModel& emitter,
                                                                  const ExcitationModel& excitation,
                                                                  const DetectionChain& chain,
                                                                  double bin_ms, double duration_s,
                                                                  std::uint64_t seed);

[[nodiscard]] std::vector<std::uint64_t> bin_counts(const TagStream& stream, double bin_ms);

/// Gaussian emission line samples (sigma = FWHM / 2.3548).
[[nodiscard]] std::vector<double> simulate_spectrum(const EmitterModel& emitter, std::size_t n_photons,
                                                    std::uint64_t seed);

/// Photon counts behind the six analyzer settings H, V, D, A, R, L for a
/// source with the emitter's degree of linear polarization.
[[nodiscard]] std::array<double, 6> simulate_polarimetry(const EmitterModel& emitter,
                                                         std::uint64_t photons_per_setting,
                                                         std::uint64_t seed);

/// Two independent Poisson channels (uncorrelated light plus dark counts).
[[nodiscard]] TagStream simulate_poisson_stream(std::array<double, 2> rates_cps, double duration_s,
                                                std::uint64_t seed);

/// Attenuated pulsed laser: per pulse each channel clicks independently with
/// probability 1 - exp(-mu * eta_c). Used as the coherent-light reference.
[[nodiscard]] TagStream simulate_laser_stream(double mean_photons_per_pulse,
                                              const ExcitationModel& excitation,
                                              const DetectionChain& chain, double duration_s,
                                              std::uint64_t seed);

}  // namespace nfw
