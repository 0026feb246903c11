#pragma once

#include <cstdint>
#include <vector>

#include "nfw/correlator.hpp"
#include "nfw/photostats.hpp"
#include "nfw/scenario.hpp"

namespace nfw::repro {

/// Perovskite nanocube under 405 nm pulsed excitation, free-space collection.
[[nodiscard]] Scenario fig4_scenario();
/// Dot-in-rod nanocrystal on a 300 nm nanofiber, collected through the fiber.
[[nodiscard]] Scenario fig6_scenario();
/// No blinking, no dark counts, unit efficiencies, no dead time.
[[nodiscard]] Scenario ideal_scenario();

/// Fraction of the emission guided to one fiber end: half the two-way
/// coupling estimate for the given fiber at the emitter's wavelength.
[[nodiscard]] double fiber_collection_efficiency(double radius_nm, double wavelength_nm, double offset_nm);

struct PulsedRun {
  G2Result g2;
  std::size_t tags_ch0 = 0;
  std::size_t tags_ch1 = 0;
  double simulate_seconds = 0.0;
  double analyze_seconds = 0.0;
};

[[nodiscard]] PulsedRun run_pulsed(const Scenario& scenario, unsigned threads = 1);

/// The blinking emitter and the same emitter with blinking switched off.
struct Fig4Report {
  PulsedRun blinking;
  PulsedRun steady;
};

[[nodiscard]] Fig4Report run_fig4(unsigned threads = 1);

/// Normalized side peak |k| <= k_max of a pulsed run that deviates most from
/// `reference`, in units of its combined counting error.
struct SidePeakCheck {
  std::int64_t k_max = 5;
  std::size_t peaks = 0;
  double min_area = 0.0;
  double max_abs_z = 0.0;  ///< |area - 1| / sigma, worst peak
};

[[nodiscard]] SidePeakCheck side_peaks(const G2Result& g2, std::int64_t k_max);

struct SaturationStudy {
  std::vector<double> powers_nw{5, 7, 10, 14, 21, 29, 42, 59, 84, 120, 171, 243, 347, 493, 702, 1000};
  std::size_t repeats = 10;
  double window_s = 1.0;
  double noise = 0.05;  ///< relative Gaussian noise per repeat
};

/// Saturation series from the emitter simulator: each repeat is a short
/// intensity window of an independently seeded, blinking emitter.
[[nodiscard]] std::vector<SaturationPoint> saturation_dataset(const Scenario& scenario, const SaturationStudy& study,
                                                              std::uint64_t seed);

/// Scenario used for saturation curves: slow blinking, no dead time.
[[nodiscard]] Scenario saturation_scenario();

}  // namespace nfw::repro
