#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "nfw/correlator.hpp"
#include "nfw/emitter_sim.hpp"

namespace nfw {

struct AnalysisConfig {
  Picoseconds bin_width = 512;
  LongDelayWindow long_delay;
  std::optional<double> dead_time_ns;  ///< defaults to the chain's router dead time
  std::optional<double> peak_window_ns;
};

/// Everything needed to regenerate a stream and its analysis.
struct Scenario {
  std::string name = "unnamed";
  EmitterModel emitter;
  ExcitationModel excitation;
  DetectionChain chain;
  AnalysisConfig analysis;
  double duration_s = 1.0;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

/// Flat `key = value` lines grouped under [emitter], [blinking], [excitation],
/// [chain] and [analysis]; top-level keys are name, seed and duration. `#`
/// starts a comment. Unknown keys and repeated keys are errors.
[[nodiscard]] Scenario parse_scenario(std::string_view text, std::string_view origin = "<scenario>");
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path);

/// Canonical text form; parse_scenario(format_scenario(s)) == s field-wise.
[[nodiscard]] std::string format_scenario(const Scenario& scenario);

[[nodiscard]] PulsedAnalysisParams analysis_params(const Scenario& scenario);

}  // namespace nfw
