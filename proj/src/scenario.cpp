#include "nfw/scenario.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "nfw/errors.hpp"
#include "nfw/file_io.hpp"

namespace nfw {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class Parser {
 public:
  Parser(std::string_view origin, std::size_t line, std::string key, std::string_view value)
      : origin_(origin), line_(line), key_(std::move(key)), value_(value) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw ValidationError(std::string(origin_) + ":" + std::to_string(line_) + ": " + key_ + ": " + why);
  }

  double number() const { return number(value_); }

  double number(std::string_view v) const {
    double out = 0.0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
      fail("expected a number, got '" + std::string(v) + "'");
    }
    return out;
  }

  std::uint64_t integer() const {
    std::uint64_t out = 0;
    const auto r = std::from_chars(value_.data(), value_.data() + value_.size(), out);
    if (r.ec != std::errc{} || r.ptr != value_.data() + value_.size()) {
      fail("expected a non-negative integer, got '" + std::string(value_) + "'");
    }
    return out;
  }

  /// One value (applied to both channels) or two comma-separated values.
  std::array<double, 2> pair() const {
    const auto comma = value_.find(',');
    if (comma == std::string_view::npos) {
      const double v = number();
      return {v, v};
    }
    return {number(trim(value_.substr(0, comma))), number(trim(value_.substr(comma + 1)))};
  }

  std::optional<double> optional_number() const {
    if (value_ == "none") return std::nullopt;
    return number();
  }

  std::string_view text() const { return value_; }

 private:
  std::string_view origin_;
  std::size_t line_;
  std::string key_;
  std::string_view value_;
};

using Setter = std::function<void(Scenario&, const Parser&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"name", [](Scenario& s, const Parser& p) { s.name = std::string(p.text()); }},
      {"seed", [](Scenario& s, const Parser& p) { s.seed = p.integer(); }},
      {"duration", [](Scenario& s, const Parser& p) { s.duration_s = p.number(); }},

      {"emitter.lifetime", [](Scenario& s, const Parser& p) { s.emitter.lifetime_ns = p.number(); }},
      {"emitter.quantum_yield", [](Scenario& s, const Parser& p) { s.emitter.quantum_yield = p.number(); }},
      {"emitter.p_sat", [](Scenario& s, const Parser& p) { s.emitter.p_sat_nw = p.number(); }},
      {"emitter.bleach_time", [](Scenario& s, const Parser& p) { s.emitter.bleach_time_s = p.optional_number(); }},
      {"emitter.bleach_protection_factor",
       [](Scenario& s, const Parser& p) { s.emitter.bleach_protection_factor = p.number(); }},
      {"emitter.emission_center", [](Scenario& s, const Parser& p) { s.emitter.emission_center_nm = p.number(); }},
      {"emitter.emission_fwhm", [](Scenario& s, const Parser& p) { s.emitter.emission_fwhm_nm = p.number(); }},
      {"emitter.polarization_degree",
       [](Scenario& s, const Parser& p) { s.emitter.polarization.degree = p.number(); }},
      {"emitter.polarization_axis",
       [](Scenario& s, const Parser& p) { s.emitter.polarization.axis_deg = p.number(); }},

      {"blinking.kind",
       [](Scenario& s, const Parser& p) {
         const auto v = p.text();
         if (v == "none") s.emitter.blinking.kind = BlinkingKind::none;
         else if (v == "exponential") s.emitter.blinking.kind = BlinkingKind::two_state_exponential;
         else if (v == "powerlaw") s.emitter.blinking.kind = BlinkingKind::two_state_powerlaw;
         else p.fail("expected none, exponential or powerlaw");
       }},
      {"blinking.mean_on", [](Scenario& s, const Parser& p) { s.emitter.blinking.mean_on_s = p.number(); }},
      {"blinking.mean_off", [](Scenario& s, const Parser& p) { s.emitter.blinking.mean_off_s = p.number(); }},
      {"blinking.powerlaw_exponent",
       [](Scenario& s, const Parser& p) { s.emitter.blinking.powerlaw_exponent = p.number(); }},
      {"blinking.dwell_cap", [](Scenario& s, const Parser& p) { s.emitter.blinking.dwell_cap_s = p.number(); }},

      {"excitation.mode",
       [](Scenario& s, const Parser& p) {
         if (p.text() == "pulsed") s.excitation.mode = ExcitationMode::pulsed;
         else if (p.text() == "cw") s.excitation.mode = ExcitationMode::cw;
         else p.fail("expected pulsed or cw");
       }},
      {"excitation.repetition_period",
       [](Scenario& s, const Parser& p) { s.excitation.repetition_period_ns = p.number(); }},
      {"excitation.power", [](Scenario& s, const Parser& p) { s.excitation.power_nw = p.number(); }},
      {"excitation.wavelength", [](Scenario& s, const Parser& p) { s.excitation.wavelength_nm = p.number(); }},

      {"chain.splitter_ratio", [](Scenario& s, const Parser& p) { s.chain.splitter_ratio = p.number(); }},
      {"chain.efficiency", [](Scenario& s, const Parser& p) { s.chain.efficiency = p.pair(); }},
      {"chain.dark_rate", [](Scenario& s, const Parser& p) { s.chain.dark_rate_cps = p.pair(); }},
      {"chain.router_dead_time", [](Scenario& s, const Parser& p) { s.chain.router_dead_time_ns = p.number(); }},
      {"chain.timing_jitter", [](Scenario& s, const Parser& p) { s.chain.timing_jitter_ps = p.number(); }},
      {"chain.collection_efficiency",
       [](Scenario& s, const Parser& p) { s.chain.collection_efficiency = p.number(); }},
      {"chain.channel_delay", [](Scenario& s, const Parser& p) { s.chain.channel_delay_ns = p.number(); }},

      {"analysis.bin_width",
       [](Scenario& s, const Parser& p) {
         const double v = p.number();
         if (!(v >= 1.0) || v != std::floor(v)) p.fail("must be a positive whole number of ps");
         s.analysis.bin_width = static_cast<Picoseconds>(v);
       }},
      {"analysis.long_delay_lo", [](Scenario& s, const Parser& p) { s.analysis.long_delay.lo_ns = p.number(); }},
      {"analysis.long_delay_hi", [](Scenario& s, const Parser& p) { s.analysis.long_delay.hi_ns = p.number(); }},
      {"analysis.dead_time", [](Scenario& s, const Parser& p) { s.analysis.dead_time_ns = p.optional_number(); }},
      {"analysis.peak_window",
       [](Scenario& s, const Parser& p) { s.analysis.peak_window_ns = p.optional_number(); }},
  };
  return table;
}

}  // namespace

void Scenario::validate() const {
  emitter.validate();
  excitation.validate();
  chain.validate();
  if (!(duration_s > 0.0)) throw ValidationError("duration: must be > 0");
  if (!(analysis.long_delay.lo_ns >= 0.0 && analysis.long_delay.hi_ns > analysis.long_delay.lo_ns)) {
    throw ValidationError("analysis.long_delay: need 0 <= lo < hi");
  }
  if (analysis.dead_time_ns && !(*analysis.dead_time_ns >= 0.0)) {
    throw ValidationError("analysis.dead_time: must be >= 0");
  }
  if (analysis.peak_window_ns && !(*analysis.peak_window_ns > 0.0)) {
    throw ValidationError("analysis.peak_window: must be > 0");
  }
}

Scenario parse_scenario(std::string_view text, std::string_view origin) {
  Scenario s;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "emitter" && section != "blinking" && section != "excitation" && section != "chain" &&
          section != "analysis") {
        throw ValidationError(where() + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(where() + "expected key = value");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = setters().find(full);
    if (it == setters().end()) throw ValidationError(where() + "unknown key '" + full + "'");
    if (!seen.insert(full).second) throw ValidationError(where() + "duplicate key '" + full + "'");
    if (value.empty()) throw ValidationError(where() + full + ": missing value");
    it->second(s, Parser(origin, line_no, full, value));
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return parse_scenario(text, path.string());
}

std::string format_scenario(const Scenario& s) {
  std::ostringstream o;
  const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("none"); };
  const char* blink = s.emitter.blinking.kind == BlinkingKind::none                    ? "none"
                      : s.emitter.blinking.kind == BlinkingKind::two_state_exponential ? "exponential"
                                                                                       : "powerlaw";
  o << "name = " << s.name << "\n";
  if (s.seed) o << "seed = " << *s.seed << "\n";
  o << "duration = " << fmt(s.duration_s) << "  # s\n\n";
  o << "[emitter]\n"
    << "lifetime = " << fmt(s.emitter.lifetime_ns) << "  # ns\n"
    << "quantum_yield = " << fmt(s.emitter.quantum_yield) << "\n"
    << "p_sat = " << fmt(s.emitter.p_sat_nw) << "  # nW\n"
    << "bleach_time = " << opt(s.emitter.bleach_time_s) << "  # s\n"
    << "bleach_protection_factor = " << fmt(s.emitter.bleach_protection_factor) << "\n"
    << "emission_center = " << fmt(s.emitter.emission_center_nm) << "  # nm\n"
    << "emission_fwhm = " << fmt(s.emitter.emission_fwhm_nm) << "  # nm\n"
    << "polarization_degree = " << fmt(s.emitter.polarization.degree) << "\n"
    << "polarization_axis = " << fmt(s.emitter.polarization.axis_deg) << "  # deg\n\n";
  o << "[blinking]\n"
    << "kind = " << blink << "\n"
    << "mean_on = " << fmt(s.emitter.blinking.mean_on_s) << "  # s\n"
    << "mean_off = " << fmt(s.emitter.blinking.mean_off_s) << "  # s\n"
    << "powerlaw_exponent = " << fmt(s.emitter.blinking.powerlaw_exponent) << "\n"
    << "dwell_cap = " << fmt(s.emitter.blinking.dwell_cap_s) << "  # s\n\n";
  o << "[excitation]\n"
    << "mode = " << (s.excitation.mode == ExcitationMode::pulsed ? "pulsed" : "cw") << "\n"
    << "repetition_period = " << fmt(s.excitation.repetition_period_ns) << "  # ns\n"
    << "power = " << fmt(s.excitation.power_nw) << "  # nW\n"
    << "wavelength = " << fmt(s.excitation.wavelength_nm) << "  # nm\n\n";
  o << "[chain]\n"
    << "splitter_ratio = " << fmt(s.chain.splitter_ratio) << "\n"
    << "efficiency = " << fmt(s.chain.efficiency[0]) << ", " << fmt(s.chain.efficiency[1]) << "\n"
    << "dark_rate = " << fmt(s.chain.dark_rate_cps[0]) << ", " << fmt(s.chain.dark_rate_cps[1]) << "  # counts/s\n"
    << "router_dead_time = " << fmt(s.chain.router_dead_time_ns) << "  # ns\n"
    << "timing_jitter = " << fmt(s.chain.timing_jitter_ps) << "  # ps\n"
    << "collection_efficiency = " << fmt(s.chain.collection_efficiency) << "\n"
    << "channel_delay = " << fmt(s.chain.channel_delay_ns) << "  # ns\n\n";
  o << "[analysis]\n"
    << "bin_width = " << s.analysis.bin_width << "  # ps\n"
    << "long_delay_lo = " << fmt(s.analysis.long_delay.lo_ns) << "  # ns\n"
    << "long_delay_hi = " << fmt(s.analysis.long_delay.hi_ns) << "  # ns\n"
    << "dead_time = " << opt(s.analysis.dead_time_ns) << "  # ns\n"
    << "peak_window = " << opt(s.analysis.peak_window_ns) << "  # ns\n";
  return o.str();
}

PulsedAnalysisParams analysis_params(const Scenario& s) {
  PulsedAnalysisParams p;
  p.bin_width = s.analysis.bin_width;
  p.comb = PeakComb{s.excitation.repetition_period_ns, s.chain.channel_delay_ns};
  p.dead_time_ns = s.analysis.dead_time_ns.value_or(s.chain.router_dead_time_ns);
  p.lifetime_ns = s.emitter.lifetime_ns;
  p.peak_window_ns = s.analysis.peak_window_ns;
  p.long_delay = s.analysis.long_delay;
  return p;
}

}  // namespace nfw
