#include <string>

#include "doctest.h"
#include "nfw/errors.hpp"
#include "nfw/repro.hpp"
#include "nfw/scenario.hpp"

using namespace nfw;

namespace {

std::string error_of(const std::string& text) {
  try {
    (void)parse_scenario(text, "test.cfg");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

std::string shipped(const char* name) { return std::string(NFW_SCENARIO_DIR) + "/" + name; }

}  // namespace

TEST_CASE("minimal file takes the defaults") {
  const Scenario s = parse_scenario("");
  const Scenario d;
  CHECK(format_scenario(s) == format_scenario(d));
  CHECK(s.excitation.repetition_period_ns == 200.0);
  CHECK_FALSE(s.seed.has_value());
  CHECK(parse_scenario("seed = 5\n").seed == 5u);
}

TEST_CASE("values, units comments and lists") {
  const Scenario s = parse_scenario(R"(
# leading comment
name = demo
duration = 2.5  # s

[emitter]
lifetime = 7
bleach_time = none

[blinking]
kind = powerlaw
mean_on = 0.01

[chain]
efficiency = 0.5, 0.25
dark_rate = 100
channel_delay = 1150

[excitation]
mode = cw
)");
  CHECK(s.name == "demo");
  CHECK(s.duration_s == 2.5);
  CHECK(s.emitter.lifetime_ns == 7.0);
  CHECK_FALSE(s.emitter.bleach_time_s.has_value());
  CHECK(s.emitter.blinking.kind == BlinkingKind::two_state_powerlaw);
  CHECK(s.chain.efficiency[0] == 0.5);
  CHECK(s.chain.efficiency[1] == 0.25);
  CHECK(s.chain.dark_rate_cps[0] == 100.0);
  CHECK(s.chain.dark_rate_cps[1] == 100.0);
  CHECK(s.excitation.mode == ExcitationMode::cw);
}

TEST_CASE("parse errors carry origin, line and key") {
  CHECK(error_of("[emitter]\np_sat = -1\n").find("p_sat") != std::string::npos);
  CHECK(error_of("[emitter]\nfoo = 1\n").find("foo") != std::string::npos);
  CHECK(error_of("[emitter]\nfoo = 1\n").find("test.cfg:2") != std::string::npos);
  CHECK(error_of("[nope]\n").find("test.cfg:1") != std::string::npos);
  const auto dup = error_of("[chain]\ndark_rate = 1\ndark_rate = 2\n");
  CHECK(dup.find("test.cfg:3") != std::string::npos);
  CHECK(dup.find("dark_rate") != std::string::npos);
  CHECK(error_of("[emitter]\nlifetime =\n").find("lifetime") != std::string::npos);
  CHECK(error_of("[emitter]\nlifetime = fast\n").find("test.cfg:2") != std::string::npos);
  CHECK(error_of("[blinking]\nkind = sometimes\n").find("kind") != std::string::npos);
  CHECK(error_of("just words\n").find("test.cfg:1") != std::string::npos);
  CHECK(error_of("[chain]\nefficiency = 1.5\n").find("efficiency") != std::string::npos);
  CHECK(error_of("seed = -4\n").find("seed") != std::string::npos);
  CHECK(error_of("duration = 0\n").find("duration") != std::string::npos);
}

TEST_CASE("canonical text round-trips") {
  for (const Scenario& s : {repro::fig4_scenario(), repro::fig6_scenario(), repro::ideal_scenario(),
                            repro::saturation_scenario(), Scenario{}}) {
    const std::string text = format_scenario(s);
    CHECK(format_scenario(parse_scenario(text)) == text);
  }
  Scenario odd = repro::fig6_scenario();
  odd.emitter.lifetime_ns = 0.1 + 0.2;
  odd.chain.efficiency = {1.0 / 3.0, 2.0 / 7.0};
  odd.analysis.dead_time_ns = 12.5;
  odd.analysis.peak_window_ns = 33.0;
  const Scenario back = parse_scenario(format_scenario(odd));
  CHECK(back.emitter.lifetime_ns == odd.emitter.lifetime_ns);
  CHECK(back.chain.efficiency == odd.chain.efficiency);
  CHECK(back.analysis.dead_time_ns == odd.analysis.dead_time_ns);
  CHECK(back.chain.collection_efficiency == odd.chain.collection_efficiency);
}

TEST_CASE("shipped scenario files match the built-in scenarios") {
  const Scenario fig4 = load_scenario(shipped("paper_fig4.cfg"));
  CHECK(fig4.excitation.repetition_period_ns == 200.0);
  CHECK(fig4.chain.router_dead_time_ns == 100.0);
  CHECK(format_scenario(fig4) == format_scenario(repro::fig4_scenario()));
  CHECK(format_scenario(load_scenario(shipped("paper_fig6.cfg"))) == format_scenario(repro::fig6_scenario()));
  CHECK(format_scenario(load_scenario(shipped("ideal.cfg"))) == format_scenario(repro::ideal_scenario()));
  CHECK_THROWS_AS((void)load_scenario(shipped("missing.cfg")), IoError);
}

TEST_CASE("analysis parameters derive from the scenario") {
  const auto p = analysis_params(repro::fig4_scenario());
  CHECK(p.comb.period_ns == 200.0);
  CHECK(p.comb.zero_delay_ns == 1150.0);
  CHECK(p.dead_time_ns == 100.0);
  REQUIRE(p.lifetime_ns.has_value());
  CHECK(*p.lifetime_ns == 5.0);

  Scenario s = repro::fig4_scenario();
  s.analysis.dead_time_ns = 120.0;
  s.analysis.bin_width = 256;
  const auto q = analysis_params(s);
  CHECK(q.dead_time_ns == 120.0);
  CHECK(q.bin_width == 256);
}
