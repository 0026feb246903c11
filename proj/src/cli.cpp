#include "nfw/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "nfw/correlator.hpp"
#include "nfw/emitter_sim.hpp"
#include "nfw/errors.hpp"
#include "nfw/fiber_design.hpp"
#include "nfw/file_io.hpp"
#include "nfw/photostats.hpp"
#include "nfw/repro.hpp"
#include "nfw/scenario.hpp"
#include "nfw/svg_plot.hpp"
#include "nfw/timetag.hpp"

namespace nfw::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

unsigned thread_count() {
  const char* env = std::getenv("NTAG_THREADS");
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (env == nullptr || *env == '\0') return hw;
  unsigned v = 0;
  const std::string_view s(env);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size() || v == 0) {
    throw UsageError("NTAG_THREADS must be a positive integer, got '" + std::string(s) + "'");
  }
  return std::min(v, hw);
}

std::string as_text(const std::vector<std::byte>& bytes) {
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

TagStream load_tags(const fs::path& path) {
  const auto bytes = read_file(path);
  const bool binary = bytes.size() >= 4 && std::memcmp(bytes.data(), "NTAG", 4) == 0;
  return read_tags(bytes, binary ? TagFormat::binary : TagFormat::csv);
}

/// Rows of a numeric CSV; `#` comments and one optional header line skipped.
std::vector<std::vector<double>> read_numeric_csv(const fs::path& path, std::size_t columns) {
  const std::string text = as_text(read_file(path));
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> row;
    std::string_view rest(line);
    bool numeric = true;
    while (true) {
      const auto comma = rest.find(',');
      std::string_view cell = rest.substr(0, comma);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
      double v = 0.0;
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size()) numeric = false;
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!numeric && header_allowed) {
      header_allowed = false;
      continue;
    }
    header_allowed = false;
    if (!numeric || row.size() != columns) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                            " numeric column(s)");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double resolve_n1(const std::string& spec, double wavelength_nm) {
  if (spec == "auto") return fiber::sellmeier_silica(wavelength_nm);
  double v = 0.0;
  const auto r = std::from_chars(spec.data(), spec.data() + spec.size(), v);
  if (r.ec != std::errc{} || r.ptr != spec.data() + spec.size()) throw UsageError("--n1 must be 'auto' or a number");
  return v;
}

std::string config_comment(const Scenario& s) {
  std::string out;
  std::istringstream in(format_scenario(s));
  std::string line;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

/// Resolved scenario as flat "section.key" -> value strings.
json config_json(const Scenario& s) {
  json j = json::object();
  std::istringstream in(format_scenario(s));
  std::string line;
  std::string section;
  const auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(' ');
    const auto e = v.find_last_not_of(' ');
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line.substr(1, line.size() - 2) + ".";
      continue;
    }
    const auto eq = line.find('=');
    if (eq != std::string::npos) j[section + trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return j;
}

json peaks_json(const G2Result& r) {
  return {{"g2_zero", r.g2_zero},
          {"g2_zero_raw", r.g2_zero_raw},
          {"g2_zero_sigma", r.g2_zero_sigma},
          {"verdict", r.classification.verdict == Verdict::single_photon ? "single_photon" : "not_single_photon"},
          {"quality", r.classification.quality == Quality::high_purity ? "high_purity" : "standard"},
          {"background_per_bin", r.background.per_bin},
          {"background_far_per_bin", r.background_far.per_bin},
          {"normalization", {{"lo_ns", r.long_delay.lo_ns}, {"hi_ns", r.long_delay.hi_ns},
                             {"factor", r.normalization_factor}, {"sigma", r.normalization_sigma}}},
          {"peak_window_ns", r.peak_window_ns},
          {"excised_bins", r.excised_region ? r.excised_region->masked_bins : 0}};
}

std::string g2_csv(const G2Result& r, const std::string& header) {
  std::string out = header + "tau_ps,raw,masked,normalized\n";
  for (std::size_t i = 0; i < r.near.size(); ++i) {
    out += std::to_string(r.near.tau(i)) + "," + std::to_string(r.near.bins[i]) + "," +
           (r.near.is_masked(i) ? "1" : "0") + "," + num(r.normalized[i]) + "\n";
  }
  return out;
}

std::string peaks_csv(const G2Result& r) {
  std::string out = "k,tau_ns,area,sigma,raw,n_bins,masked\n";
  for (const auto& p : r.normalized_peaks) {
    out += std::to_string(p.k) + "," + num(static_cast<double>(p.center) / 1e3) + "," + num(p.area) + "," +
           num(p.sigma) + "," + std::to_string(p.raw) + "," + std::to_string(p.n_bins) + "," +
           (p.masked ? "1" : "0") + "\n";
  }
  return out;
}

std::string g2_svg(const G2Result& r, const std::string& title) {
  PlotSeries s;
  s.label = "g2(tau)";
  for (std::size_t i = 0; i < r.near.size(); ++i) {
    s.x.push_back(static_cast<double>(r.near.tau(i)) / 1e3);
    s.y.push_back(r.normalized[i]);
  }
  PlotSpec spec;
  spec.title = title;
  spec.x_label = "delay (ns)";
  spec.y_label = "g2";
  spec.series.push_back(std::move(s));
  spec.guides.push_back({0.5, "0.5"});
  spec.y_min = 0.0;
  return render_svg(spec);
}

struct Outputs {
  json files = json::array();
  void write(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, text);
    files.push_back(path.string());
  }
};

// ---------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  std::string out;
  std::string format = "binary";
};

json cmd_simulate(const SimulateOpts& o, Outputs& files) {
  Scenario s = load_scenario(o.scenario);
  if (o.seed) s.seed = *o.seed;
  if (o.duration) s.duration_s = *o.duration;
  if (!s.seed) throw UsageError("simulate needs a seed: pass --seed or set seed in the scenario");
  s.validate();
  const auto res = simulate_stream_detailed(s.emitter, s.excitation, s.chain, s.duration_s, *s.seed);
  const auto fmt = o.format == "csv" ? TagFormat::csv : TagFormat::binary;
  const auto bytes = write_tags(res.stream, fmt);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, bytes);
  files.files.push_back(out.string());
  files.write(out.string() + ".cfg", "# resolved configuration for " + out.filename().string() + "\n" +
                                         format_scenario(s));
  const auto ch = split_channels(res.stream);
  return {{"command", "simulate"},
          {"seed", *s.seed},
          {"duration_s", s.duration_s},
          {"tags", res.stream.size()},
          {"ch0", ch.ch0.size()},
          {"ch1", ch.ch1.size()},
          {"signal_detections", res.truth.signal_detections},
          {"dark_detections", res.truth.dark_detections},
          {"dead_time_losses", res.truth.dead_time_losses},
          {"config", config_json(s)}};
}

// ---------------------------------------------------------------- correlate

struct CorrelateOpts {
  std::string in;
  std::optional<std::string> scenario;
  std::string mode = "pulsed";
  std::optional<std::int64_t> bin_ps;
  std::optional<double> period_ns, zero_delay_ns, dead_time_ns, lifetime_ns, window_ns, lo_ns, hi_ns, max_tau_ns;
  std::optional<std::string> out, peaks_out, svg;
};

json cmd_correlate(const CorrelateOpts& o, unsigned threads, Outputs& files) {
  const bool cw = o.mode == "cw";
  if (cw && (o.period_ns || o.zero_delay_ns || o.window_ns || o.lo_ns || o.hi_ns || o.lifetime_ns || o.peaks_out)) {
    throw UsageError("conflicting options: period, zero-delay, window, lifetime, long-delay and peaks-out apply "
                     "only to --mode pulsed");
  }
  if (!cw && o.max_tau_ns) throw UsageError("conflicting options: --max-tau-ns applies only to --mode cw");

  const TagStream stream = load_tags(o.in);
  std::optional<Scenario> scen;
  std::string config_source = "defaults";
  if (o.scenario) {
    scen = load_scenario(*o.scenario);
    config_source = *o.scenario;
  } else if (fs::exists(o.in + ".cfg")) {
    scen = load_scenario(o.in + ".cfg");
    config_source = o.in + ".cfg";
  }
  PulsedAnalysisParams p = scen ? analysis_params(*scen) : PulsedAnalysisParams{};
  if (o.bin_ps) {
    if (*o.bin_ps < 1) throw ValidationError("bin width must be >= 1 ps");
    p.bin_width = *o.bin_ps;
  }
  if (o.period_ns) p.comb.period_ns = *o.period_ns;
  if (o.zero_delay_ns) p.comb.zero_delay_ns = *o.zero_delay_ns;
  if (o.dead_time_ns) p.dead_time_ns = *o.dead_time_ns;
  if (o.lifetime_ns) p.lifetime_ns = *o.lifetime_ns;
  if (o.window_ns) p.peak_window_ns = *o.window_ns;
  if (o.lo_ns) p.long_delay.lo_ns = *o.lo_ns;
  if (o.hi_ns) p.long_delay.hi_ns = *o.hi_ns;
  p.threads = threads;

  const auto ch = split_channels(stream);
  const std::string out_csv = o.out.value_or(o.in + ".g2.csv");
  std::string header = "# input " + o.in + "\n# analysis configuration from " + config_source + "\n";
  header += "# bin_width_ps " + std::to_string(p.bin_width) + "\n# dead_time_ns " + num(p.dead_time_ns) + "\n";
  if (scen) header += config_comment(*scen);

  json summary = {{"command", "correlate"}, {"mode", o.mode}, {"n_ch0", ch.ch0.size()}, {"n_ch1", ch.ch1.size()},
                  {"bin_width_ps", p.bin_width}, {"dead_time_ns", p.dead_time_ns}, {"config", config_source}};
  if (cw) {
    const auto max_tau = static_cast<Picoseconds>(std::llround(o.max_tau_ns.value_or(1000.0) * 1e3));
    auto hist = cross_correlate(ch.ch0, ch.ch1, p.bin_width, max_tau, threads);
    hist.duration = stream.meta().duration;
    hist = excise_dead_time_region(hist, p.dead_time_ns);
    const auto g2 = normalize_cw(hist);
    std::string csv = header + "tau_ps,raw,masked,normalized\n";
    PlotSeries s;
    for (std::size_t i = 0; i < hist.size(); ++i) {
      csv += std::to_string(hist.tau(i)) + "," + std::to_string(hist.bins[i]) + "," + (hist.is_masked(i) ? "1" : "0") +
             "," + num(g2[i]) + "\n";
      s.x.push_back(static_cast<double>(hist.tau(i)) / 1e3);
      s.y.push_back(g2[i]);
    }
    files.write(out_csv, csv);
    if (o.svg) {
      PlotSpec spec{"g2 (cw)", "delay (ns)", "g2", {s}, {{0.5, "0.5"}}, 0.0, std::nullopt};
      files.write(*o.svg, render_svg(spec));
    }
    double center = std::nan("");
    for (std::size_t i = 0; i < hist.size(); ++i) {
      if (hist.tau(i) == 0) center = g2[i];
    }
    summary["g2_zero_bin"] = std::isfinite(center) ? json(center) : json(nullptr);
    summary["excised_bins"] = hist.excised ? hist.excised->masked_bins : 0;
    return summary;
  }

  const G2Result r = analyze_pulsed(ch.ch0, ch.ch1, stream.meta().duration, p);
  files.write(out_csv, g2_csv(r, header));
  if (o.peaks_out) files.write(*o.peaks_out, header + peaks_csv(r));
  if (o.svg) files.write(*o.svg, g2_svg(r, "g2 (pulsed)"));
  summary.update(peaks_json(r));
  summary["period_ns"] = p.comb.period_ns;
  summary["zero_delay_ns"] = p.comb.zero_delay_ns;
  return summary;
}

// ---------------------------------------------------------------- saturation

struct SaturationOpts {
  std::optional<std::string> in;
  bool simulate = false;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::size_t keep = 3;
  bool no_filter = false;
  std::string weighting = "relative";
  std::optional<std::string> out, data_out, svg;
};

std::vector<SaturationPoint> group_by_power(const std::vector<std::vector<double>>& rows) {
  std::map<double, std::vector<double>> grouped;
  for (const auto& r : rows) grouped[r[0]].push_back(r[1]);
  std::vector<SaturationPoint> pts;
  for (auto& [p, v] : grouped) pts.push_back({p, std::move(v)});
  return pts;
}

json cmd_saturation(const SaturationOpts& o, Outputs& files) {
  if (o.in.has_value() == o.simulate) throw UsageError("saturation needs exactly one of --in or --simulate");
  std::vector<SaturationPoint> pts;
  std::string header;
  if (o.simulate) {
    Scenario s = o.scenario ? load_scenario(*o.scenario) : repro::saturation_scenario();
    if (o.seed) s.seed = *o.seed;
    if (!s.seed) throw UsageError("--simulate needs a seed");
    pts = repro::saturation_dataset(s, {}, *s.seed);
    header = config_comment(s);
    if (o.data_out) {
      std::string csv = header + "power_nw,rate_cps\n";
      for (const auto& p : pts) {
        for (double v : p.repeats) csv += num(p.power_nw) + "," + num(v) + "\n";
      }
      files.write(*o.data_out, csv);
    }
  } else {
    pts = group_by_power(read_numeric_csv(*o.in, 2));
    header = "# input " + *o.in + "\n";
  }
  SaturationFitOptions opt;
  opt.keep = o.keep;
  opt.filter_blinking = !o.no_filter;
  opt.weighting = o.weighting == "absolute" ? SaturationWeighting::absolute : SaturationWeighting::relative;
  const SaturationFit fit = fit_saturation(pts, opt);

  if (o.out || o.svg) {
    PlotSeries data{{}, {}, opt.filter_blinking ? "filtered data" : "mean data", "#444444", true};
    PlotSeries model{{}, {}, "fit", "#c0392b", false};
    std::string csv = header + "power_nw,intensity_cps,model_cps\n";
    for (const auto& p : pts) {
      const double v = opt.filter_blinking ? blinking_filter(p.repeats, opt.keep)
                                           : std::accumulate(p.repeats.begin(), p.repeats.end(), 0.0) /
                                                 static_cast<double>(p.repeats.size());
      const double m = saturation_model(p.power_nw, fit.i_inf, fit.p_sat_nw);
      csv += num(p.power_nw) + "," + num(v) + "," + num(m) + "\n";
      data.x.push_back(p.power_nw);
      data.y.push_back(v);
    }
    const double pmax = pts.back().power_nw;
    for (int i = 0; i <= 200; ++i) {
      const double pw = pmax * i / 200.0;
      model.x.push_back(pw);
      model.y.push_back(saturation_model(pw, fit.i_inf, fit.p_sat_nw));
    }
    if (o.out) files.write(*o.out, csv);
    if (o.svg) {
      PlotSpec spec{"saturation", "power (nW)", "intensity (counts/s)", {data, model}, {}, 0.0, std::nullopt};
      files.write(*o.svg, render_svg(spec));
    }
  }
  return {{"command", "saturation"}, {"p_sat_nw", fit.p_sat_nw}, {"i_inf_cps", fit.i_inf},
          {"residual", fit.residual}, {"iterations", fit.iterations}, {"filtered", opt.filter_blinking},
          {"weighting", o.weighting}, {"powers", pts.size()}};
}

// ---------------------------------------------------------------- spectrum

struct SpectrumOpts {
  std::optional<std::string> in;
  bool simulate = false;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::size_t photons = 100000;
  std::optional<double> bin_nm;
  std::optional<std::string> out, svg;
};

json cmd_spectrum(const SpectrumOpts& o, Outputs& files) {
  if (o.in.has_value() == o.simulate) throw UsageError("spectrum needs exactly one of --in or --simulate");
  std::vector<double> samples;
  std::string header;
  if (o.simulate) {
    Scenario s = o.scenario ? load_scenario(*o.scenario) : repro::fig4_scenario();
    if (o.seed) s.seed = *o.seed;
    if (!s.seed) throw UsageError("--simulate needs a seed");
    samples = simulate_spectrum(s.emitter, o.photons, *s.seed);
    header = config_comment(s);
  } else {
    for (const auto& r : read_numeric_csv(*o.in, 1)) samples.push_back(r[0]);
    header = "# input " + *o.in + "\n";
  }
  SpectrumFitOptions opt;
  opt.bin_width_nm = o.bin_nm;
  const SpectrumFit fit = fit_spectrum(samples, opt);
  if (o.out || o.svg) {
    const auto bins = histogram_spectrum(samples, fit.bin_width_nm);
    const double sigma = fit.fwhm_nm / kFwhmPerSigma;
    PlotSeries data{{}, {}, "counts", "#444444", false};
    PlotSeries model{{}, {}, "fit", "#c0392b", false};
    std::string csv = header + "wavelength_nm,counts,fit\n";
    for (const auto& b : bins) {
      const double z = (b.wavelength_nm - fit.center_nm) / sigma;
      const double m = fit.unresolved ? 0.0 : fit.amplitude * std::exp(-0.5 * z * z);
      csv += num(b.wavelength_nm) + "," + num(b.counts) + "," + num(m) + "\n";
      data.x.push_back(b.wavelength_nm);
      data.y.push_back(b.counts);
      model.x.push_back(b.wavelength_nm);
      model.y.push_back(m);
    }
    if (o.out) files.write(*o.out, csv);
    if (o.svg) {
      PlotSpec spec{"emission spectrum", "wavelength (nm)", "counts per bin", {data, model}, {}, 0.0, std::nullopt};
      files.write(*o.svg, render_svg(spec));
    }
  }
  return {{"command", "spectrum"}, {"center_nm", fit.center_nm}, {"fwhm_nm", fit.fwhm_nm},
          {"bin_width_nm", fit.bin_width_nm}, {"multimodal", fit.multimodal}, {"unresolved", fit.unresolved},
          {"samples", samples.size()}};
}

// ---------------------------------------------------------------- polarization

struct PolarizationOpts {
  std::optional<std::string> intensities;
  bool simulate = false;
  std::optional<std::string> scenario;
  std::optional<std::uint64_t> seed;
  std::uint64_t photons = 100000;
  double threshold = kUnpolarizedThreshold;
};

json cmd_polarization(const PolarizationOpts& o) {
  if (o.intensities.has_value() == o.simulate) {
    throw UsageError("polarization needs exactly one of --intensities or --simulate");
  }
  std::array<double, 6> i{};
  if (o.simulate) {
    Scenario s = o.scenario ? load_scenario(*o.scenario) : repro::fig6_scenario();
    if (o.seed) s.seed = *o.seed;
    if (!s.seed) throw UsageError("--simulate needs a seed");
    i = simulate_polarimetry(s.emitter, o.photons, *s.seed);
  } else {
    std::string_view rest(*o.intensities);
    for (std::size_t k = 0; k < 6; ++k) {
      const auto comma = rest.find(',');
      if ((k < 5) == (comma == std::string_view::npos)) throw UsageError("--intensities needs six values H,V,D,A,R,L");
      const std::string_view cell = rest.substr(0, comma);
      const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), i[k]);
      if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size()) {
        throw UsageError("--intensities: '" + std::string(cell) + "' is not a number");
      }
      if (comma != std::string_view::npos) rest.remove_prefix(comma + 1);
    }
  }
  const auto st = stokes_from_intensities(i[0], i[1], i[2], i[3], i[4], i[5]);
  const auto dop = degree_of_polarization(st);
  return {{"command", "polarization"},
          {"stokes", {st.s0, st.s1, st.s2, st.s3}},
          {"dop", dop.value},
          {"dop_unclamped", dop.unclamped},
          {"out_of_range", dop.out_of_range},
          {"unpolarized", is_unpolarized(dop.value, o.threshold)}};
}

// ---------------------------------------------------------------- fiber

struct FiberOpts {
  double radius_nm = 0.0;
  double wavelength_nm = 0.0;
  std::string n1 = "auto";
  double n2 = 1.0;
  double offset_nm = 0.0;
};

json cmd_fiber(const FiberOpts& o) {
  const fiber::FiberSpec spec{o.radius_nm, resolve_n1(o.n1, o.wavelength_nm), o.n2, o.wavelength_nm};
  spec.validate();
  const auto sm = fiber::single_mode_check(spec);
  const auto sw = fiber::subwavelength_check(spec);
  const auto mode = fiber::solve_he11(spec);
  return {{"command", "fiber"},
          {"radius_nm", spec.radius_nm},
          {"wavelength_nm", spec.wavelength_nm},
          {"n1", spec.n1},
          {"n2", spec.n2},
          {"v", sm.v},
          {"single_mode", sm.single_mode},
          {"margin", sm.margin},
          {"cutoff_radius_nm", fiber::cutoff_radius_nm(spec.wavelength_nm, spec.n1, spec.n2)},
          {"subwavelength", sw.satisfied},
          {"wavelength_over_diameter", sw.ratio},
          {"n_eff", mode.n_eff},
          {"beta_per_m", mode.beta_per_m},
          {"evanescent_fraction", mode.evanescent_fraction},
          {"surface_intensity_ratio", mode.surface_intensity_ratio},
          {"decay_length_nm", fiber::evanescent_decay_length_nm(mode)},
          {"coupling_estimate", fiber::coupling_efficiency_estimate(mode, o.offset_nm)},
          {"residual", mode.residual}};
}

// ---------------------------------------------------------------- taper

struct TaperOpts {
  double r0_um = 62.5;
  double target_nm = 150.0;
  double hotzone_mm = 0.5;
  std::string mode = "constant";
  double alpha = 0.0;
  double step_fraction = 1e-3;
  double wavelength_nm = 600.0;
  std::string n1 = "auto";
  std::string out_dir = "taper_out";
};

json cmd_taper(const TaperOpts& o, Outputs& files) {
  fiber::TaperRecipe recipe;
  recipe.r0_um = o.r0_um;
  recipe.target_nm = o.target_nm;
  recipe.hotzone_mm = o.hotzone_mm;
  recipe.mode = o.mode == "linear" ? fiber::TaperMode::linear_profile : fiber::TaperMode::constant_hotzone;
  recipe.alpha = o.alpha;
  if (recipe.mode == fiber::TaperMode::constant_hotzone && o.alpha != 0.0) {
    throw UsageError("conflicting options: --alpha needs --mode linear");
  }
  recipe.validate();
  const double n1 = resolve_n1(o.n1, o.wavelength_nm);
  const fs::path dir(o.out_dir);
  const std::string header = "# r0_um " + num(recipe.r0_um) + "\n# target_nm " + num(recipe.target_nm) +
                             "\n# hotzone_mm " + num(recipe.hotzone_mm) + "\n# mode " + o.mode + "\n# alpha " +
                             num(recipe.alpha) + "\n# wavelength_nm " + num(o.wavelength_nm) + "\n# n1 " + num(n1) +
                             "\n";

  const auto profile = fiber::taper_profile(recipe);
  std::string csv = header + "z_mm,r_nm\n";
  PlotSeries shape{{}, {}, "radius", "#1f4e9c", false};
  for (const auto& s : profile.samples) {
    csv += num(s.z_mm) + "," + num(s.r_nm) + "\n";
    shape.x.push_back(s.z_mm);
    shape.y.push_back(s.r_nm / 1e3);
  }
  files.write(dir / "profile.csv", csv);

  const auto program = fiber::pull_trajectory(recipe, {o.step_fraction});
  std::string pull = header + "step,elongation_mm,sweep_length_mm\n";
  for (std::size_t i = 0; i < program.size(); ++i) {
    pull += std::to_string(i) + "," + num(program[i].elongation_mm) + "," + num(program[i].sweep_length_mm) + "\n";
  }
  files.write(dir / "pull.csv", pull);
  const auto simulated = fiber::simulate_pull(recipe, program);
  const double deviation = fiber::max_radius_deviation(recipe, simulated);

  const auto adia = fiber::adiabaticity_check(profile, o.wavelength_nm, n1);
  std::string acsv = header + "z_mm,r_nm,taper_angle,criterion,margin,second_mode_guided\n";
  for (const auto& p : adia.points) {
    acsv += num(p.z_mm) + "," + num(p.r_nm) + "," + num(p.taper_angle) + "," + num(p.criterion) + "," +
            num(p.margin) + "," + (p.second_mode_guided ? "1" : "0") + "\n";
  }
  files.write(dir / "adiabaticity.csv", acsv);

  PlotSpec spec{"taper profile", "z (mm)", "radius (um)", {shape}, {}, 0.0, std::nullopt};
  files.write(dir / "profile.svg", render_svg(spec));

  const double consumed = std::numbers::pi * std::pow(recipe.r0_um * 1e3, 2) * recipe.hotzone_mm;
  return {{"command", "taper"},
          {"total_elongation_mm", profile.total_elongation_mm},
          {"waist_length_mm", profile.waist_length_mm},
          {"transition_length_mm", profile.transition_length_mm},
          {"samples", profile.samples.size()},
          {"volume_relative_error", fiber::profile_volume(profile) / consumed - 1.0},
          {"pull_steps", program.size()},
          {"pull_max_radius_deviation", deviation},
          {"adiabatic", adia.ok},
          {"worst_margin", adia.worst_margin},
          {"worst_z_mm", adia.worst_z_mm}};
}

// ---------------------------------------------------------------- repro

json repro_pulsed_json(const repro::PulsedRun& run) {
  json j = peaks_json(run.g2);
  j["tags_ch0"] = run.tags_ch0;
  j["tags_ch1"] = run.tags_ch1;
  j["seconds"] = run.simulate_seconds + run.analyze_seconds;
  return j;
}

json repro_fig4(const fs::path& dir, unsigned threads, Outputs& files, bool& pass) {
  const auto rep = repro::run_fig4(threads);
  const auto blink_peaks = repro::side_peaks(rep.blinking.g2, 5);
  const auto steady_peaks = repro::side_peaks(rep.steady.g2, 5);
  const bool g2_ok = rep.blinking.g2.g2_zero < 0.1;
  const bool bunching_ok = blink_peaks.peaks == 10 && blink_peaks.min_area > 1.0;
  const bool steady_ok = steady_peaks.peaks == 10 && steady_peaks.max_abs_z <= 4.0;
  pass = g2_ok && bunching_ok && steady_ok;
  const std::string header = config_comment(repro::fig4_scenario());
  files.write(dir / "fig4_g2.csv", g2_csv(rep.blinking.g2, header));
  files.write(dir / "fig4_peaks.csv", header + peaks_csv(rep.blinking.g2));
  files.write(dir / "fig4_g2.svg", g2_svg(rep.blinking.g2, "fig4: blinking perovskite emitter"));
  files.write(dir / "fig4_steady_peaks.csv", header + "# blinking disabled\n" + peaks_csv(rep.steady.g2));
  return {{"target", "fig4"},
          {"pass", pass},
          {"blinking", repro_pulsed_json(rep.blinking)},
          {"side_peak_min", blink_peaks.min_area},
          {"steady_side_peak_max_z", steady_peaks.max_abs_z},
          {"steady", repro_pulsed_json(rep.steady)}};
}

json repro_fig6(const fs::path& dir, unsigned threads, Outputs& files, bool& pass) {
  const Scenario s = repro::fig6_scenario();
  const auto run = repro::run_pulsed(s, threads);
  pass = run.g2.classification.verdict == Verdict::single_photon && run.g2.g2_zero < 0.2;
  const std::string header = config_comment(s);
  files.write(dir / "fig6_g2.csv", g2_csv(run.g2, header));
  files.write(dir / "fig6_g2.svg", g2_svg(run.g2, "fig6: dot-in-rod emitter via nanofiber"));
  return {{"target", "fig6"},
          {"pass", pass},
          {"collection_efficiency", s.chain.collection_efficiency},
          {"result", repro_pulsed_json(run)}};
}

json repro_saturation(const fs::path& dir, Outputs& files, bool& pass) {
  const Scenario s = repro::saturation_scenario();
  const auto pts = repro::saturation_dataset(s, {}, *s.seed);
  const auto filtered = fit_saturation(pts);
  SaturationFitOptions plain;
  plain.filter_blinking = false;
  const auto unfiltered = fit_saturation(pts, plain);
  const double err = std::abs(filtered.p_sat_nw / s.emitter.p_sat_nw - 1.0);
  pass = err < 0.05 && unfiltered.residual > filtered.residual;
  std::string csv = config_comment(s) + "power_nw,rate_cps\n";
  for (const auto& p : pts) {
    for (double v : p.repeats) csv += num(p.power_nw) + "," + num(v) + "\n";
  }
  files.write(dir / "saturation_data.csv", csv);
  return {{"target", "saturation"},
          {"pass", pass},
          {"p_sat_nw", filtered.p_sat_nw},
          {"relative_error", err},
          {"residual_filtered", filtered.residual},
          {"residual_unfiltered", unfiltered.residual},
          {"p_sat_unfiltered_nw", unfiltered.p_sat_nw}};
}

json repro_spectrum(const fs::path& dir, Outputs& files, bool& pass) {
  const Scenario s = repro::fig4_scenario();
  const auto samples = simulate_spectrum(s.emitter, 100000, *s.seed);
  const auto fit = fit_spectrum(samples);
  pass = std::abs(fit.center_nm - 518.0) <= 0.2 && std::abs(fit.fwhm_nm - 16.0) <= 0.5;
  std::string csv = config_comment(s) + "wavelength_nm,counts\n";
  for (const auto& b : histogram_spectrum(samples, fit.bin_width_nm)) {
    csv += num(b.wavelength_nm) + "," + num(b.counts) + "\n";
  }
  files.write(dir / "spectrum.csv", csv);
  return {{"target", "spectrum"}, {"pass", pass}, {"center_nm", fit.center_nm}, {"fwhm_nm", fit.fwhm_nm}};
}

json repro_eq1(bool& pass) {
  const double n1 = fiber::sellmeier_silica(600.0);
  const fiber::FiberSpec spec{150.0, n1, 1.0, 600.0};
  const auto sm = fiber::single_mode_check(spec);
  const auto sw = fiber::subwavelength_check(spec);
  const double ac = fiber::cutoff_radius_nm(600.0, n1, 1.0);
  pass = std::abs(sm.v / 1.667 - 1.0) <= 1e-3 && sm.single_mode && sw.satisfied && std::abs(ac - 216.5) <= 0.5;
  return {{"target", "eq1"}, {"pass", pass}, {"n1", n1}, {"v", sm.v}, {"single_mode", sm.single_mode},
          {"cutoff_radius_nm", ac}, {"subwavelength", sw.satisfied}};
}

json repro_taper(const fs::path& dir, Outputs& files, bool& pass) {
  TaperOpts o;
  o.out_dir = (dir / "taper").string();
  json j = cmd_taper(o, files);
  const double expected = 2.0 * 0.5 * std::log(62.5e3 / 150.0);
  const double elong_err = std::abs(j["total_elongation_mm"].get<double>() / expected - 1.0);
  pass = elong_err <= 1e-6 && std::abs(j["volume_relative_error"].get<double>()) <= 1e-6 &&
         j["pull_max_radius_deviation"].get<double>() < 0.01;
  j.erase("command");
  j["target"] = "taper";
  j["pass"] = pass;
  return j;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nanofiber photonics toolkit: time-tag correlation, emitter simulation, fiber design"};
  app.name("nfw");
  app.require_subcommand(1);

  std::function<json(Outputs&)> action;
  int check_status = 0;

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate a time-tag stream from a scenario file");
  c_sim->add_option("--scenario", sim.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--seed", sim.seed, "RNG seed (overrides the scenario)");
  c_sim->add_option("--duration", sim.duration, "Virtual duration in s (overrides the scenario)");
  c_sim->add_option("--out", sim.out, "Output tag file")->required();
  c_sim->add_option("--format", sim.format, "binary or csv")->check(CLI::IsMember({"binary", "csv"}));
  c_sim->callback([&] { action = [&](Outputs& f) { return cmd_simulate(sim, f); }; });

  CorrelateOpts cor;
  auto* c_cor = app.add_subcommand("correlate", "Correlate a two-channel tag file and estimate g2");
  c_cor->add_option("--in", cor.in, "Input tag file (NTAG or CSV)")->required()->check(CLI::ExistingFile);
  c_cor->add_option("--scenario", cor.scenario, "Scenario for analysis defaults (else <in>.cfg if present)")
      ->check(CLI::ExistingFile);
  c_cor->add_option("--mode", cor.mode, "pulsed or cw")->check(CLI::IsMember({"pulsed", "cw"}));
  c_cor->add_option("--bin-ps", cor.bin_ps, "Histogram bin width in ps");
  c_cor->add_option("--period-ns", cor.period_ns, "Repetition period");
  c_cor->add_option("--zero-delay-ns", cor.zero_delay_ns, "Position of the zero-delay peak");
  c_cor->add_option("--dead-time-ns", cor.dead_time_ns, "Router dead time to excise");
  c_cor->add_option("--lifetime-ns", cor.lifetime_ns, "Emitter lifetime (sets the default peak window)");
  c_cor->add_option("--window-ns", cor.window_ns, "Peak integration window");
  c_cor->add_option("--long-delay-lo-ns", cor.lo_ns, "Normalization window start");
  c_cor->add_option("--long-delay-hi-ns", cor.hi_ns, "Normalization window end");
  c_cor->add_option("--max-tau-ns", cor.max_tau_ns, "Histogram half range in cw mode");
  c_cor->add_option("--out", cor.out, "Histogram CSV (default <in>.g2.csv)");
  c_cor->add_option("--peaks-out", cor.peaks_out, "Peak-area CSV");
  c_cor->add_option("--svg", cor.svg, "g2 plot");
  c_cor->callback([&] { action = [&](Outputs& f) { return cmd_correlate(cor, thread_count(), f); }; });

  SaturationOpts sat;
  auto* c_sat = app.add_subcommand("saturation", "Fit a saturation curve");
  auto* sat_in = c_sat->add_option("--in", sat.in, "CSV rows power_nw,rate_cps")->check(CLI::ExistingFile);
  auto* sat_sim = c_sat->add_flag("--simulate", sat.simulate, "Generate the data with the emitter simulator");
  sat_in->excludes(sat_sim);
  c_sat->add_option("--scenario", sat.scenario, "Scenario for --simulate")->check(CLI::ExistingFile);
  c_sat->add_option("--seed", sat.seed, "Seed for --simulate");
  c_sat->add_option("--keep", sat.keep, "Repeats kept by the blinking filter");
  c_sat->add_flag("--no-filter", sat.no_filter, "Fit the plain mean of all repeats");
  c_sat->add_option("--weighting", sat.weighting, "relative or absolute")
      ->check(CLI::IsMember({"relative", "absolute"}));
  c_sat->add_option("--out", sat.out, "Fitted curve CSV");
  c_sat->add_option("--data-out", sat.data_out, "Simulated raw data CSV");
  c_sat->add_option("--svg", sat.svg, "Plot");
  c_sat->callback([&] { action = [&](Outputs& f) { return cmd_saturation(sat, f); }; });

  SpectrumOpts spe;
  auto* c_spe = app.add_subcommand("spectrum", "Fit an emission spectrum");
  auto* spe_in = c_spe->add_option("--in", spe.in, "CSV with one wavelength_nm per row")->check(CLI::ExistingFile);
  auto* spe_sim = c_spe->add_flag("--simulate", spe.simulate, "Generate samples with the emitter simulator");
  spe_in->excludes(spe_sim);
  c_spe->add_option("--scenario", spe.scenario, "Scenario for --simulate")->check(CLI::ExistingFile);
  c_spe->add_option("--seed", spe.seed, "Seed for --simulate");
  c_spe->add_option("--photons", spe.photons, "Samples for --simulate");
  c_spe->add_option("--bin-nm", spe.bin_nm, "Histogram bin width");
  c_spe->add_option("--out", spe.out, "Histogram and fit CSV");
  c_spe->add_option("--svg", spe.svg, "Plot");
  c_spe->callback([&] { action = [&](Outputs& f) { return cmd_spectrum(spe, f); }; });

  PolarizationOpts pol;
  auto* c_pol = app.add_subcommand("polarization", "Stokes parameters and degree of polarization");
  auto* pol_i = c_pol->add_option("--intensities", pol.intensities, "H,V,D,A,R,L");
  auto* pol_sim = c_pol->add_flag("--simulate", pol.simulate, "Simulate analyzer counts");
  pol_i->excludes(pol_sim);
  c_pol->add_option("--scenario", pol.scenario, "Scenario for --simulate")->check(CLI::ExistingFile);
  c_pol->add_option("--seed", pol.seed, "Seed for --simulate");
  c_pol->add_option("--photons", pol.photons, "Photons per analyzer setting");
  c_pol->add_option("--threshold", pol.threshold, "Unpolarized below this degree");
  c_pol->callback([&] { action = [&](Outputs&) { return cmd_polarization(pol); }; });

  FiberOpts fib;
  auto* c_fib = app.add_subcommand("fiber", "Single-mode check and fundamental-mode solution");
  c_fib->add_option("--radius-nm", fib.radius_nm, "Fiber radius")->required();
  c_fib->add_option("--wavelength-nm", fib.wavelength_nm, "Guided wavelength")->required();
  c_fib->add_option("--n1", fib.n1, "Glass index, or auto for fused silica");
  c_fib->add_option("--n2", fib.n2, "Surrounding index");
  c_fib->add_option("--offset-nm", fib.offset_nm, "Emitter distance from the surface for the coupling estimate");
  c_fib->callback([&] { action = [&](Outputs&) { return cmd_fiber(fib); }; });

  TaperOpts tap;
  auto* c_tap = app.add_subcommand("taper", "Taper profile, pull program and adiabaticity report");
  c_tap->add_option("--r0-um", tap.r0_um, "Unpulled fiber radius");
  c_tap->add_option("--target-nm", tap.target_nm, "Waist radius");
  c_tap->add_option("--hotzone-mm", tap.hotzone_mm, "Effective flame diameter");
  c_tap->add_option("--mode", tap.mode, "constant or linear")->check(CLI::IsMember({"constant", "linear"}));
  c_tap->add_option("--alpha", tap.alpha, "Hot-zone growth rate for --mode linear");
  c_tap->add_option("--step-fraction", tap.step_fraction, "Pull step relative to the hot zone");
  c_tap->add_option("--wavelength-nm", tap.wavelength_nm, "Wavelength for the adiabaticity check");
  c_tap->add_option("--n1", tap.n1, "Glass index, or auto for fused silica");
  c_tap->add_option("--out-dir", tap.out_dir, "Output directory");
  c_tap->callback([&] { action = [&](Outputs& f) { return cmd_taper(tap, f); }; });

  std::string target;
  std::string repro_dir = "repro_out";
  auto* c_rep = app.add_subcommand("repro", "Run a reproduction target and check its threshold");
  c_rep->add_option("target", target, "fig4, fig6, saturation, spectrum, eq1, taper or all")
      ->required()
      ->check(CLI::IsMember({"fig4", "fig6", "saturation", "spectrum", "eq1", "taper", "all"}));
  c_rep->add_option("--out-dir", repro_dir, "Output directory");
  c_rep->callback([&] {
    action = [&](Outputs& f) {
      const fs::path dir(repro_dir);
      const unsigned threads = thread_count();
      json results = json::array();
      bool all_pass = true;
      const auto want = [&](const char* t) { return target == t || target == "all"; };
      bool pass = false;
      if (want("eq1")) results.push_back(repro_eq1(pass)), all_pass &= pass;
      if (want("taper")) results.push_back(repro_taper(dir, f, pass)), all_pass &= pass;
      if (want("spectrum")) results.push_back(repro_spectrum(dir, f, pass)), all_pass &= pass;
      if (want("saturation")) results.push_back(repro_saturation(dir, f, pass)), all_pass &= pass;
      if (want("fig4")) results.push_back(repro_fig4(dir, threads, f, pass)), all_pass &= pass;
      if (want("fig6")) results.push_back(repro_fig6(dir, threads, f, pass)), all_pass &= pass;
      if (!all_pass) check_status = static_cast<int>(ExitCode::check_failed);
      return json{{"command", "repro"}, {"target", target}, {"pass", all_pass}, {"results", results}};
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    Outputs files;
    json summary = action(files);
    if (!files.files.empty()) summary["outputs"] = files.files;
    out << summary.dump() << "\n";
    return check_status;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::io);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  }
}

}  // namespace nfw::cli
