#include "nfw/fiber_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>

#include "nfw/errors.hpp"

namespace nfw::fiber {
namespace {

double r0_nm(const TaperRecipe& r) { return r.r0_um * 1e3; }

double effective_alpha(const TaperRecipe& r) { return r.mode == TaperMode::linear_profile ? r.alpha : 0.0; }

// Elongation at which the waist reaches radius r.
double elongation_for_radius(const TaperRecipe& recipe, double r_nm) {
  const double l0 = recipe.hotzone_mm;
  const double alpha = effective_alpha(recipe);
  const double ratio = r0_nm(recipe) / r_nm;
  if (alpha == 0.0) return 2.0 * l0 * std::log(ratio);
  return l0 / alpha * std::expm1(2.0 * alpha * std::log(ratio));
}

double transition_z(const TaperRecipe& recipe, double r_nm) {
  return 0.5 * (1.0 - effective_alpha(recipe)) * elongation_for_radius(recipe, r_nm);
}

double log_linear_volume(double dz, double r1, double r2) {
  if (r1 == r2) return std::numbers::pi * r1 * r1 * dz;
  return std::numbers::pi * dz * (r1 * r1 - r2 * r2) / (2.0 * std::log(r1 / r2));
}

}  // namespace

void TaperRecipe::validate() const {
  if (!(r0_um > 0.0)) throw ValidationError("r0_um must be > 0");
  if (!(target_nm > 0.0)) throw ValidationError("target_nm must be > 0");
  if (!(target_nm < r0_um * 1e3)) throw ValidationError("target_nm must be below the initial radius");
  if (!(hotzone_mm > 0.0)) throw ValidationError("hotzone_mm must be > 0");
  if (!(max_radius_ratio > 1.0 && max_radius_ratio <= kMaxAdjacentRadiusRatio)) {
    throw ValidationError("max_radius_ratio must be in (1, 1.05]");
  }
  if (mode == TaperMode::linear_profile) {
    if (!(alpha > -1.0 && alpha < 1.0)) throw ValidationError("alpha must be in (-1, 1)");
  }
}

double total_elongation_mm(const TaperRecipe& recipe) {
  recipe.validate();
  return elongation_for_radius(recipe, recipe.target_nm);
}

double waist_radius_nm(const TaperRecipe& recipe, double elongation_mm) {
  const double alpha = effective_alpha(recipe);
  const double l0 = recipe.hotzone_mm;
  if (alpha == 0.0) return r0_nm(recipe) * std::exp(-elongation_mm / (2.0 * l0));
  return r0_nm(recipe) * std::pow(1.0 + alpha * elongation_mm / l0, -0.5 / alpha);
}

double taper_radius_at(const TaperRecipe& recipe, double z_mm) {
  const double alpha = effective_alpha(recipe);
  const double x = total_elongation_mm(recipe);
  const double z0 = 0.5 * (1.0 - alpha) * x;
  const double lw = recipe.hotzone_mm + alpha * x;
  const double total = 2.0 * z0 + lw;
  const double zz = std::min(z_mm, total - z_mm);
  if (zz <= 0.0) return r0_nm(recipe);
  if (zz >= z0) return recipe.target_nm;
  return waist_radius_nm(recipe, 2.0 * zz / (1.0 - alpha));
}

TaperProfile taper_profile(const TaperRecipe& recipe) {
  const double x = total_elongation_mm(recipe);
  const double alpha = effective_alpha(recipe);
  const double r0 = r0_nm(recipe);

  std::vector<ProfileSample> down{{0.0, r0}};
  for (int i = 1;; ++i) {
    const double r = r0 * std::pow(recipe.max_radius_ratio, -static_cast<double>(i));
    if (r <= recipe.target_nm * (1.0 + 1e-12)) break;
    down.push_back({transition_z(recipe, r), r});
  }
  const double z0 = 0.5 * (1.0 - alpha) * x;
  down.push_back({z0, recipe.target_nm});

  TaperProfile p;
  p.transition_length_mm = z0;
  p.waist_length_mm = recipe.hotzone_mm + alpha * x;
  p.total_elongation_mm = x;
  const double total = 2.0 * z0 + p.waist_length_mm;
  p.samples = down;
  for (auto it = down.rbegin(); it != down.rend(); ++it) p.samples.push_back({total - it->z_mm, it->r_nm});
  return p;
}

double profile_volume(const TaperProfile& profile) {
  double v = 0.0;
  for (std::size_t i = 1; i < profile.samples.size(); ++i) {
    const auto& a = profile.samples[i - 1];
    const auto& b = profile.samples[i];
    v += log_linear_volume(b.z_mm - a.z_mm, a.r_nm, b.r_nm);
  }
  return v;
}

std::vector<PullStep> pull_trajectory(const TaperRecipe& recipe, const PullOptions& options) {
  recipe.validate();
  if (!(options.step_fraction > 0.0)) throw ValidationError("step_fraction must be > 0");
  const double alpha = effective_alpha(recipe);
  std::vector<PullStep> steps;
  double x = 0.0;
  double r = r0_nm(recipe);
  while (r > recipe.target_nm) {
    const double hot = recipe.hotzone_mm + alpha * x;
    const double dx = options.step_fraction * std::min(recipe.hotzone_mm, hot);
    const double next = r * std::sqrt(hot / (hot + dx));
    if (next <= recipe.target_nm) {
      const double rt = r / recipe.target_nm;
      steps.push_back({hot * (rt * rt - 1.0), hot});
      break;
    }
    steps.push_back({dx, hot});
    x += dx;
    r = next;
  }
  return steps;
}

TaperProfile simulate_pull(const TaperRecipe& recipe, const std::vector<PullStep>& program) {
  recipe.validate();
  struct Segment {
    double length;
    double r;
  };
  std::vector<Segment> frozen;
  double r = r0_nm(recipe);
  double uniform = std::numeric_limits<double>::infinity();
  double x = 0.0;
  for (std::size_t i = 0; i < program.size(); ++i) {
    const double hot = program[i].sweep_length_mm;
    const double dx = program[i].elongation_mm;
    if (!(hot > 0.0) || !(dx >= 0.0)) {
      throw ValidationError("pull step " + std::to_string(i) + " has invalid length", static_cast<std::ptrdiff_t>(i));
    }
    if (hot > uniform * (1.0 + 1e-9)) {
      throw ValidationError("pull step " + std::to_string(i) + ": hot zone exceeds the uniform waist",
                            static_cast<std::ptrdiff_t>(i));
    }
    if (std::isfinite(uniform) && uniform > hot) frozen.push_back({0.5 * (uniform - hot), r});
    const double next = r * std::sqrt(hot / (hot + dx));
    if (next < recipe.target_nm * (1.0 - 1e-9)) {
      throw ValidationError("pull step " + std::to_string(i) + " drives the waist to " + std::to_string(next) +
                                " nm, below target " + std::to_string(recipe.target_nm) + " nm",
                            static_cast<std::ptrdiff_t>(i));
    }
    r = next;
    uniform = hot + dx;
    x += dx;
  }

  TaperProfile p;
  p.total_elongation_mm = x;
  if (program.empty()) {
    p.waist_length_mm = recipe.hotzone_mm;
    p.samples = {{0.0, r}, {recipe.hotzone_mm, r}};
    return p;
  }
  double z = 0.0;
  for (const auto& s : frozen) {
    p.samples.push_back({z, s.r});
    z += s.length;
    p.samples.push_back({z, s.r});
  }
  p.transition_length_mm = z;
  p.waist_length_mm = uniform;
  p.samples.push_back({z, r});
  z += uniform;
  p.samples.push_back({z, r});
  for (auto it = frozen.rbegin(); it != frozen.rend(); ++it) {
    p.samples.push_back({z, it->r});
    z += it->length;
    p.samples.push_back({z, it->r});
  }
  return p;
}

double max_radius_deviation(const TaperRecipe& recipe, const TaperProfile& simulated) {
  if (simulated.samples.empty()) return 0.0;
  const double alpha = effective_alpha(recipe);
  const double x = total_elongation_mm(recipe);
  const double z0 = 0.5 * (1.0 - alpha) * x;
  const double analytic_total = 2.0 * z0 + recipe.hotzone_mm + alpha * x;
  const double sim_total = simulated.samples.back().z_mm;
  // Each side is compared from its own end so that small length mismatches
  // do not accumulate across the waist.
  const auto analytic = [&](double z) {
    const double from_end = std::min(z, sim_total - z);
    return taper_radius_at(recipe, std::min(from_end, 0.5 * analytic_total));
  };
  double worst = 0.0;
  for (const auto& s : simulated.samples) {
    worst = std::max(worst, std::abs(s.r_nm / analytic(s.z_mm) - 1.0));
  }
  for (std::size_t i = 1; i < simulated.samples.size(); ++i) {
    const auto& a = simulated.samples[i - 1];
    const auto& b = simulated.samples[i];
    if (a.r_nm == b.r_nm && b.z_mm > a.z_mm) {
      worst = std::max(worst, std::abs(a.r_nm / analytic(0.5 * (a.z_mm + b.z_mm)) - 1.0));
    }
  }
  return worst;
}

AdiabaticityReport adiabaticity_check(const TaperProfile& profile, double wavelength_nm, double n1, double n2) {
  const auto& s = profile.samples;
  if (s.size() < 2) throw ValidationError("profile needs at least two samples");
  const double k = 2.0 * std::numbers::pi / wavelength_nm;

  std::map<double, std::pair<double, bool>> cache;
  const auto beta_gap = [&](double r) {
    if (auto it = cache.find(r); it != cache.end()) return it->second;
    const FiberSpec spec{r, n1, n2, wavelength_nm};
    const auto n_eff = he1m_effective_indices(spec, 2);
    if (n_eff.empty()) throw NumericalError("no guided mode at radius " + std::to_string(r) + " nm");
    const bool second = n_eff.size() > 1;
    const double other = second ? n_eff[1] : n2;
    const std::pair<double, bool> out{k * (n_eff[0] - other), second};
    cache.emplace(r, out);
    return out;
  };

  AdiabaticityReport rep;
  rep.worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double dz_nm = (s[i].z_mm - s[i - 1].z_mm) * 1e6;
    const double r1 = s[i - 1].r_nm;
    const double r2 = s[i].r_nm;
    if (dz_nm < 0.0) throw ValidationError("profile z must be non-decreasing", static_cast<std::ptrdiff_t>(i));
    if (r1 == r2) continue;
    const double ratio = std::max(r1, r2) / std::min(r1, r2);
    if (dz_nm > 0.0 && ratio > kMaxAdjacentRadiusRatio) {
      throw ValidationError("profile too coarsely sampled at sample " + std::to_string(i) + " (radius ratio " +
                                std::to_string(ratio) + ")",
                            static_cast<std::ptrdiff_t>(i));
    }
    AdiabaticityPoint pt;
    pt.z_mm = 0.5 * (s[i].z_mm + s[i - 1].z_mm);
    pt.r_nm = std::sqrt(r1 * r2);
    pt.taper_angle = dz_nm > 0.0 ? std::abs(r2 - r1) / dz_nm : std::numeric_limits<double>::infinity();
    const auto [gap, second] = beta_gap(pt.r_nm);
    pt.second_mode_guided = second;
    pt.criterion = pt.r_nm * gap / (2.0 * std::numbers::pi);
    pt.margin = pt.criterion / pt.taper_angle;
    if (pt.margin < rep.worst_margin) {
      rep.worst_margin = pt.margin;
      rep.worst_z_mm = pt.z_mm;
    }
    rep.points.push_back(pt);
  }
  rep.ok = !(rep.worst_margin <= 1.0);
  return rep;
}

}  // namespace nfw::fiber
