#pragma once

#include <optional>
#include <vector>

namespace nfw::fiber {

/// Step-index guide: glass of index n1 and radius a in a medium of index n2.
/// For a nanofiber the medium is air (n2 = 1).
struct FiberSpec {
  double radius_nm = 150.0;
  double n1 = 1.4580;
  double n2 = 1.0;
  double wavelength_nm = 600.0;

  void validate() const;
};

inline constexpr double kSingleModeCutoff = 2.405;

[[nodiscard]] double v_number(const FiberSpec& spec);

struct SingleModeCheck {
  bool single_mode = false;
  double v = 0.0;
  double margin = 0.0;  ///< cutoff - V
};

/// Strict: V == 2.405 is not single mode.
[[nodiscard]] SingleModeCheck single_mode_check(const FiberSpec& spec);

[[nodiscard]] double cutoff_radius_nm(double wavelength_nm, double n1, double n2 = 1.0);

struct SubwavelengthCheck {
  bool satisfied = false;  ///< diameter <= wavelength / 2
  double ratio = 0.0;      ///< wavelength / diameter
};

[[nodiscard]] SubwavelengthCheck subwavelength_check(const FiberSpec& spec);

/// Three-term fused-silica Sellmeier dispersion, valid 210-3700 nm.
[[nodiscard]] double sellmeier_silica(double wavelength_nm);

struct ModeSolution {
  FiberSpec spec;
  double n_eff = 0.0;
  double beta_per_m = 0.0;
  double u = 0.0;  ///< transverse wavenumber in the glass times a
  double w = 0.0;  ///< decay constant outside times a
  double evanescent_fraction = 0.0;
  double surface_intensity_ratio = 0.0;  ///< |E(a+)|^2 / max |E|^2
  double residual = 0.0;
};

/// Hybrid-mode (HE, l = 1) characteristic function in the transverse variable
/// u = a * sqrt(k^2 n1^2 - beta^2); zero at every HE1m mode.
[[nodiscard]] double he_characteristic(const FiberSpec& spec, double u);

/// Guided HE1m roots as effective indices, strongest-guided first.
[[nodiscard]] std::vector<double> he1m_effective_indices(const FiberSpec& spec, std::size_t max_modes);

/// Fundamental mode: bracketed root of the exact characteristic equation
/// followed by closed-form radial Poynting integrals.
[[nodiscard]] ModeSolution solve_he11(const FiberSpec& spec);

struct FieldIntensity {
  double e_r2 = 0.0;
  double e_phi2 = 0.0;
  double e_z2 = 0.0;
  [[nodiscard]] double total() const { return e_r2 + e_phi2 + e_z2; }
};

/// |E|^2 components of the circularly polarized HE11 mode at radius r (unit
/// axial amplitude). Outside the glass r is taken as r+ (just outside).
[[nodiscard]] FieldIntensity he11_intensity(const ModeSolution& mode, double r_nm);

/// Field decay length 1/q outside the glass; intensity decays twice as fast.
[[nodiscard]] double evanescent_decay_length_nm(const ModeSolution& mode);

/// Order-of-magnitude scalar estimate of the fraction of an emitter's photons
/// launched into the guided mode: beta(d) = min(1, lambda^2 / (4 pi A_eff)
/// * exp(-2 d / Lambda)), with A_eff the mode area referenced to the surface
/// intensity. Proportional to the local intensity, monotone in d.
[[nodiscard]] double coupling_efficiency_estimate(const ModeSolution& mode, double emitter_offset_nm);

enum class TaperMode { constant_hotzone, linear_profile };

struct TaperRecipe {
  double r0_um = 62.5;
  double target_nm = 150.0;
  double hotzone_mm = 0.5;  ///< effective flame diameter L0
  TaperMode mode = TaperMode::constant_hotzone;
  double alpha = 0.0;  ///< hot-zone growth dL/dx for linear_profile, in (-1, 1)
  double max_radius_ratio = 1.02;

  void validate() const;
};

struct ProfileSample {
  double z_mm = 0.0;
  double r_nm = 0.0;
};

/// Symmetric taper: down-transition, uniform waist, up-transition.
struct TaperProfile {
  std::vector<ProfileSample> samples;
  double transition_length_mm = 0.0;
  double waist_length_mm = 0.0;
  double total_elongation_mm = 0.0;
};

[[nodiscard]] double total_elongation_mm(const TaperRecipe& recipe);

/// Waist radius after pulling `elongation_mm` (mass conservation of a
/// cylindrical hot zone).
[[nodiscard]] double waist_radius_nm(const TaperRecipe& recipe, double elongation_mm);

/// Radius of the finished profile at axial position z (0 = start of taper).
[[nodiscard]] double taper_radius_at(const TaperRecipe& recipe, double z_mm);

[[nodiscard]] TaperProfile taper_profile(const TaperRecipe& recipe);

/// Glass volume in nm^2 * mm, integrating pi r^2 with r log-linear between
/// samples (exact for exponential transitions).
[[nodiscard]] double profile_volume(const TaperProfile& profile);

struct PullStep {
  double elongation_mm = 0.0;
  double sweep_length_mm = 0.0;  ///< flame brushes +-sweep/2 around the center
};

struct PullOptions {
  double step_fraction = 1e-3;  ///< elongation per step relative to L0 (or to a shrinking hot zone)
};

[[nodiscard]] std::vector<PullStep> pull_trajectory(const TaperRecipe& recipe, const PullOptions& options = {});

/// Executes a motor program with the hot-zone stretching model and returns
/// the resulting staircase profile. Fails if the waist goes below target.
[[nodiscard]] TaperProfile simulate_pull(const TaperRecipe& recipe, const std::vector<PullStep>& program);

/// Largest |r_sim / r_recipe - 1| over the simulated staircase.
[[nodiscard]] double max_radius_deviation(const TaperRecipe& recipe, const TaperProfile& simulated);

struct AdiabaticityPoint {
  double z_mm = 0.0;
  double r_nm = 0.0;
  double taper_angle = 0.0;  ///< |dr/dz|
  double criterion = 0.0;    ///< r (beta1 - beta2) / 2pi
  double margin = 0.0;       ///< criterion / angle, > 1 is adiabatic
  bool second_mode_guided = false;
};

struct AdiabaticityReport {
  bool ok = true;
  double worst_margin = 0.0;
  double worst_z_mm = 0.0;
  std::vector<AdiabaticityPoint> points;
};

inline constexpr double kMaxAdjacentRadiusRatio = 1.05;

/// Compares the local taper angle with the length-scale criterion. The
/// competing mode is HE12 where it is guided, else the radiation line n2.
[[nodiscard]] AdiabaticityReport adiabaticity_check(const TaperProfile& profile, double wavelength_nm, double n1,
                                                    double n2 = 1.0);

}  // namespace nfw::fiber
