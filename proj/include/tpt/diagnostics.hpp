#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "tpt/model.hpp"
#include "tpt/phase.hpp"

namespace tpt::diag {

struct ThetaDrift {
  std::vector<double> l2;         // ||theta - theta_init|| per layer
  std::vector<double> mean;       // current mean angle per layer
  std::vector<double> init_mean;  // mean angle at init per layer
  std::vector<std::vector<double>> per_pair;  // |delta theta_k|, layer x pair
};

ThetaDrift theta_drift(const phase::ThetaBank& bank);

/// l2 / sqrt(count): RMS movement of a single angle.
double per_theta_rms(double l2, std::size_t count);
double radians_to_degrees(double rad);

struct PhaseBalance {
  std::vector<double> phase_means;  // mu_i averaged over all positions
  double residual = 0.0;            // zero-sum residual
};

template <typename T>
PhaseBalance phase_balance(const Tensor<T>& x, const phase::PhaseConfig& cfg);

/// Phase means with the horn's analytic per-phase share H_T/T removed.
std::vector<double> intrinsic_phase_means(std::span<const double> measured, std::size_t T);

/// radius_i = sqrt(mean over positions of ||x_i||^2), so the radii compose
/// to the full-width radius by Pythagoras.
template <typename T>
std::vector<double> phase_radii(const Tensor<T>& h, const phase::PhaseConfig& cfg);

template <typename T>
double full_radius(const Tensor<T>& h);

/// Partition used for measurement. The baseline has no phase structure of its
/// own, so it is measured under the configured N when that N is valid.
phase::PhaseConfig measurement_phases(const model::ModelConfig& cfg);

struct DiagnosticsRecord {
  std::int64_t step = 0;
  std::vector<double> phase_means;
  double zero_sum_residual = 0.0;
  std::vector<double> theta_l2_drift;
  std::vector<double> theta_mean;
  std::vector<std::vector<double>> per_pair_drift;
  std::vector<double> phase_radii;                     // final block output
  std::vector<std::vector<double>> block_phase_radii;  // layer x phase
  std::optional<double> horn_head;                     // learnable horn r(0)
};

nlohmann::json to_json(const DiagnosticsRecord& r);

/// Runs the model over the validation stream in sequential non-overlapping
/// windows without recording gradients and measures everything above.
template <typename T>
DiagnosticsRecord collect(const model::Model<T>& m, std::span<const TokenId> val,
                          std::size_t seq_len, std::size_t batch, std::int64_t step,
                          std::size_t max_windows = 0);

/// Column of each row's largest entry, or nothing when that entry does not
/// exceed threshold.
std::vector<std::optional<std::size_t>> heatmap_marks(
    const std::vector<std::vector<double>>& drift, double threshold = 1e-12);

/// layer,pair,drift_rad,drift_deg rows after a header.
std::string heatmap_csv(const std::vector<std::vector<double>>& drift);
std::string heatmap_svg(const std::vector<std::vector<double>>& drift,
                        const std::string& title = "theta drift per pair");

struct Series {
  std::string label;
  std::vector<double> x, y;
};

/// Polyline chart with axes and a legend.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label);

}  // namespace tpt::diag
