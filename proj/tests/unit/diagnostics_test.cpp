#include <cmath>

#include <gtest/gtest.h>

#include "tpt/diagnostics.hpp"
#include "tpt/ops.hpp"

using namespace tpt;
using namespace tpt::diag;

TEST(ThetaDrift, UntrainedIsZero) {
  const auto bank = phase::ThetaBank::depth_linear(4, 64);
  const auto d = theta_drift(bank);
  for (double v : d.l2) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_NEAR(d.mean[3], std::numbers::pi / 2, 1e-12);
}

TEST(ThetaDrift, UniformShiftClosedForm) {
  auto bank = phase::ThetaBank::depth_linear(2, 64);
  auto moved = bank.init(0);
  for (auto& v : moved) v += 0.1;
  bank.set_current(0, moved);
  const auto d = theta_drift(bank);
  EXPECT_NEAR(d.l2[0], 0.1 * std::sqrt(32.0), 1e-12);
  EXPECT_NEAR(d.l2[0], 0.5657, 1e-4);
  EXPECT_DOUBLE_EQ(d.l2[1], 0.0);
  EXPECT_NEAR(d.per_pair[0][5], 0.1, 1e-12);
}

TEST(ThetaDrift, PerThetaRms) {
  const double rms = per_theta_rms(1.833, 128);
  EXPECT_NEAR(rms, 0.162, 5e-4);
  EXPECT_NEAR(radians_to_degrees(rms), 9.3, 0.05);
}

TEST(PhaseBalance, HornOnZeroEmbedding) {
  const phase::PhaseConfig pc(3, 12);
  const std::size_t T = 128;
  const auto x = phase::horn_substitute(Tensor<double>::zeros({1, T, 12}), phase::HornProfile::fixed(T), pc);
  const auto b = phase_balance(x, pc);
  const double share = phase::harmonic_number(T) / T;
  for (double m : b.phase_means) EXPECT_NEAR(m, share, 1e-12);
  EXPECT_NEAR(b.residual, 3 * share, 1e-12);
  for (double m : intrinsic_phase_means(b.phase_means, T)) EXPECT_NEAR(m, 0.0, 1e-12);
}

TEST(Radii, EqualEnergyAndZeroedPhase) {
  const phase::PhaseConfig pc(3, 48);
  Rng rng(1);
  const auto h = randn<double>({8, 64, 48}, 1.0, rng);
  const auto r = phase_radii(h, pc);
  for (double v : r) EXPECT_NEAR(v / r[0], 1.0, 0.02);
  double sq = 0;
  for (double v : r) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq), full_radius(h), 1e-9);

  std::vector<double> z(h.data().begin(), h.data().end());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i % 48 >= 16 && i % 48 < 32) z[i] = 0.0;
  }
  EXPECT_DOUBLE_EQ(phase_radii(Tensor<double>({8, 64, 48}, z), pc)[1], 0.0);
}

TEST(Heatmap, ZeroDriftHasNoMarks) {
  const std::vector<std::vector<double>> zero(3, std::vector<double>(4, 0.0));
  for (const auto& m : heatmap_marks(zero)) EXPECT_FALSE(m.has_value());
  EXPECT_EQ(heatmap_svg(zero).find("class=\"max\""), std::string::npos);
}

TEST(Heatmap, MarksRowArgmax) {
  const std::vector<std::vector<double>> d = {{0.1, 0.5, 0.2}, {0.9, 0.0, 0.3}};
  const auto marks = heatmap_marks(d);
  EXPECT_EQ(marks[0], 1u);
  EXPECT_EQ(marks[1], 0u);
  const auto svg = heatmap_svg(d);
  EXPECT_NE(svg.find("data-layer=\"0\" data-pair=\"1\""), std::string::npos);
  EXPECT_NE(svg.find("data-layer=\"1\" data-pair=\"0\""), std::string::npos);
  const auto csv = heatmap_csv(d);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,pair,drift_rad,drift_deg");
}

TEST(Collect, UntrainedModelRecord) {
  model::ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 24;
  c.n_layers = 2;
  c.n_q_heads = 6;
  c.n_kv_heads = 3;
  c.d_ff = 32;
  c.max_seq_len = 8;
  model::Model<float> m(c, 1);
  std::vector<TokenId> val(65);
  for (std::size_t i = 0; i < val.size(); ++i) val[i] = static_cast<TokenId>(2 + i % 18);
  const auto rec = collect(m, val, 8, 4, 0);
  EXPECT_NEAR(rec.zero_sum_residual, phase::analytic_pinned_residual(3, 8), 1e-6);
  for (double v : rec.theta_l2_drift) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_EQ(rec.block_phase_radii.size(), 2u);
  EXPECT_EQ(rec.phase_radii.size(), 3u);
  const auto j = to_json(rec);
  EXPECT_TRUE(j.contains("phase_means"));
}

TEST(Measurement, BaselineUsesConfiguredN) {
  model::ModelConfig c;
  EXPECT_EQ(measurement_phases(model::ModelConfig::baseline_of(c)).n_phases(), 3);
}

TEST(LineChart, OnePolylinePerSeries) {
  const std::vector<Series> s = {{"a", {0, 1}, {2, 1}}, {"b", {0, 1}, {3, 2}}};
  const auto svg = line_chart_svg(s, "loss", "step", "loss");
  std::size_t count = 0;
  for (std::size_t p = svg.find("class=\"series\""); p != std::string::npos;
       p = svg.find("class=\"series\"", p + 1)) {
    ++count;
  }
  EXPECT_EQ(count, 2u);
}
