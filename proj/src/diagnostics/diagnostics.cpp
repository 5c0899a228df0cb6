#include "tpt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tpt/data.hpp"
#include "tpt/error.hpp"

namespace tpt::diag {

ThetaDrift theta_drift(const phase::ThetaBank& bank) {
  ThetaDrift d;
  for (std::size_t l = 0; l < bank.n_layers(); ++l) {
    const auto& init = bank.init(l);
    const auto& cur = bank.current(l);
    if (init.size() != cur.size()) throw ShapeError("theta_drift: snapshot width mismatch");
    std::vector<double> pair(init.size());
    double ss = 0.0, sum = 0.0, init_sum = 0.0;
    for (std::size_t k = 0; k < init.size(); ++k) {
      const double delta = cur[k] - init[k];
      pair[k] = std::abs(delta);
      ss += delta * delta;
      sum += cur[k];
      init_sum += init[k];
    }
    const double n = init.empty() ? 1.0 : static_cast<double>(init.size());
    d.l2.push_back(std::sqrt(ss));
    d.mean.push_back(sum / n);
    d.init_mean.push_back(init_sum / n);
    d.per_pair.push_back(std::move(pair));
  }
  return d;
}

double per_theta_rms(double l2, std::size_t count) {
  if (count == 0) throw DomainError("per_theta_rms: count must be >= 1");
  return l2 / std::sqrt(static_cast<double>(count));
}

double radians_to_degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

template <typename T>
PhaseBalance phase_balance(const Tensor<T>& x, const phase::PhaseConfig& cfg) {
  return {phase::mean_phase_means(x, cfg), phase::zero_sum_residual(x, cfg)};
}

std::vector<double> intrinsic_phase_means(std::span<const double> measured, std::size_t T) {
  const double share = phase::harmonic_number(T) / static_cast<double>(T);
  std::vector<double> out(measured.begin(), measured.end());
  for (double& v : out) v -= share;
  return out;
}

namespace {

// Sum over positions of ||x_i||^2 per phase, plus the position count.
template <typename T>
std::pair<std::vector<double>, std::size_t> phase_energy(const Tensor<T>& h,
                                                         const phase::PhaseConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.d_model());
  if (h.rank() == 0 || h.dim(-1) != d) {
    throw ShapeError("phase_radii: last dim of " + shape_str(h.shape()) + " is not d_model " +
                     std::to_string(d));
  }
  const auto N = static_cast<std::size_t>(cfg.n_phases());
  const std::size_t dp = d / N, rows = h.numel() / d;
  const auto X = h.data();
  std::vector<double> energy(N, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = 0; k < dp; ++k) {
        const double v = X[r * d + i * dp + k];
        energy[i] += v * v;
      }
    }
  }
  return {energy, rows};
}

}  // namespace

template <typename T>
std::vector<double> phase_radii(const Tensor<T>& h, const phase::PhaseConfig& cfg) {
  auto [energy, rows] = phase_energy(h, cfg);
  if (rows == 0) throw ShapeError("phase_radii: no positions");
  for (double& e : energy) e = std::sqrt(e / static_cast<double>(rows));
  return energy;
}

template <typename T>
double full_radius(const Tensor<T>& h) {
  if (h.rank() == 0 || h.numel() == 0) throw ShapeError("full_radius: empty tensor");
  const std::size_t rows = h.numel() / h.dim(-1);
  double ss = 0.0;
  for (T v : h.data()) ss += double(v) * double(v);
  return std::sqrt(ss / static_cast<double>(rows));
}

phase::PhaseConfig measurement_phases(const model::ModelConfig& cfg) {
  const bool usable = cfg.n_phases >= 1 && cfg.d_model % cfg.n_phases == 0 &&
                      (cfg.d_model / cfg.n_phases) % 2 == 0;
  return phase::PhaseConfig(usable ? cfg.n_phases : 1, cfg.d_model);
}

nlohmann::json to_json(const DiagnosticsRecord& r) {
  nlohmann::json j = {{"step", r.step},
                      {"phase_means", r.phase_means},
                      {"zero_sum_residual", r.zero_sum_residual},
                      {"theta_l2_drift", r.theta_l2_drift},
                      {"theta_mean", r.theta_mean},
                      {"per_pair_drift", r.per_pair_drift},
                      {"phase_radii", r.phase_radii},
                      {"block_phase_radii", r.block_phase_radii}};
  j["horn_head"] = r.horn_head ? nlohmann::json(*r.horn_head) : nlohmann::json(nullptr);
  return j;
}

template <typename T>
DiagnosticsRecord collect(const model::Model<T>& m, std::span<const TokenId> val,
                          std::size_t seq_len, std::size_t batch, std::int64_t step,
                          std::size_t max_windows) {
  const auto& cfg = m.config();
  const auto pc = measurement_phases(cfg);
  const auto N = static_cast<std::size_t>(pc.n_phases());
  const auto L = static_cast<std::size_t>(cfg.n_layers);

  std::size_t n = data::window_count(val.size(), seq_len);
  if (n == 0) throw DomainError("diagnostics: validation stream holds no full window");
  if (max_windows > 0) n = std::min(n, max_windows);
  if (batch == 0) throw DomainError("diagnostics: batch must be >= 1");

  NoGradGuard no_grad;
  std::vector<double> mean_acc(N, 0.0), final_energy(N, 0.0);
  std::vector<std::vector<double>> block_energy(L, std::vector<double>(N, 0.0));
  double residual_acc = 0.0;
  std::size_t positions = 0;
  std::vector<std::size_t> windows;
  for (std::size_t first = 0; first < n; first += batch) {
    windows.resize(std::min(batch, n - first));
    std::iota(windows.begin(), windows.end(), first);
    const auto fr = m.forward(data::gather_windows(val, seq_len, windows).first);
    const std::size_t rows = windows.size() * seq_len;
    const auto bal = phase_balance(fr.embedded, pc);
    for (std::size_t i = 0; i < N; ++i) mean_acc[i] += bal.phase_means[i] * double(rows);
    residual_acc += bal.residual * double(rows);
    for (std::size_t l = 0; l < L; ++l) {
      const auto [e, r] = phase_energy(fr.block_outputs[l], pc);
      for (std::size_t i = 0; i < N; ++i) block_energy[l][i] += e[i];
    }
    positions += rows;
  }

  DiagnosticsRecord rec;
  rec.step = step;
  const double P = static_cast<double>(positions);
  for (double v : mean_acc) rec.phase_means.push_back(v / P);
  rec.zero_sum_residual = residual_acc / P;
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> radii(N);
    for (std::size_t i = 0; i < N; ++i) radii[i] = std::sqrt(block_energy[l][i] / P);
    rec.block_phase_radii.push_back(radii);
  }
  if (L > 0) rec.phase_radii = rec.block_phase_radii.back();

  const auto drift = theta_drift(m.theta_bank());
  rec.theta_l2_drift = drift.l2;
  rec.theta_mean = drift.mean;
  rec.per_pair_drift = drift.per_pair;
  if (cfg.learnable_horn) rec.horn_head = double(m.horn()->data()[0]);
  return rec;
}

#define TPT_INSTANTIATE(T)                                                                      \
  template PhaseBalance phase_balance(const Tensor<T>&, const phase::PhaseConfig&);             \
  template std::vector<double> phase_radii(const Tensor<T>&, const phase::PhaseConfig&);        \
  template double full_radius(const Tensor<T>&);                                                \
  template DiagnosticsRecord collect(const model::Model<T>&, std::span<const TokenId>,          \
                                     std::size_t, std::size_t, std::int64_t, std::size_t);
TPT_INSTANTIATE(float)
TPT_INSTANTIATE(double)
#undef TPT_INSTANTIATE

}  // namespace tpt::diag
