#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tpt/rng.hpp"
#include "tpt/tensor.hpp"

namespace tpt::gradcheck {

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct Probe {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct Report {
  std::vector<Probe> probes;
  double max_rel_err = 0.0;
  std::string worst;

  std::size_t count() const { return probes.size(); }
  std::size_t failures(double tol) const;
};

struct Options {
  double h = 1e-5;
  std::size_t per_leaf = 8;  // sampled entries per leaf (all when smaller)
  double floor = 1e-6;
};

/// Central differences against reverse mode for a scalar f64 loss. `loss`
/// must rebuild the graph from the current leaf values on every call.
Report check(const std::function<Tensor<double>()>& loss,
             std::vector<std::pair<std::string, Tensor<double>>> leaves, Rng& rng,
             const Options& opt = {});

}  // namespace tpt::gradcheck
