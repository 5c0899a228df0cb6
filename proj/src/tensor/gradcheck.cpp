#include "tpt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tpt/error.hpp"

namespace tpt::gradcheck {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::size_t Report::failures(double tol) const {
  return static_cast<std::size_t>(std::count_if(
      probes.begin(), probes.end(), [tol](const Probe& p) { return !(p.rel_err < tol); }));
}

Report check(const std::function<Tensor<double>()>& loss,
             std::vector<std::pair<std::string, Tensor<double>>> leaves, Rng& rng,
             const Options& opt) {
  for (auto& [name, t] : leaves) {
    if (!t.is_leaf() || !t.requires_grad()) {
      throw DomainError("gradcheck: '" + name + "' must be a leaf that requires grad");
    }
    t.zero_grad();
  }
  loss().backward();

  Report rep;
  for (auto& [name, t] : leaves) {
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(std::span<std::size_t>(idx), rng);
    idx.resize(std::min(idx.size(), opt.per_leaf));
    std::sort(idx.begin(), idx.end());

    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    for (std::size_t i : idx) {
      auto w = t.mutable_data();
      const double saved = w[i];
      double fp, fm;
      {
        NoGradGuard no_grad;
        w[i] = saved + opt.h;
        fp = loss().item();
        w[i] = saved - opt.h;
        fm = loss().item();
        w[i] = saved;
      }
      Probe p;
      p.name = name;
      p.index = i;
      p.analytic = analytic.empty() ? 0.0 : analytic[i];
      p.numeric = (fp - fm) / (2.0 * opt.h);
      p.rel_err = relative_error(p.analytic, p.numeric, opt.floor);
      if (p.rel_err > rep.max_rel_err || rep.probes.empty()) {
        rep.max_rel_err = std::max(rep.max_rel_err, p.rel_err);
        if (p.rel_err >= rep.max_rel_err) rep.worst = name + "[" + std::to_string(i) + "]";
      }
      rep.probes.push_back(p);
    }
  }
  return rep;
}

}  // namespace tpt::gradcheck
