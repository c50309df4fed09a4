#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "swingrade/tensor.hpp"

namespace swingrade {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = true;
  std::size_t entries_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_recorded = 0.0;
  double worst_difference = 0.0;
};

/// Central-difference comparison of recorded gradients against a scalar
/// function re-evaluated at perturbed parameters. The caller runs the
/// forward/backward pass first so `params[i].tensor.grad()` holds the
/// gradients under test, and supplies `f` as a fresh, deterministic
/// evaluation of the same scalar.
///
/// When the graph contains stop_gradient, `f` must hold the detached values
/// pinned at their base-point values (the gradient being checked is the one
/// with those paths excluded); see GradingModel::loss for the hook used here.
///
/// Relative error convention: |fd - ad| / max(|fd|, |ad|, floor).
inline GradCheckReport finite_diff_check(const std::function<double()>& f,
                                         std::vector<Parameter>& params, double h, double tol,
                                         double floor = 1e-6) {
  if (h <= 0.0) throw ContractError("finite_diff_check: h must be positive");
  GradCheckReport rep;
  for (Parameter& p : params) {
    auto& x = p.tensor.data();
    const auto& g = p.tensor.grad();
    for (std::size_t i = 0; i < x.size(); ++i) {
      double saved = x[i];
      x[i] = saved + h;
      double fp = f();
      x[i] = saved - h;
      double fm = f();
      x[i] = saved;
      double fd = (fp - fm) / (2.0 * h);
      double rel = std::fabs(fd - g[i]) / std::max({std::fabs(fd), std::fabs(g[i]), floor});
      ++rep.entries_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = i;
        rep.worst_recorded = g[i];
        rep.worst_difference = fd;
      }
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace swingrade
