#pragma once

#include <vector>

#include "swingrade/ops.hpp"

namespace swingrade {

struct LossConfig {
  double lambda = 0.1;
  double bce_eps = 1e-7;
  bool ncsl_enabled = true;

  void validate() const {
    if (lambda < 0.0) throw ConfigError("loss: lambda must be non-negative");
    if (bce_eps <= 0.0 || bce_eps > 1e-3) throw ConfigError("loss: bce_eps must be in (0, 1e-3]");
  }
};

struct LossReport {
  std::vector<double> bce_per_class;
  double ncsl = 0.0;
  double total = 0.0;

  double sum_bce() const {
    double s = 0.0;
    for (double v : bce_per_class) s += v;
    return s;
  }
};

/// Per-class binary cross-entropy, summed over the batch and divided by the
/// batch size. Predictions are clamped to [eps, 1-eps] inside the logs.
inline Tensor bce(const Tensor& predicted, const std::vector<double>& truth01,
                  double eps = 1e-7) {
  std::size_t b = predicted.numel();
  if (b != truth01.size()) {
    throw DimensionError("bce: " + std::to_string(b) + " predictions vs " +
                         std::to_string(truth01.size()) + " labels");
  }
  Tensor flat = reshape(predicted, {b});
  Tensor t = Tensor::from({b}, truth01);
  std::vector<double> comp(b);
  for (std::size_t i = 0; i < b; ++i) comp[i] = 1.0 - truth01[i];
  Tensor tc = Tensor::from({b}, std::move(comp));
  Tensor p = clamp(flat, eps, 1.0 - eps);
  Tensor q = clamp(sub(Tensor::full({b}, 1.0), flat), eps, 1.0 - eps);
  Tensor ll = add(mul(t, log_op(p)), mul(tc, log_op(q)));
  return scale(sum_all(ll), -1.0 / static_cast<double>(b));
}

/// Mean squared error against scalar targets (regression-head training).
inline Tensor mse(const Tensor& predicted, const std::vector<double>& targets) {
  std::size_t b = predicted.numel();
  if (b != targets.size()) {
    throw DimensionError("mse: " + std::to_string(b) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  }
  Tensor d = sub(reshape(predicted, {b}), Tensor::from({b}, targets));
  return scale(sum_all(mul(d, d)), 1.0 / static_cast<double>(b));
}

/// Negative cosine similarity between every projected stage vector and the
/// detached aggregated decision features: -(1/S) sum_s cos(P_s, sg(D)),
/// averaged over the batch. Gradient reaches the projections (and the
/// backbone beneath them) but never the ancestors of D.
///
/// `pinned_target`, when given, replaces sg(D) by fixed values; the
/// finite-difference oracle uses this to probe the same derivative the
/// stop-gradient defines.
inline Tensor ncsl(const std::vector<Tensor>& projections, const Tensor& aggregated,
                   double eps = 1e-12, const std::vector<double>* pinned_target = nullptr) {
  if (projections.empty()) throw ContractError("ncsl: no projections");
  std::size_t b = aggregated.extent(0);
  Tensor target = pinned_target ? Tensor::from(aggregated.shape(), *pinned_target)
                                : stop_gradient(aggregated);
  Tensor target_n = l2_normalize(target, eps);
  Tensor acc;
  for (const Tensor& p : projections) {
    if (p.shape() != aggregated.shape()) {
      throw DimensionError("ncsl: projection " + shape_str(p.shape()) +
                           " vs aggregated " + shape_str(aggregated.shape()));
    }
    Tensor c = sum_all(mul(l2_normalize(p, eps), target_n));
    acc = acc.defined() ? add(acc, c) : c;
  }
  double denom = static_cast<double>(projections.size()) * static_cast<double>(b);
  return scale(acc, -1.0 / denom);
}

/// L = sum_k bce_k + lambda * ncsl (the regularizer enters only when enabled).
inline Tensor total_loss(const std::vector<Tensor>& bce_terms, const Tensor* ncsl_term,
                         const LossConfig& cfg) {
  if (bce_terms.empty()) throw ContractError("total_loss: no classification terms");
  Tensor total = bce_terms.front();
  for (std::size_t k = 1; k < bce_terms.size(); ++k) total = add(total, bce_terms[k]);
  if (cfg.ncsl_enabled && ncsl_term) total = add(total, scale(*ncsl_term, cfg.lambda));
  return total;
}

}  // namespace swingrade
