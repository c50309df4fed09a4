#pragma once

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "swingrade/ops.hpp"
#include "swingrade/tensor.hpp"

namespace swingrade {

/// Creates and owns the named trainable tensors of one model. Names must be
/// unique; registration order is the canonical checkpoint order.
class ParamRegistry {
 public:
  Tensor create(const std::string& name, Shape shape, std::vector<double> init) {
    if (!names_.insert(name).second) {
      throw ConfigError("duplicate parameter name: " + name);
    }
    Tensor t = Tensor::from(std::move(shape), std::move(init), /*requires_grad=*/true);
    params_.push_back({t, name});
    return t;
  }

  Tensor create_randn(const std::string& name, Shape shape, Rng& rng, double sigma = 0.02) {
    std::size_t n = shape_numel(shape);
    std::vector<double> d(n);
    for (auto& v : d) v = rng.truncated_normal(sigma);
    return create(name, std::move(shape), std::move(d));
  }

  Tensor create_zeros(const std::string& name, Shape shape) {
    std::size_t n = shape_numel(shape);
    return create(name, std::move(shape), std::vector<double>(n, 0.0));
  }

  Tensor create_full(const std::string& name, Shape shape, double v) {
    std::size_t n = shape_numel(shape);
    return create(name, std::move(shape), std::vector<double>(n, v));
  }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_set<std::string> names_;
};

/// y = x W + b with x viewed as rows [N x in]; weight stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer is bias-free

  Linear() = default;
  Linear(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t in,
         std::size_t out, bool with_bias = true) {
    weight = reg.create_randn(prefix + ".weight", {in, out}, rng);
    if (with_bias) bias = reg.create_zeros(prefix + ".bias", {out});
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    if (bias.defined()) y = add_rowvec(y, bias);
    return y;
  }
};

/// Layer normalization over the last axis with learned scale and shift.
struct LayerNormAffine {
  Tensor gamma, beta;
  double eps = 1e-12;

  LayerNormAffine() = default;
  LayerNormAffine(ParamRegistry& reg, const std::string& prefix, std::size_t dim) {
    gamma = reg.create_full(prefix + ".gamma", {dim}, 1.0);
    beta = reg.create_zeros(prefix + ".beta", {dim});
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = layer_normalize(x, x.rank() - 1, eps);
    return add_rowvec(mul_rowvec(y, gamma), beta);
  }
};

}  // namespace swingrade
