#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "swingrade/nn.hpp"

namespace swingrade {

enum class HeadKind { MPHN, SPHN, Regressor };

inline const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::MPHN: return "mphn";
    case HeadKind::SPHN: return "sphn";
    default: return "reg";
  }
}

inline HeadKind head_kind_from(const std::string& s) {
  if (s == "mphn") return HeadKind::MPHN;
  if (s == "sphn") return HeadKind::SPHN;
  if (s == "reg") return HeadKind::Regressor;
  throw ConfigError("unknown head kind: " + s);
}

/// One-vs-rest decision maker for a single grade: two gelu layers whose
/// output is the grade's decision-feature vector, reduced to a scalar by a
/// learned vector.
struct ClassifierHead {
  Linear l1, l2;
  Tensor omega;

  ClassifierHead() = default;
  ClassifierHead(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t in_dim,
                 std::size_t hidden, std::size_t embed_dim)
      : l1(reg, rng, prefix + ".layer1", in_dim, hidden),
        l2(reg, rng, prefix + ".layer2", hidden, embed_dim),
        omega(reg.create_randn(prefix + ".omega", {embed_dim}, rng)) {}

  /// Penultimate activation D_k: [B x in] -> [B x d_e].
  Tensor decision_features(const Tensor& fused) const {
    return gelu(l2.forward(gelu(l1.forward(fused))));
  }

  /// Pre-sigmoid score omega . D_k per sample: [B x 1].
  Tensor prescore(const Tensor& dk) const {
    return matmul(dk, reshape(omega, {omega.numel(), 1}));
  }
};

/// y_k = sigmoid(omega . D_k).
inline Tensor predict(const Tensor& dk, const Tensor& omega) {
  if (dk.shape().back() != omega.numel()) {
    throw DimensionError("predict: feature length " + shape_str(dk.shape()) +
                         " vs omega " + shape_str(omega.shape()));
  }
  return sigmoid(matmul(dk, reshape(omega, {omega.numel(), 1})));
}

/// Elementwise mean of the per-grade decision features.
inline Tensor aggregate_decision_features(const std::vector<Tensor>& features) {
  if (features.empty()) throw ContractError("aggregate_decision_features: no inputs");
  Tensor acc = features.front();
  for (std::size_t k = 1; k < features.size(); ++k) acc = add(acc, features[k]);
  return scale(acc, 1.0 / static_cast<double>(features.size()));
}

/// Argmax over per-grade likelihoods; ties break toward the lower grade.
inline int decide_grade(const std::vector<double>& y) {
  int best = 0;
  for (std::size_t k = 1; k < y.size(); ++k)
    if (y[k] > y[best]) best = static_cast<int>(k);
  return best;
}

/// clamp(round(yhat)) with half-integers rounding toward the lower grade.
inline int regressor_decide(double yhat, int grades) {
  double r = std::ceil(yhat - 0.5);
  if (r < 0.0) r = 0.0;
  if (r > grades - 1) r = grades - 1;
  return static_cast<int>(r);
}

/// Shared three-layer perceptron over all grades (ablation baseline).
struct SphnHead {
  Linear l1, l2, l3;

  SphnHead() = default;
  SphnHead(ParamRegistry& reg, Rng& rng, std::size_t in_dim, std::size_t hidden,
           std::size_t embed_dim, std::size_t grades)
      : l1(reg, rng, "sphn.layer1", in_dim, hidden),
        l2(reg, rng, "sphn.layer2", hidden, embed_dim),
        l3(reg, rng, "sphn.layer3", embed_dim, grades) {}

  Tensor penultimate(const Tensor& fused) const {
    return gelu(l2.forward(gelu(l1.forward(fused))));
  }
  Tensor logits(const Tensor& pen) const { return l3.forward(pen); }
};

/// Single-scalar regression head (ablation baseline).
struct RegressorHead {
  Linear l1, l2, l3;

  RegressorHead() = default;
  RegressorHead(ParamRegistry& reg, Rng& rng, std::size_t in_dim, std::size_t hidden,
                std::size_t embed_dim)
      : l1(reg, rng, "reg.layer1", in_dim, hidden),
        l2(reg, rng, "reg.layer2", hidden, embed_dim),
        l3(reg, rng, "reg.layer3", embed_dim, 1) {}

  Tensor penultimate(const Tensor& fused) const {
    return gelu(l2.forward(gelu(l1.forward(fused))));
  }
  Tensor output(const Tensor& pen) const { return l3.forward(pen); }
};

struct HeadOutputs {
  HeadKind kind = HeadKind::MPHN;
  std::vector<Tensor> decision_features;  // MPHN: K entries; others: the penultimate
  Tensor aggregated;                      // alignment target before stop-gradient [B x d_e]
  Tensor scores;                          // pre-activation [B x K] (MPHN/SPHN) or [B x 1] (reg)
  Tensor probabilities;                   // sigmoid/softmax of scores; undefined for reg
};

/// The prediction stage in one of its three ablation variants.
class HeadModule {
 public:
  HeadModule() = default;
  HeadModule(HeadKind kind, ParamRegistry& reg, Rng& rng, std::size_t in_dim,
             std::size_t hidden, std::size_t embed_dim, std::size_t grades)
      : kind_(kind), grades_(grades) {
    switch (kind) {
      case HeadKind::MPHN:
        for (std::size_t k = 0; k < grades; ++k) {
          mphn_.emplace_back(reg, rng, "head" + std::to_string(k), in_dim, hidden, embed_dim);
        }
        break;
      case HeadKind::SPHN:
        sphn_ = SphnHead(reg, rng, in_dim, hidden, embed_dim, grades);
        break;
      case HeadKind::Regressor:
        reg_ = RegressorHead(reg, rng, in_dim, hidden, embed_dim);
        break;
    }
  }

  HeadKind kind() const { return kind_; }
  std::size_t grades() const { return grades_; }

  HeadOutputs forward(const Tensor& fused) const {
    HeadOutputs out;
    out.kind = kind_;
    switch (kind_) {
      case HeadKind::MPHN: {
        std::vector<Tensor> scores;
        for (const ClassifierHead& head : mphn_) {
          Tensor dk = head.decision_features(fused);
          out.decision_features.push_back(dk);
          scores.push_back(head.prescore(dk));
        }
        out.aggregated = aggregate_decision_features(out.decision_features);
        out.scores = concat(scores, 1);
        out.probabilities = sigmoid(out.scores);
        break;
      }
      case HeadKind::SPHN: {
        Tensor pen = sphn_.penultimate(fused);
        out.decision_features.push_back(pen);
        out.aggregated = pen;
        out.scores = sphn_.logits(pen);
        out.probabilities = softmax(out.scores, 1);
        break;
      }
      case HeadKind::Regressor: {
        Tensor pen = reg_.penultimate(fused);
        out.decision_features.push_back(pen);
        out.aggregated = pen;
        out.scores = reg_.output(pen);
        break;
      }
    }
    return out;
  }

  /// Per-sample grade decisions.
  std::vector<int> decide(const HeadOutputs& out) const {
    std::size_t b = out.scores.extent(0);
    std::vector<int> grades(b);
    if (kind_ == HeadKind::Regressor) {
      for (std::size_t i = 0; i < b; ++i)
        grades[i] = regressor_decide(out.scores[i], static_cast<int>(grades_));
      return grades;
    }
    for (std::size_t i = 0; i < b; ++i) {
      std::vector<double> row(grades_);
      for (std::size_t k = 0; k < grades_; ++k) row[k] = out.probabilities[i * grades_ + k];
      grades[i] = decide_grade(row);
    }
    return grades;
  }

 private:
  HeadKind kind_ = HeadKind::MPHN;
  std::size_t grades_ = 5;
  std::vector<ClassifierHead> mphn_;
  SphnHead sphn_;
  RegressorHead reg_;
};

}  // namespace swingrade
