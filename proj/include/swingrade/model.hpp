#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "swingrade/backbone.hpp"
#include "swingrade/fusion.hpp"
#include "swingrade/heads.hpp"
#include "swingrade/io.hpp"
#include "swingrade/losses.hpp"

namespace swingrade {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t fusion_dim = 64;    // d_e, shared embedding width
  HeadKind head_kind = HeadKind::MPHN;
  std::size_t head_hidden = 128;  // h1
  std::size_t grades = 5;         // K

  void validate() const {
    backbone.validate();
    if (fusion_dim == 0 || head_hidden == 0) throw ConfigError("model: zero layer width");
    if (grades < 2) throw ConfigError("model: need at least two grades");
  }
};

/// Backbone, per-stage projections, and the prediction heads, wired together
/// with one parameter registry. Construction from (config, seed) is
/// deterministic.
class GradingModel {
 public:
  GradingModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    backbone_ = std::make_unique<SwinBackbone>(cfg_.backbone, registry_, rng);
    std::vector<std::size_t> stage_dims;
    for (std::size_t s = 0; s < cfg_.backbone.stages(); ++s)
      stage_dims.push_back(cfg_.backbone.dim_at(s));
    fusion_ = FeatureFusion(registry_, rng, stage_dims, cfg_.fusion_dim);
    heads_ = HeadModule(cfg_.head_kind, registry_, rng, cfg_.backbone.stages() * cfg_.fusion_dim,
                        cfg_.head_hidden, cfg_.fusion_dim, cfg_.grades);
  }

  struct Forward {
    BackboneOutput backbone;
    FusedFeatures fused;
    HeadOutputs heads;
  };

  Forward forward(const Tensor& images) const {
    Forward f;
    f.backbone = backbone_->forward(images);
    f.fused = fusion_.forward(f.backbone);
    f.heads = heads_.forward(f.fused.concatenated);
    return f;
  }

  struct LossBundle {
    Tensor total;
    LossReport report;
  };

  /// Builds the combined training loss for a labeled batch. MPHN and SPHN
  /// train one-vs-rest binary cross-entropy per grade on their per-grade
  /// outputs; the regressor trains mean squared error on the grade value.
  /// `pinned_ncsl_target` substitutes fixed values for the stop-gradient
  /// alignment target (finite-difference probing only).
  LossBundle loss(const Forward& f, const std::vector<int>& labels, const LossConfig& loss_cfg,
                  const std::vector<double>* pinned_ncsl_target = nullptr) const {
    loss_cfg.validate();
    std::size_t b = labels.size();
    std::vector<Tensor> class_terms;
    if (cfg_.head_kind == HeadKind::Regressor) {
      std::vector<double> targets(b);
      for (std::size_t i = 0; i < b; ++i) targets[i] = static_cast<double>(labels[i]);
      class_terms.push_back(mse(f.heads.scores, targets));
    } else {
      for (std::size_t k = 0; k < cfg_.grades; ++k) {
        std::vector<double> truth(b);
        for (std::size_t i = 0; i < b; ++i) truth[i] = labels[i] == static_cast<int>(k) ? 1.0 : 0.0;
        class_terms.push_back(bce(slice(f.heads.probabilities, 1, k, 1), truth,
                                  loss_cfg.bce_eps));
      }
    }
    LossBundle bundle;
    Tensor reg_term;
    if (loss_cfg.ncsl_enabled) {
      reg_term = ncsl(f.fused.projected, f.heads.aggregated, 1e-12, pinned_ncsl_target);
      bundle.report.ncsl = reg_term.value();
    }
    bundle.total = total_loss(class_terms, reg_term.defined() ? &reg_term : nullptr, loss_cfg);
    for (const Tensor& t : class_terms) bundle.report.bce_per_class.push_back(t.value());
    bundle.report.total = bundle.total.value();
    return bundle;
  }

  std::vector<int> predict(const Forward& f) const { return heads_.decide(f.heads); }

  /// Grade predictions for a stack of images, without recording a graph.
  std::vector<int> predict_images(const Tensor& images) const {
    NoGradGuard ng;
    return predict(forward(images));
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return registry_.params(); }
  const std::vector<Parameter>& params() const { return registry_.params(); }
  void zero_grad() { registry_.zero_grad(); }

  void save(const std::string& path) const { save_checkpoint(path, registry_.params()); }

  /// Loads a checkpoint written by save(); every parameter must be present
  /// with a matching shape and no extra entries may remain.
  void load(const std::string& path) {
    auto entries = load_checkpoint(path);
    std::unordered_map<std::string, CheckpointEntry*> by_name;
    for (auto& e : entries) by_name[e.name] = &e;
    if (entries.size() != registry_.params().size()) {
      throw FormatError("checkpoint holds " + std::to_string(entries.size()) +
                            " parameters, model expects " +
                            std::to_string(registry_.params().size()),
                        0);
    }
    for (Parameter& p : registry_.params()) {
      auto it = by_name.find(p.name);
      if (it == by_name.end()) throw FormatError("checkpoint missing parameter " + p.name, 0);
      if (it->second->shape != p.tensor.shape()) {
        throw FormatError("checkpoint shape mismatch for " + p.name + ": " +
                              shape_str(it->second->shape) + " vs " +
                              shape_str(p.tensor.shape()),
                          0);
      }
      p.tensor.data() = it->second->data;
    }
  }

  /// Copies of all parameter values, in registry order.
  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> snap;
    for (const Parameter& p : registry_.params()) snap.push_back(p.tensor.data());
    return snap;
  }

  void restore(const std::vector<std::vector<double>>& snap) {
    auto& ps = registry_.params();
    if (snap.size() != ps.size()) throw ContractError("restore: snapshot size mismatch");
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i].tensor.data() = snap[i];
  }

 private:
  ModelConfig cfg_;
  ParamRegistry registry_;
  std::unique_ptr<SwinBackbone> backbone_;
  FeatureFusion fusion_;
  HeadModule heads_;
};

}  // namespace swingrade
