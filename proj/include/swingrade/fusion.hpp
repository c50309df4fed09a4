#pragma once

#include <string>
#include <vector>

#include "swingrade/backbone.hpp"
#include "swingrade/nn.hpp"

namespace swingrade {

/// Per-token channel normalization followed by the spatial average:
/// [B x H x W x C] -> [B x C]. Invariant to any permutation of positions.
inline Tensor pool_normalize(const Tensor& stage_map, double eps = 1e-12) {
  std::size_t b = stage_map.extent(0), h = stage_map.extent(1), w = stage_map.extent(2),
              c = stage_map.extent(3);
  Tensor t = reshape(stage_map, {b, h * w, c});
  t = layer_normalize(t, 2, eps);
  return mean_over_axis(t, 1);
}

/// Two-layer perceptron mapping one pooled stage vector into the shared
/// embedding space.
struct ProjectionHead {
  Linear l1, l2;

  ProjectionHead() = default;
  ProjectionHead(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t in_dim,
                 std::size_t embed_dim)
      : l1(reg, rng, prefix + ".layer1", in_dim, embed_dim),
        l2(reg, rng, prefix + ".layer2", embed_dim, embed_dim) {}

  Tensor forward(const Tensor& pooled) const { return l2.forward(gelu(l1.forward(pooled))); }
};

struct FusedFeatures {
  std::vector<Tensor> projected;  // S entries of [B x d_e], stage order
  Tensor concatenated;            // [B x S*d_e]
};

/// Stage-ordered concatenation of equal-length projections.
inline Tensor fuse(const std::vector<Tensor>& projections) {
  if (projections.empty()) throw ContractError("fuse: no projections");
  std::size_t d = projections.front().shape().back();
  for (const Tensor& p : projections) {
    if (p.shape().back() != d) {
      throw DimensionError("fuse: ragged projection lengths " + shape_str(p.shape()) + " vs " +
                           std::to_string(d));
    }
  }
  if (projections.size() == 1) return projections.front();
  return concat(projections, projections.front().rank() - 1);
}

/// Projects every backbone stage into a common d_e-dimensional space and
/// concatenates the results in stage order.
class FeatureFusion {
 public:
  FeatureFusion() = default;
  FeatureFusion(ParamRegistry& reg, Rng& rng, const std::vector<std::size_t>& stage_dims,
                std::size_t embed_dim)
      : embed_dim_(embed_dim) {
    for (std::size_t s = 0; s < stage_dims.size(); ++s) {
      heads_.emplace_back(reg, rng, "proj.stage" + std::to_string(s + 1), stage_dims[s],
                          embed_dim);
    }
  }

  std::size_t embed_dim() const { return embed_dim_; }
  std::size_t stages() const { return heads_.size(); }

  Tensor project(std::size_t stage, const Tensor& pooled) const {
    return heads_.at(stage).forward(pooled);
  }

  FusedFeatures forward(const BackboneOutput& backbone) const {
    if (backbone.stage_maps.size() != heads_.size()) {
      throw DimensionError("fusion: expected " + std::to_string(heads_.size()) +
                           " stage maps, got " + std::to_string(backbone.stage_maps.size()));
    }
    FusedFeatures out;
    for (std::size_t s = 0; s < heads_.size(); ++s) {
      out.projected.push_back(heads_[s].forward(pool_normalize(backbone.stage_maps[s])));
    }
    out.concatenated = fuse(out.projected);
    return out;
  }

 private:
  std::vector<ProjectionHead> heads_;
  std::size_t embed_dim_ = 0;
};

}  // namespace swingrade
