#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "swingrade/nn.hpp"
#include "swingrade/ops.hpp"

namespace swingrade {

/// Hierarchical windowed-attention feature extractor. Stage s halves the
/// spatial side and doubles the channel width of stage s-1; every stage
/// emits its post-block feature map.
struct BackboneConfig {
  std::size_t image_size = 64;
  std::size_t in_channels = 3;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> depths = {2, 2, 2, 2};
  std::vector<std::size_t> num_heads = {1, 2, 4, 8};
  std::size_t window_size = 2;
  std::size_t mlp_ratio = 4;

  std::size_t stages() const { return depths.size(); }

  // 0-based stage index
  std::size_t side_at(std::size_t s) const {
    return (image_size / patch_size) >> s;
  }
  std::size_t dim_at(std::size_t s) const { return embed_dim << s; }

  void validate() const {
    if (image_size == 0 || patch_size == 0 || image_size % patch_size != 0) {
      throw ConfigError("backbone: image_size " + std::to_string(image_size) +
                        " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (depths.empty() || depths.size() != num_heads.size()) {
      throw ConfigError("backbone: depths and num_heads must be non-empty and equal length");
    }
    if (window_size == 0) throw ConfigError("backbone: window_size must be positive");
    for (std::size_t s = 0; s < stages(); ++s) {
      if (depths[s] == 0) throw ConfigError("backbone: depth must be >= 1 at every stage");
      std::size_t side = side_at(s);
      if (side == 0 || side % window_size != 0) {
        throw ConfigError("backbone: stage " + std::to_string(s + 1) + " side " +
                          std::to_string(side) + " not divisible by window_size " +
                          std::to_string(window_size));
      }
      if (num_heads[s] == 0 || dim_at(s) % num_heads[s] != 0) {
        throw ConfigError("backbone: stage " + std::to_string(s + 1) + " dim " +
                          std::to_string(dim_at(s)) + " not divisible by " +
                          std::to_string(num_heads[s]) + " heads");
      }
    }
  }
};

struct BackboneOutput {
  std::vector<Tensor> stage_maps;  // stage s: [B x H_s x W_s x C_s]
};

/// [B x H x W x C] -> [B*nW x w*w x C], non-overlapping windows in row-major
/// window order.
inline Tensor window_partition(const Tensor& map, std::size_t w) {
  if (map.rank() != 4) {
    throw DimensionError("window_partition: expected [B,H,W,C], got " + shape_str(map.shape()));
  }
  std::size_t b = map.extent(0), h = map.extent(1), ww = map.extent(2), c = map.extent(3);
  if (w == 0 || h % w != 0 || ww % w != 0) {
    throw ConfigError("window_partition: " + std::to_string(h) + "x" + std::to_string(ww) +
                      " map not divisible by window " + std::to_string(w));
  }
  Tensor t = reshape(map, {b, h / w, w, ww / w, w, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {b * (h / w) * (ww / w), w * w, c});
}

/// Exact inverse of window_partition.
inline Tensor window_reverse(const Tensor& windows, std::size_t b, std::size_t h,
                             std::size_t w_map, std::size_t w) {
  std::size_t count = b * (h / w) * (w_map / w);
  if (windows.rank() != 3 || windows.extent(0) != count || windows.extent(1) != w * w) {
    throw DimensionError("window_reverse: window count/shape " + shape_str(windows.shape()) +
                         " inconsistent with " + std::to_string(h) + "x" + std::to_string(w_map) +
                         " map, window " + std::to_string(w));
  }
  std::size_t c = windows.extent(2);
  Tensor t = reshape(windows, {b, h / w, w_map / w, w, w, c});
  t = permute(t, {0, 1, 3, 2, 4, 5});
  return reshape(t, {b, h, w_map, c});
}

/// Additive attention mask for shifted windows: 0 where two tokens of a
/// window originate from the same pre-shift region, -1e9 otherwise, so
/// attention never crosses the wrapped-around boundary. Shape [nW x T x T].
inline Tensor shifted_attention_mask(std::size_t h, std::size_t w_map, std::size_t w,
                                     std::size_t shift) {
  if (shift >= w) {
    throw ConfigError("shifted_attention_mask: shift " + std::to_string(shift) +
                      " must be smaller than window " + std::to_string(w));
  }
  std::size_t nw = (h / w) * (w_map / w);
  std::size_t t = w * w;
  Tensor mask = Tensor::zeros({nw, t, t});
  if (shift == 0) return mask;
  // 3x3 region labels of the rolled canvas; each region is one contiguous
  // block of the original map
  auto band = [&](std::size_t v, std::size_t extent) {
    if (v < extent - w) return 0;
    if (v < extent - shift) return 1;
    return 2;
  };
  std::vector<int> region(h * w_map);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w_map; ++x)
      region[y * w_map + x] = band(y, h) * 3 + band(x, w_map);
  auto& m = mask.data();
  for (std::size_t wy = 0; wy < h / w; ++wy) {
    for (std::size_t wx = 0; wx < w_map / w; ++wx) {
      std::size_t win = wy * (w_map / w) + wx;
      for (std::size_t i = 0; i < t; ++i) {
        int ri = region[(wy * w + i / w) * w_map + (wx * w + i % w)];
        for (std::size_t j = 0; j < t; ++j) {
          int rj = region[(wy * w + j / w) * w_map + (wx * w + j % w)];
          if (ri != rj) m[(win * t + i) * t + j] = -1e9;
        }
      }
    }
  }
  return mask;
}

namespace detail {

/// Relative-offset index table for a w x w window: entry (i, j) is the row of
/// the bias table holding the learned bias for token pair (i, j).
inline std::vector<std::size_t> relative_index(std::size_t w) {
  std::size_t t = w * w;
  std::size_t span = 2 * w - 1;
  std::vector<std::size_t> idx(t * t);
  for (std::size_t i = 0; i < t; ++i) {
    long long yi = static_cast<long long>(i / w), xi = static_cast<long long>(i % w);
    for (std::size_t j = 0; j < t; ++j) {
      long long yj = static_cast<long long>(j / w), xj = static_cast<long long>(j % w);
      std::size_t dy = static_cast<std::size_t>(yi - yj + static_cast<long long>(w) - 1);
      std::size_t dx = static_cast<std::size_t>(xi - xj + static_cast<long long>(w) - 1);
      idx[i * t + j] = dy * span + dx;
    }
  }
  return idx;
}

}  // namespace detail

/// Multi-head self-attention within independent windows, with a learned
/// relative position bias per head.
struct WindowAttention {
  Linear qkv;
  Linear proj;
  Tensor rel_bias;  // [(2w-1)^2 x heads], zero-initialized
  std::vector<std::size_t> rel_index;
  std::size_t heads = 1;
  std::size_t window = 1;
  std::size_t channels = 0;

  WindowAttention() = default;
  WindowAttention(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t dim,
                  std::size_t n_heads, std::size_t w)
      : qkv(reg, rng, prefix + ".qkv", dim, 3 * dim),
        proj(reg, rng, prefix + ".proj", dim, dim),
        heads(n_heads),
        window(w),
        channels(dim) {
    if (n_heads == 0 || dim % n_heads != 0) {
      throw ConfigError("window_attention: dim " + std::to_string(dim) +
                        " not divisible by " + std::to_string(n_heads) + " heads");
    }
    rel_bias = reg.create_zeros(prefix + ".rel_bias", {(2 * w - 1) * (2 * w - 1), n_heads});
    rel_index = detail::relative_index(w);
  }

  /// tokens: [NW x T x C] with NW = batch * windows-per-map. mask, when
  /// given, is [nW x T x T] and is tiled across the batch.
  Tensor forward(const Tensor& tokens, const Tensor* mask, std::size_t batch) const {
    std::size_t nw = tokens.extent(0), t = tokens.extent(1), c = tokens.extent(2);
    std::size_t hd = c / heads;
    Tensor qkv_out = reshape(qkv.forward(reshape(tokens, {nw * t, c})), {nw, t, 3 * c});
    Tensor q = slice(qkv_out, 2, 0, c);
    Tensor k = slice(qkv_out, 2, c, c);
    Tensor v = slice(qkv_out, 2, 2 * c, c);
    Tensor bias_all = embedding_select(rel_bias, rel_index);  // [T*T x heads]
    Tensor mask_tiled;
    if (mask) {
      mask_tiled = reshape(tile_leading(*mask, batch), {nw, t, t});
    }
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor qi = slice(q, 2, i * hd, hd);
      Tensor ki = slice(k, 2, i * hd, hd);
      Tensor vi = slice(v, 2, i * hd, hd);
      Tensor logits = scale(bmm(qi, ki, /*trans_b=*/true), inv_sqrt);
      Tensor bias_i = reshape(slice(bias_all, 1, i, 1), {t, t});
      logits = add(logits, tile_leading(bias_i, nw));
      if (mask) logits = add(logits, mask_tiled);
      Tensor att = softmax(logits, 2);
      outs.push_back(bmm(att, vi));
    }
    Tensor out = concat(outs, 2);
    return reshape(proj.forward(reshape(out, {nw * t, c})), {nw, t, c});
  }
};

/// Pre-norm residual block: x + Attn(LN(x)) then + MLP(LN(.)). Shifted
/// variants roll the map before windowing and mask wrapped-around pairs.
struct SwinBlock {
  LayerNormAffine norm1, norm2;
  WindowAttention attn;
  Linear fc1, fc2;
  bool shifted = false;
  std::size_t window = 1;
  std::size_t shift = 0;

  SwinBlock() = default;
  SwinBlock(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t dim,
            std::size_t n_heads, std::size_t w, std::size_t mlp_ratio, bool is_shifted)
      : norm1(reg, prefix + ".norm1", dim),
        norm2(reg, prefix + ".norm2", dim),
        attn(reg, rng, prefix + ".attn", dim, n_heads, w),
        fc1(reg, rng, prefix + ".mlp.fc1", dim, mlp_ratio * dim),
        fc2(reg, rng, prefix + ".mlp.fc2", mlp_ratio * dim, dim),
        shifted(is_shifted),
        window(w),
        shift(is_shifted ? w / 2 : 0) {}

  Tensor forward(const Tensor& map, const Tensor* mask) const {
    std::size_t b = map.extent(0), h = map.extent(1), w_map = map.extent(2), c = map.extent(3);
    Tensor y = norm1.forward(map);
    bool roll = shifted && shift > 0;
    if (roll) y = cyclic_shift(y, -static_cast<long long>(shift), -static_cast<long long>(shift));
    Tensor windows = window_partition(y, window);
    Tensor att = attn.forward(windows, roll ? mask : nullptr, b);
    y = window_reverse(att, b, h, w_map, window);
    if (roll) y = cyclic_shift(y, static_cast<long long>(shift), static_cast<long long>(shift));
    Tensor x = add(map, y);
    Tensor z = reshape(norm2.forward(x), {b * h * w_map, c});
    z = fc2.forward(gelu(fc1.forward(z)));
    return add(x, reshape(z, {b, h, w_map, c}));
  }
};

/// 2x2 neighborhood concatenation, normalization, and linear reduction to
/// twice the input width; halves both spatial sides.
struct PatchMerge {
  LayerNormAffine norm;
  Linear reduce;  // bias-free

  PatchMerge() = default;
  PatchMerge(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t in_dim)
      : norm(reg, prefix + ".norm", 4 * in_dim),
        reduce(reg, rng, prefix + ".reduce", 4 * in_dim, 2 * in_dim, /*with_bias=*/false) {}

  Tensor forward(const Tensor& map) const {
    std::size_t b = map.extent(0), h = map.extent(1), w = map.extent(2), c = map.extent(3);
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("patch_merge: odd spatial extent " + shape_str(map.shape()));
    }
    Tensor t = reshape(map, {b, h / 2, 2, w / 2, 2, c});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    t = reshape(t, {b * (h / 2) * (w / 2), 4 * c});
    t = reduce.forward(norm.forward(t));
    return reshape(t, {b, h / 2, w / 2, 2 * c});
  }
};

/// Flattens p x p patches and projects them linearly to the embedding width.
struct PatchEmbed {
  Linear proj;
  std::size_t patch = 4;

  PatchEmbed() = default;
  PatchEmbed(ParamRegistry& reg, Rng& rng, const std::string& prefix, std::size_t p,
             std::size_t in_channels, std::size_t embed_dim)
      : proj(reg, rng, prefix, p * p * in_channels, embed_dim), patch(p) {}

  Tensor forward(const Tensor& images) const {
    std::size_t b = images.extent(0), h = images.extent(1), w = images.extent(2),
                c = images.extent(3);
    if (h % patch != 0 || w % patch != 0) {
      throw ConfigError("patch_embed: image " + shape_str(images.shape()) +
                        " not divisible by patch " + std::to_string(patch));
    }
    Tensor t = reshape(images, {b, h / patch, patch, w / patch, patch, c});
    t = permute(t, {0, 1, 3, 2, 4, 5});
    t = reshape(t, {b * (h / patch) * (w / patch), patch * patch * c});
    t = proj.forward(t);
    return reshape(t, {b, h / patch, w / patch, proj.weight.extent(1)});
  }
};

class SwinBackbone {
 public:
  SwinBackbone(const BackboneConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    embed_ = PatchEmbed(reg, rng, "patch_embed", cfg_.patch_size, cfg_.in_channels,
                        cfg_.embed_dim);
    std::size_t shift = cfg_.window_size / 2;
    for (std::size_t s = 0; s < cfg_.stages(); ++s) {
      Stage stage;
      std::string sp = "stage" + std::to_string(s + 1);
      if (s > 0) {
        stage.merge = std::make_unique<PatchMerge>(reg, rng, sp + ".merge", cfg_.dim_at(s - 1));
      }
      bool any_shifted = false;
      for (std::size_t bidx = 0; bidx < cfg_.depths[s]; ++bidx) {
        bool shifted = (bidx % 2 == 1);
        any_shifted = any_shifted || (shifted && shift > 0);
        stage.blocks.emplace_back(reg, rng, sp + ".block" + std::to_string(bidx + 1),
                                  cfg_.dim_at(s), cfg_.num_heads[s], cfg_.window_size,
                                  cfg_.mlp_ratio, shifted);
      }
      if (any_shifted) {
        stage.mask = shifted_attention_mask(cfg_.side_at(s), cfg_.side_at(s), cfg_.window_size,
                                            shift);
      }
      stages_.push_back(std::move(stage));
    }
  }

  const BackboneConfig& config() const { return cfg_; }

  /// images: [B x image_size x image_size x in_channels]. Returns one map per
  /// stage, taken after that stage's blocks and before the next merge.
  BackboneOutput forward(const Tensor& images) const {
    if (images.rank() != 4 || images.extent(1) != cfg_.image_size ||
        images.extent(2) != cfg_.image_size || images.extent(3) != cfg_.in_channels) {
      throw DimensionError("backbone: image shape " + shape_str(images.shape()) +
                           " does not match config");
    }
    BackboneOutput out;
    Tensor t = embed_.forward(images);
    for (const Stage& stage : stages_) {
      if (stage.merge) t = stage.merge->forward(t);
      for (const SwinBlock& blk : stage.blocks) {
        t = blk.forward(t, stage.mask.defined() ? &stage.mask : nullptr);
      }
      out.stage_maps.push_back(t);
    }
    return out;
  }

 private:
  struct Stage {
    std::unique_ptr<PatchMerge> merge;
    std::vector<SwinBlock> blocks;
    Tensor mask;
  };

  BackboneConfig cfg_;
  PatchEmbed embed_;
  std::vector<Stage> stages_;
};

}  // namespace swingrade
