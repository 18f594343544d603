#pragma once

#include <cstdint>
#include <vector>

#include "metabit/metadata/metadata.hpp"
#include "metabit/tensor/autograd.hpp"

namespace metabit {

// Quarter-pel to integer pel, rounding half away from zero.
inline int quarter_pel_to_pel(int q) { return q >= 0 ? (q + 2) / 4 : -((-q + 2) / 4); }

// A linear map between images of the same H x W, applied identically to
// every leading (batch, channel) slice: out[t] is the mean of in[src[k]] for
// k in [offsets[t], offsets[t+1]). Every target has at least one source.
struct SpatialMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> offsets;  // height*width + 1
  std::vector<std::int32_t> src;
};

// Motion compensation: every output pixel gathers the pixel its block's
// vector points at, with per-pixel coordinate clamping.
SpatialMap forward_warp_map(const MVField& mv, int height, int width);

struct ReverseWarpMap {
  SpatialMap map;
  std::vector<std::int32_t> counts;  // writes per target pixel
};

// Scatter of each block to the position its vector points at. Overlaps are
// averaged; targets outside the frame are dropped; unwritten pixels keep the
// input value (identity fallback).
ReverseWarpMap reverse_warp_map(const MVField& mv, int height, int width);

// x: [..., H, W] with rank >= 2.
Tensor apply_spatial_map(const Tensor& x, const SpatialMap& map);
Var apply_spatial_map(const Var& x, const SpatialMap& map);

Tensor forward_warp(const Tensor& x, const MVField& mv);
Var forward_warp(const Var& x, const MVField& mv);

struct ReverseWarpResult {
  Var features;
  Tensor coverage;  // [1, H, W], 1 where written at least once, else 0
  std::vector<std::int32_t> counts;
};
ReverseWarpResult reverse_warp(const Var& x, const MVField& mv);

struct AlignedVolume {
  std::vector<Var> features;      // one per P frame, in I-frame coordinates
  std::vector<Tensor> coverage;   // [1, H, W] each, values in [0, 1]
};

// p_features[k-1] belongs to GOP frame k. Frame k is carried to the I frame
// by reverse warps with the vectors of frames k, k-1, ..., 1. Coverage is
// carried along the same hops and multiplied by each hop's own coverage.
AlignedVolume align_gop_features(const std::vector<Var>& p_features, const GopMetadata& meta);

}  // namespace metabit
