#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "metabit/metadata/metadata.hpp"
#include "metabit/tensor/tensor.hpp"

namespace metabit {

// A frame as planes of 8-bit-scale samples (0..255, float32, shape [H, W]).
// Plane 0 is luma; further planes are either full size or 4:2:0 subsampled.
using Planes = std::vector<Tensor>;

struct ToyCodecConfig {
  int block_size = 16;
  int search_radius = 8;
  int gop_size = 7;
  // QP per frame: one value for all frames, or gop_size values.
  std::vector<int> frame_qp{35};
  // Optional per-block QPs (one map per frame); overrides frame_qp.
  std::vector<QPMap> block_qp;

  static ToyCodecConfig constant(int qp, int gop_size = 7) {
    ToyCodecConfig c;
    c.gop_size = gop_size;
    c.frame_qp = {qp};
    return c;
  }
};

using Block8 = std::array<double, 64>;
using Levels8 = std::array<std::int32_t, 64>;

// Quantizer step 2^((qp-4)/6).
double quant_step(int qp);
// Orthonormal 8x8 DCT-II and its inverse, row-major blocks.
Block8 dct8x8(const Block8& block);
Block8 idct8x8(const Block8& coeffs);
// DCT, divide by the step, round half away from zero.
Levels8 quantize_block(const Block8& residual, int qp);
// Scale by the step, inverse DCT.
Block8 dequantize_block(const Levels8& levels, int qp);

struct MotionSearchResult {
  int dx = 0;  // integer pel
  int dy = 0;
  double sad = 0.0;
};

// Exhaustive integer-pel search of the block at (x0, y0) of size bw x bh in
// `cur` against `ref` (both [H, W]) over [-radius, radius]^2. Reference
// samples are clamped to the frame. Ties prefer smaller |dx|+|dy|, then
// smaller dy, then smaller dx.
MotionSearchResult motion_search(const Tensor& cur, const Tensor& ref, int x0, int y0, int bw, int bh,
                                 int radius);

struct EncodedFrame {
  std::vector<std::vector<std::int32_t>> levels;  // per plane: 64 per 8x8 tile, tile rows then columns
};

struct EncodedGop {
  std::vector<Planes> recon;   // decoder output, unclipped
  GopMetadata meta;
  std::vector<EncodedFrame> coded;
  double bit_estimate = 0.0;   // sum log2(1+|level|) + 10 bits per motion vector
};

// Vectors for a plane whose size is luma / scale (scale 1 or 2): block size
// and quarter-pel components divided by the scale.
MVField plane_motion(const MVField& luma, int scale);
int plane_scale(const Tensor& luma, const Tensor& plane);

// Residual image reconstructed from a plane's stored levels. QPs come from
// the luma-grid map `qp` (block size in luma pixels).
Tensor dequantized_residual(std::span<const std::int32_t> levels, int height, int width, const QPMap& qp,
                            int scale);

EncodedGop encode_gop(std::span<const Planes> frames, const ToyCodecConfig& cfg);
// Rebuilds the reconstructions from stored levels and metadata.
std::vector<Planes> decode_gop(const std::vector<EncodedFrame>& coded, const GopMetadata& meta,
                               const std::vector<std::pair<int, int>>& plane_dims);

// Encodes a clip in consecutive GOPs of cfg.gop_size; a shorter tail forms
// its own GOP.
std::vector<EncodedGop> encode_sequence(std::span<const Planes> frames, const ToyCodecConfig& cfg);

// Conversions between a [C, H, W] frame in [0, 1] and full-size planes.
Planes planes_from_frame(const Tensor& chw);
Tensor frame_from_planes(const Planes& planes);

}  // namespace metabit
