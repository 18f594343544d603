#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "metabit/gq/gq.hpp"
#include "metabit/metadata/metadata.hpp"

namespace metabit {

struct ModelConfig {
  int channels_i = 64;
  int channels_p = 16;
  int blocks_per_stack = 10;
  int gop_size = 7;
  std::uint64_t seed = 1;

  int fuse_channels() const { return channels_i + (gop_size - 1) * channels_p; }
  bool operator==(const ModelConfig&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Line-oriented key=value; '#' starts a comment; unknown keys are errors.
ModelConfig parse_model_config(std::istream& is);
ModelConfig load_model_config(const std::filesystem::path& path);
void write_model_config(std::ostream& os, const ModelConfig& cfg);
void validate(const ModelConfig& cfg);

// Initial output-conv scale of the generation stacks, so an untrained model
// starts close to the identity restoration.
inline constexpr double kGenerationOutputScale = 0.1;

struct ModelParams {
  ModelConfig config;
  StackParams i_rep;     // 3 -> channels_i
  StackParams p_rep;     // 3 -> channels_p, shared by all P frames
  ConvParams fuse_proj;  // 1x1, fuse_channels -> channels_i
  StackParams i_gen;     // channels_i -> channels_i -> 3
  StackParams p_gen;     // 6 -> channels_i -> 3, shared by all P frames

  std::vector<std::pair<std::string, Var>> named() const;
  std::vector<Var> parameters() const;
};

ModelParams init_model(const ModelConfig& cfg, DType dtype = DType::kFloat32);
std::int64_t count_parameters(const ModelParams& params);
std::int64_t count_parameters(const ModelConfig& cfg);

void save_model(const std::filesystem::path& path, const ModelParams& params);
// Loads weights for `cfg`; names and shapes must match exactly.
ModelParams load_model(const std::filesystem::path& path, const ModelConfig& cfg, DType dtype = DType::kFloat32);

// Frames are [3, H, W] in [0, 1]; meta.frames.size() == frames.size() ==
// config.gop_size, frame 0 is I. Returns one restored [3, H, W] per frame.
std::vector<Var> restore_gop(const std::vector<Var>& frames, const GopMetadata& meta, const ModelParams& params);
std::vector<Tensor> restore_gop(const std::vector<Tensor>& frames, const GopMetadata& meta,
                                const ModelParams& params);

struct StreamStats {
  std::int64_t frames_in = 0;
  std::int64_t frames_out = 0;
  std::int64_t blocks = 0;
  // Output index of the restored frame cached as the next block's I input.
  std::vector<std::int64_t> substitutions;
  // Largest number of frame tensors held at once (buffered inputs + cache).
  std::int64_t peak_resident_frames = 0;
  std::int64_t padded_frames = 0;
};

// Restores an unbounded I/P stream in blocks. A block starts either at a real
// I frame (I + gop_size-1 P frames) or, when P frames continue past a block,
// at the cached last restored P frame of the previous block, with that P
// frame's QP map. A short block (stream end or an early I frame) is padded by
// repeating its last frame as a zero-motion P frame; padded outputs are
// dropped.
class StreamingRestorer {
 public:
  using Sink = std::function<void(std::int64_t index, const Tensor& frame)>;

  StreamingRestorer(const ModelParams& params, Sink sink);

  void push(const Tensor& frame, const FrameMetadata& meta);
  void finish();
  const StreamStats& stats() const { return stats_; }

 private:
  void run_block();
  void note_resident();

  const ModelParams& params_;
  Sink sink_;
  StreamStats stats_;
  std::vector<Tensor> frames_;
  std::vector<FrameMetadata> meta_;
  bool pseudo_i_ = false;  // frames_[0] is the cached restored frame
  Tensor cached_;
  FrameMetadata cached_meta_;
  bool have_cache_ = false;
  bool started_ = false;
};

}  // namespace metabit
