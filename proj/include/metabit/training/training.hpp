#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "metabit/evalcli/video.hpp"
#include "metabit/losses/losses.hpp"
#include "metabit/pipeline/pipeline.hpp"
#include "metabit/tensor/optim.hpp"
#include "metabit/toycodec/toycodec.hpp"

namespace metabit {

// One GOP: degraded decoder output, pristine target, codec metadata. Frames
// are [3, H, W] in [0, 1].
struct GopSample {
  std::vector<Tensor> degraded;
  std::vector<Tensor> target;
  GopMetadata meta;
};

struct Dataset {
  std::vector<GopSample> gops;
};

// A clip passed through the toy codec in I420: luma at full size, chroma
// planes at half size with halved vectors. Decoder output is rounded to 8 bits.
struct ToyClip {
  VideoClip degraded;
  std::vector<GopMetadata> gops;
  double bits = 0.0;  // toy codec rate estimate
};
ToyClip encode_toy_clip(const VideoClip& reference, const ToyCodecConfig& cfg);

// Procedural footage (see toycodec/scene.hpp) as an I420 clip.
VideoClip scene_clip(int frames, int width, int height, std::uint64_t seed);

struct ToyDataOptions {
  int width = 64;
  int height = 64;
  int clips = 1;
  int qp = 35;
  int gop_size = 7;
  std::uint64_t seed = 1;
};

// Procedural clips through encode_toy_clip, one GOP each; targets are the
// I420 references converted to RGB, as a directory dataset would see them.
Dataset toy_dataset(const ToyDataOptions& opts);

// Every <name>.mbmd sidecar in `dir` pairs with <name>.yuv (degraded) and
// <name>.ref.yuv (reference), both I420 at the sidecar's dimensions. GOPs
// shorter than gop_size are skipped.
Dataset load_dataset_dir(const std::filesystem::path& dir, int gop_size);

// Mirrors the block grid; horizontal flips negate dx, vertical flips dy.
MVField flip_mv(const MVField& mv, bool horizontal, bool vertical);
QPMap flip_qp(const QPMap& qp, bool horizontal, bool vertical);
Tensor flip_frame(const Tensor& chw, bool horizontal, bool vertical);

// Block-aligned square crop at (x0, y0); size and offsets must be multiples
// of the block size.
GopSample crop_gop(const GopSample& s, int x0, int y0, int size);
GopSample flip_gop(const GopSample& s, bool horizontal, bool vertical);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ModelConfig model{8, 4, 2, 7, 1};
  int crop = 64;
  int epochs = 500;
  int batch_size = 4;
  double lr = 1e-4;
  bool anneal = true;
  int anneal_start = -1;  // -1: start of the final third
  LossMode mode = LossMode::kRegression;
  LossWeights weights = LossWeights::regression();
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;
  bool flips = true;

  int critic_steps = 5;
  double critic_lr = 5e-5;
  CriticConfig critic{42, 3, 8, 32, 0.01};

  std::string data = "toy";  // "toy" or a directory
  ToyDataOptions toy;

  std::filesystem::path checkpoint;   // written at the end when set
  std::filesystem::path curve;        // CSV loss curve when set
  std::filesystem::path init;         // starting weights (required for GAN)

  int effective_anneal_start() const {
    if (!anneal) return epochs;
    return anneal_start >= 0 ? anneal_start : epochs - epochs / 3;
  }

  // Desk defaults shrink the model, crop and schedule; the paper_* presets
  // restore the full model and schedules.
  static TrainConfig desk() { return {}; }
  static TrainConfig paper_regression();
  static TrainConfig paper_gan();
  static TrainConfig desk_gan();
};

// key=value lines, '#' comments. `scale = desk|paper` and `preset =
// regression|gan` select a base config; remaining keys override it
// regardless of order. Unknown keys are errors.
TrainConfig parse_train_config(std::istream& is);
TrainConfig load_train_config(const std::filesystem::path& path);
void write_train_config(std::ostream& os, const TrainConfig& cfg);
void validate(const TrainConfig& cfg);

Dataset build_dataset(const TrainConfig& cfg);

// One training batch: for each GOP index, a random block-aligned crop and,
// when enabled, random flips, applied identically to frames, targets and
// metadata.
std::vector<GopSample> make_batch(const Dataset& data, const std::vector<std::size_t>& indices, int crop,
                                  bool flips, std::mt19937_64& rng);
std::vector<GopSample> sample_batch(const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng);

struct CurveRow {
  int epoch = 0;
  std::int64_t step = 0;
  double l1 = 0, dog = 0, wgan = 0, texture = 0, total = 0;
  double lr = 0;
  double critic = 0;  // critic loss of the last critic step (GAN only)
};

void write_curve(std::ostream& os, const std::vector<CurveRow>& curve);

struct TrainResult {
  ModelParams model;
  std::vector<CurveRow> curve;
  std::optional<CriticParams> critic;  // GAN runs only
};

// Adam (or RMSProp) on the composite regression loss; one epoch is one pass
// over every GOP of the dataset in shuffled order; the learning rate is
// cosine-annealed to zero from anneal_start. A non-finite loss or gradient
// aborts with TrainingError. Starts from `init` when given.
TrainResult train_regression(const TrainConfig& cfg, const Dataset& data,
                             const std::optional<ModelParams>& init = std::nullopt);

// Fine-tunes `init` with RMSProp: for each generator step, critic_steps
// critic updates on fresh batches (skipped when gamma is 0), each followed by
// weight clipping. The texture term uses the toy feature network.
TrainResult train_gan(const TrainConfig& cfg, const Dataset& data, const ModelParams& init);

// Mean luma PSNR gain of the model's restoration over the degraded frames.
double delta_psnr(const ModelParams& model, const GopSample& sample);

}  // namespace metabit
