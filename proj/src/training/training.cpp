#include "metabit/training/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "metabit/evalcli/metrics.hpp"
#include "metabit/evalcli/video.hpp"
#include "metabit/tensor/ops.hpp"
#include "metabit/toycodec/scene.hpp"
#include "metabit/toycodec/toycodec.hpp"

namespace metabit {

namespace {

template <typename Grid>
Grid flip_grid(const Grid& g, bool horizontal, bool vertical) {
  Grid out = g;
  for (int by = 0; by < g.grid_h; ++by) {
    for (int bx = 0; bx < g.grid_w; ++bx) {
      out.at(horizontal ? g.grid_w - 1 - bx : bx, vertical ? g.grid_h - 1 - by : by) = g.at(bx, by);
    }
  }
  return out;
}

QPMap crop_qp(const QPMap& g, int cx, int cy, int cells) {
  QPMap out{g.block_size, cells, cells, {}};
  for (int by = 0; by < cells; ++by) {
    for (int bx = 0; bx < cells; ++bx) out.qp.push_back(g.at(cx + bx, cy + by));
  }
  return out;
}

MVField crop_mv(const MVField& g, int cx, int cy, int cells) {
  MVField out{g.block_size, cells, cells, {}};
  for (int by = 0; by < cells; ++by) {
    for (int bx = 0; bx < cells; ++bx) out.mv.push_back(g.at(cx + bx, cy + by));
  }
  return out;
}

Tensor crop_frame(const Tensor& chw, int x0, int y0, int size) {
  const std::int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out({c, size, size}, chw.dtype());
  for (std::int64_t k = 0; k < c; ++k) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        out.set_item((k * size + y) * size + x, chw.item((k * h + y0 + y) * w + x0 + x));
      }
    }
  }
  return out;
}

// Restored frames and targets of a batch as [B*gop, 3, H, W].
struct BatchTensors {
  Var degraded;    // [B*gop, 3, H, W]
  Var target;
  Var compressed;  // [B, 3*gop, H, W]
};

BatchTensors stack_batch(const std::vector<GopSample>& batch) {
  std::vector<Var> deg, tgt;
  for (const auto& s : batch) {
    for (std::size_t k = 0; k < s.degraded.size(); ++k) {
      const Shape& sh = s.degraded[k].shape();
      deg.push_back(Var::constant(s.degraded[k].reshaped({1, sh[0], sh[1], sh[2]})));
      tgt.push_back(Var::constant(s.target[k].reshaped({1, sh[0], sh[1], sh[2]})));
    }
  }
  BatchTensors t;
  t.degraded = concat(deg, 0);
  t.target = concat(tgt, 0);
  const Shape& d = t.degraded.shape();
  const std::int64_t b = static_cast<std::int64_t>(batch.size());
  t.compressed = reshape(t.degraded, {b, d[0] / b * d[1], d[2], d[3]});
  return t;
}

Var restore_batch(const std::vector<GopSample>& batch, const ModelParams& model) {
  std::vector<Var> out;
  for (const auto& s : batch) {
    std::vector<Var> frames;
    for (const auto& f : s.degraded) frames.push_back(Var::constant(f.to(model.i_rep.input.weight.dtype())));
    for (const auto& o : restore_gop(frames, s.meta, model)) {
      const Shape& sh = o.shape();
      out.push_back(reshape(o, {1, sh[0], sh[1], sh[2]}));
    }
  }
  return concat(out, 0);
}

ModelParams clone_model(const ModelParams& src) {
  ModelParams m = init_model(src.config, src.i_rep.input.weight.dtype());
  auto dst = m.parameters();
  const auto from = src.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].assign(from[i].value());
  return m;
}

OptimizerState make_optimizer(OptimizerKind kind, std::span<const Var> params, double lr) {
  return kind == OptimizerKind::kAdam ? make_adam(params, lr) : make_rmsprop(params, lr);
}

bool all_finite(const Tensor& t) {
  const auto v = t.to_vector();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm(const Tensor& t) {
  double s = 0;
  for (double x : t.to_vector()) s += x * x;
  return std::sqrt(s);
}

[[noreturn]] void abort_non_finite(const char* what, std::int64_t step, int epoch, double lr, const LossBreakdown& lb,
                                   const std::vector<std::pair<std::string, Var>>& named, const Gradients* grads) {
  std::ostringstream os;
  os << "non-finite " << what << " at step " << step << " (epoch " << epoch << ", lr " << lr << "): l1 " << lb.l1
     << " dog " << lb.dog << " wgan " << lb.wgan << " texture " << lb.texture;
  if (grads != nullptr) {
    double total = 0;
    std::string worst;
    double worst_norm = -1;
    for (const auto& [name, p] : named) {
      const double n = norm(grads->of(p));
      total += n * n;
      if (!std::isfinite(n)) {
        os << "; grad of " << name << " is non-finite";
      } else if (n > worst_norm) {
        worst_norm = n;
        worst = name;
      }
    }
    os << "; global grad norm " << std::sqrt(total) << ", largest finite " << worst << " (" << worst_norm << ")";
  }
  throw TrainingError(os.str());
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size)) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  }
  return out;
}

void check_dataset(const Dataset& data, const TrainConfig& cfg) {
  if (data.gops.empty()) throw TrainingError("training dataset is empty");
  for (const auto& s : data.gops) {
    if (static_cast<int>(s.degraded.size()) != cfg.model.gop_size) {
      throw TrainingError("dataset GOP has " + std::to_string(s.degraded.size()) + " frames, model expects " +
                          std::to_string(cfg.model.gop_size));
    }
    if (cfg.crop > s.meta.width || cfg.crop > s.meta.height) {
      throw TrainingError("crop " + std::to_string(cfg.crop) + " exceeds frame size " + std::to_string(s.meta.width) +
                          "x" + std::to_string(s.meta.height));
    }
  }
}

void finish(const TrainConfig& cfg, const TrainResult& r) {
  if (!cfg.checkpoint.empty()) save_model(cfg.checkpoint, r.model);
  if (!cfg.curve.empty()) {
    std::ofstream out(cfg.curve);
    if (!out) throw TrainingError("cannot write loss curve " + cfg.curve.string());
    write_curve(out, r.curve);
  }
}

}  // namespace

ToyClip encode_toy_clip(const VideoClip& reference, const ToyCodecConfig& cfg) {
  const VideoClip ref = to_yuv(reference);
  auto plane = [](const std::vector<std::uint8_t>& v, int w, int h) {
    Tensor t({h, w});
    auto d = t.data<float>();
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = v[i];
    return t;
  };
  auto bytes = [](const Tensor& t) {
    std::vector<std::uint8_t> out;
    for (float v : t.data<float>()) out.push_back(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
    return out;
  };
  std::vector<Planes> planes;
  for (const auto& f : ref.yuv) {
    planes.push_back({plane(f.y, ref.width, ref.height), plane(f.u, ref.width / 2, ref.height / 2),
                      plane(f.v, ref.width / 2, ref.height / 2)});
  }
  ToyClip out;
  out.degraded = VideoClip{ref.width, ref.height, PixelFormat::kYuv420, ref.frame_rate, {}, {}};
  for (const auto& g : encode_sequence(planes, cfg)) {
    for (const auto& p : g.recon) out.degraded.yuv.push_back({bytes(p[0]), bytes(p[1]), bytes(p[2])});
    out.gops.push_back(g.meta);
    out.bits += g.bit_estimate;
  }
  return out;
}

VideoClip scene_clip(int frames, int width, int height, std::uint64_t seed) {
  SceneOptions so;
  so.frames = frames;
  so.width = width;
  so.height = height;
  so.seed = seed;
  return to_yuv(VideoClip{width, height, PixelFormat::kRgbFloat, 25.0, {}, synthetic_scene(so)});
}

Dataset toy_dataset(const ToyDataOptions& opts) {
  Dataset d;
  for (int c = 0; c < opts.clips; ++c) {
    const VideoClip ref = scene_clip(opts.gop_size, opts.width, opts.height, opts.seed + static_cast<std::uint64_t>(c));
    const ToyClip enc = encode_toy_clip(ref, ToyCodecConfig::constant(opts.qp, opts.gop_size));
    const VideoClip deg_rgb = to_rgb(enc.degraded), ref_rgb = to_rgb(ref);
    GopSample s;
    s.meta = enc.gops.at(0);
    s.degraded = deg_rgb.rgb;
    s.target = ref_rgb.rgb;
    d.gops.push_back(std::move(s));
  }
  return d;
}

Dataset load_dataset_dir(const std::filesystem::path& dir, int gop_size) {
  if (!std::filesystem::is_directory(dir)) throw TrainingError("data directory not found: " + dir.string());
  std::vector<std::filesystem::path> sidecars;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".mbmd") sidecars.push_back(e.path());
  }
  std::sort(sidecars.begin(), sidecars.end());
  Dataset d;
  for (const auto& sc : sidecars) {
    const auto gops = load_sidecar(sc);
    if (gops.empty()) continue;
    const int w = gops[0].width, h = gops[0].height;
    auto stem = sc;
    stem.replace_extension();
    const auto degraded = to_rgb(read_yuv420(std::filesystem::path(stem.string() + ".yuv"), w, h));
    const auto reference = to_rgb(read_yuv420(std::filesystem::path(stem.string() + ".ref.yuv"), w, h));
    std::size_t frame = 0;
    for (const auto& g : gops) {
      if (frame + g.size() > degraded.rgb.size() || frame + g.size() > reference.rgb.size()) {
        throw TrainingError(sc.string() + ": sidecar describes more frames than the YUV files hold");
      }
      if (static_cast<int>(g.size()) == gop_size) {
        GopSample s;
        s.meta = g;
        for (std::size_t k = 0; k < g.size(); ++k) {
          s.degraded.push_back(degraded.rgb[frame + k]);
          s.target.push_back(reference.rgb[frame + k]);
        }
        d.gops.push_back(std::move(s));
      }
      frame += g.size();
    }
  }
  if (d.gops.empty()) throw TrainingError("no usable GOPs of size " + std::to_string(gop_size) + " in " + dir.string());
  return d;
}

MVField flip_mv(const MVField& mv, bool horizontal, bool vertical) {
  MVField out = flip_grid(mv, horizontal, vertical);
  for (auto& v : out.mv) {
    if (horizontal) v.dx = static_cast<std::int16_t>(-v.dx);
    if (vertical) v.dy = static_cast<std::int16_t>(-v.dy);
  }
  return out;
}

QPMap flip_qp(const QPMap& qp, bool horizontal, bool vertical) { return flip_grid(qp, horizontal, vertical); }

Tensor flip_frame(const Tensor& chw, bool horizontal, bool vertical) {
  if (chw.rank() != 3) throw ShapeError("flip_frame expects [C,H,W], got " + to_string(chw.shape()));
  const std::int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor out(chw.shape(), chw.dtype());
  for (std::int64_t k = 0; k < c; ++k) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sy = vertical ? h - 1 - y : y, sx = horizontal ? w - 1 - x : x;
        out.set_item((k * h + y) * w + x, chw.item((k * h + sy) * w + sx));
      }
    }
  }
  return out;
}

GopSample crop_gop(const GopSample& s, int x0, int y0, int size) {
  const int bs = s.meta.block_size;
  if (size <= 0 || size % bs != 0 || x0 % bs != 0 || y0 % bs != 0 || x0 < 0 || y0 < 0) {
    throw std::invalid_argument("crop " + std::to_string(size) + " at (" + std::to_string(x0) + "," +
                                std::to_string(y0) + ") is not aligned to the " + std::to_string(bs) +
                                "-pixel block grid");
  }
  if (x0 + size > s.meta.width || y0 + size > s.meta.height) {
    throw std::invalid_argument("crop " + std::to_string(size) + " at (" + std::to_string(x0) + "," +
                                std::to_string(y0) + ") exceeds frame " + std::to_string(s.meta.width) + "x" +
                                std::to_string(s.meta.height));
  }
  GopSample out;
  out.meta = s.meta;
  out.meta.width = out.meta.height = size;
  const int cx = x0 / bs, cy = y0 / bs, cells = size / bs;
  for (auto& f : out.meta.frames) {
    f.qp = crop_qp(f.qp, cx, cy, cells);
    if (f.mv) f.mv = crop_mv(*f.mv, cx, cy, cells);
  }
  for (std::size_t k = 0; k < s.degraded.size(); ++k) {
    out.degraded.push_back(crop_frame(s.degraded[k], x0, y0, size));
    out.target.push_back(crop_frame(s.target[k], x0, y0, size));
  }
  return out;
}

GopSample flip_gop(const GopSample& s, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return s;
  const int bs = s.meta.block_size;
  if ((horizontal && s.meta.width % bs != 0) || (vertical && s.meta.height % bs != 0)) {
    throw std::invalid_argument("flipping needs frame dimensions that are multiples of the block size");
  }
  GopSample out;
  out.meta = s.meta;
  for (auto& f : out.meta.frames) {
    f.qp = flip_qp(f.qp, horizontal, vertical);
    if (f.mv) f.mv = flip_mv(*f.mv, horizontal, vertical);
  }
  for (std::size_t k = 0; k < s.degraded.size(); ++k) {
    out.degraded.push_back(flip_frame(s.degraded[k], horizontal, vertical));
    out.target.push_back(flip_frame(s.target[k], horizontal, vertical));
  }
  return out;
}

std::vector<GopSample> make_batch(const Dataset& data, const std::vector<std::size_t>& indices, int crop, bool flips,
                                  std::mt19937_64& rng) {
  std::vector<GopSample> batch;
  for (std::size_t idx : indices) {
    const GopSample& s = data.gops.at(idx);
    const int bs = s.meta.block_size;
    const int nx = (s.meta.width - crop) / bs, ny = (s.meta.height - crop) / bs;
    if (nx < 0 || ny < 0) throw std::invalid_argument("crop larger than frame");
    const int x0 = std::uniform_int_distribution<int>(0, nx)(rng) * bs;
    const int y0 = std::uniform_int_distribution<int>(0, ny)(rng) * bs;
    bool h = false, v = false;
    if (flips) {
      h = (rng() & 1) != 0;
      v = (rng() & 1) != 0;
    }
    batch.push_back(flip_gop(crop_gop(s, x0, y0, crop), h, v));
  }
  return batch;
}

std::vector<GopSample> sample_batch(const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng) {
  std::vector<std::size_t> idx;
  std::uniform_int_distribution<std::size_t> pick(0, data.gops.size() - 1);
  for (int i = 0; i < cfg.batch_size; ++i) idx.push_back(pick(rng));
  return make_batch(data, idx, cfg.crop, cfg.flips, rng);
}

TrainConfig TrainConfig::paper_regression() {
  TrainConfig c;
  c.model = ModelConfig{};
  c.crop = 256;
  c.epochs = 600;
  c.critic = CriticConfig{};
  return c;
}

TrainConfig TrainConfig::paper_gan() {
  TrainConfig c = paper_regression();
  c.epochs = 200;
  c.anneal = false;
  c.lr = 1e-5;
  c.mode = LossMode::kGan;
  c.weights = LossWeights::gan();
  c.optimizer = OptimizerKind::kRmsProp;
  return c;
}

TrainConfig TrainConfig::desk_gan() {
  TrainConfig c;
  c.epochs = 200;
  c.anneal = false;
  c.lr = 1e-5;
  c.mode = LossMode::kGan;
  c.weights = LossWeights::gan();
  c.optimizer = OptimizerKind::kRmsProp;
  return c;
}

TrainConfig parse_train_config(std::istream& is) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> lines;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (lines.count(key) != 0) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    lines[key] = lineno;
    entries.emplace_back(key, value);
  }

  auto find = [&](const std::string& key) -> std::optional<std::string> {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    return std::nullopt;
  };
  const std::string scale = find("scale").value_or("desk");
  const std::string preset = find("preset").value_or("regression");
  if (scale != "desk" && scale != "paper") throw ConfigError("scale must be desk or paper, got " + scale);
  if (preset != "regression" && preset != "gan") throw ConfigError("preset must be regression or gan, got " + preset);
  TrainConfig c = scale == "desk" ? (preset == "gan" ? TrainConfig::desk_gan() : TrainConfig::desk())
                                  : (preset == "gan" ? TrainConfig::paper_gan() : TrainConfig::paper_regression());

  for (const auto& [key, value] : entries) {
    const std::string where = "line " + std::to_string(lines[key]) + ": ";
    auto as_int = [&] {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) throw ConfigError(where + key + " expects an integer, got '" + value + "'");
      return v;
    };
    auto as_double = [&] {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || value.empty()) throw ConfigError(where + key + " expects a number, got '" + value + "'");
      return v;
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError(where + key + " expects true or false, got '" + value + "'");
    };
    if (key == "scale" || key == "preset") continue;
    if (key == "channels_i") c.model.channels_i = as_int();
    else if (key == "channels_p") c.model.channels_p = as_int();
    else if (key == "blocks") c.model.blocks_per_stack = as_int();
    else if (key == "gop_size") c.model.gop_size = as_int();
    else if (key == "seed") {
      c.seed = static_cast<std::uint64_t>(as_int());
      c.model.seed = c.seed;
    }
    else if (key == "crop") c.crop = as_int();
    else if (key == "epochs") c.epochs = as_int();
    else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "lr") c.lr = as_double();
    else if (key == "anneal_start") c.anneal_start = as_int();
    else if (key == "anneal") c.anneal = as_bool();
    else if (key == "alpha") c.weights.alpha = as_double();
    else if (key == "beta") c.weights.beta = as_double();
    else if (key == "gamma") c.weights.gamma = as_double();
    else if (key == "delta") c.weights.delta = as_double();
    else if (key == "optimizer") {
      if (value == "adam") c.optimizer = OptimizerKind::kAdam;
      else if (value == "rmsprop") c.optimizer = OptimizerKind::kRmsProp;
      else throw ConfigError(where + "optimizer must be adam or rmsprop, got " + value);
    }
    else if (key == "flips") c.flips = as_bool();
    else if (key == "critic_steps") c.critic_steps = as_int();
    else if (key == "critic_lr") c.critic_lr = as_double();
    else if (key == "critic_layers") c.critic.layers = as_int();
    else if (key == "critic_base") c.critic.base_channels = as_int();
    else if (key == "critic_max") c.critic.max_channels = as_int();
    else if (key == "critic_clip") c.critic.clip = as_double();
    else if (key == "data") c.data = value;
    else if (key == "toy_width") c.toy.width = as_int();
    else if (key == "toy_height") c.toy.height = as_int();
    else if (key == "toy_clips") c.toy.clips = as_int();
    else if (key == "toy_qp") c.toy.qp = as_int();
    else if (key == "toy_seed") c.toy.seed = static_cast<std::uint64_t>(as_int());
    else if (key == "checkpoint") c.checkpoint = value;
    else if (key == "curve") c.curve = value;
    else if (key == "init") c.init = value;
    else throw ConfigError(where + "unknown key " + key);
  }
  c.toy.gop_size = c.model.gop_size;
  validate(c);
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open training config " + path.string());
  try {
    return parse_train_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_train_config(std::ostream& os, const TrainConfig& c) {
  os << "preset = " << (c.mode == LossMode::kGan ? "gan" : "regression") << "\n"
     << "channels_i = " << c.model.channels_i << "\nchannels_p = " << c.model.channels_p
     << "\nblocks = " << c.model.blocks_per_stack << "\ngop_size = " << c.model.gop_size << "\nseed = " << c.seed
     << "\ncrop = " << c.crop << "\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size
     << "\nlr = " << c.lr << "\nanneal = " << (c.anneal ? "true" : "false") << "\nanneal_start = " << c.anneal_start << "\nalpha = " << c.weights.alpha
     << "\nbeta = " << c.weights.beta << "\ngamma = " << c.weights.gamma << "\ndelta = " << c.weights.delta
     << "\noptimizer = " << (c.optimizer == OptimizerKind::kAdam ? "adam" : "rmsprop")
     << "\nflips = " << (c.flips ? "true" : "false") << "\ncritic_steps = " << c.critic_steps
     << "\ncritic_lr = " << c.critic_lr << "\ncritic_layers = " << c.critic.layers
     << "\ncritic_base = " << c.critic.base_channels << "\ncritic_max = " << c.critic.max_channels
     << "\ncritic_clip = " << c.critic.clip << "\ndata = " << c.data << "\ntoy_width = " << c.toy.width
     << "\ntoy_height = " << c.toy.height << "\ntoy_clips = " << c.toy.clips << "\ntoy_qp = " << c.toy.qp
     << "\ntoy_seed = " << c.toy.seed << "\n";
  if (!c.checkpoint.empty()) os << "checkpoint = " << c.checkpoint.string() << "\n";
  if (!c.curve.empty()) os << "curve = " << c.curve.string() << "\n";
  if (!c.init.empty()) os << "init = " << c.init.string() << "\n";
}

void validate(const TrainConfig& c) {
  validate(c.model);
  if (c.crop < kDogMinSize) {
    throw ConfigError("crop " + std::to_string(c.crop) + " is below the DoG loss minimum of " +
                      std::to_string(kDogMinSize));
  }
  if (c.epochs <= 0) throw ConfigError("epochs must be positive");
  if (c.batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (c.lr < 0) throw ConfigError("lr must be non-negative");
  if (c.effective_anneal_start() > c.epochs) throw ConfigError("anneal_start exceeds epochs");
  if (c.critic_steps < 0 || c.critic_lr < 0) throw ConfigError("critic settings must be non-negative");
  if (c.critic.layers <= 0 || c.critic.base_channels <= 0 || c.critic.max_channels <= 0 || c.critic.clip <= 0) {
    throw ConfigError("critic shape settings must be positive");
  }
  if (c.data == "toy") {
    if (c.crop > c.toy.width || c.crop > c.toy.height) {
      throw ConfigError("crop " + std::to_string(c.crop) + " exceeds toy frame size " + std::to_string(c.toy.width) +
                        "x" + std::to_string(c.toy.height));
    }
    if (c.toy.clips <= 0 || c.toy.qp < 0 || c.toy.qp > 51) throw ConfigError("invalid toy data settings");
  }
}

Dataset build_dataset(const TrainConfig& cfg) {
  if (cfg.data == "toy") {
    ToyDataOptions t = cfg.toy;
    t.gop_size = cfg.model.gop_size;
    return toy_dataset(t);
  }
  return load_dataset_dir(cfg.data, cfg.model.gop_size);
}

void write_curve(std::ostream& os, const std::vector<CurveRow>& curve) {
  os << "epoch,step,l1,dog,wgan,texture,total,lr,critic\n" << std::setprecision(10);
  for (const auto& r : curve) {
    os << r.epoch << ',' << r.step << ',' << r.l1 << ',' << r.dog << ',' << r.wgan << ',' << r.texture << ','
       << r.total << ',' << r.lr << ',' << r.critic << '\n';
  }
}

TrainResult train_regression(const TrainConfig& cfg, const Dataset& data, const std::optional<ModelParams>& init) {
  validate(cfg);
  check_dataset(data, cfg);
  if (init && init->config.gop_size != cfg.model.gop_size) throw TrainingError("initial model GOP size differs");
  TrainResult r{init ? clone_model(*init) : init_model(cfg.model), {}, std::nullopt};
  const auto named = r.model.named();
  std::vector<Var> params = r.model.parameters();
  OptimizerState opt = make_optimizer(cfg.optimizer, params, cfg.lr);
  std::mt19937_64 rng(cfg.seed);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_anneal(cfg.lr, epoch, cfg.effective_anneal_start(), cfg.epochs);
    opt.hp.lr = lr;
    for (const auto& idx : epoch_batches(data.gops.size(), cfg.batch_size, rng)) {
      const auto batch = make_batch(data, idx, cfg.crop, cfg.flips, rng);
      const BatchTensors bt = stack_batch(batch);
      const Var out = restore_batch(batch, r.model);
      const LossBreakdown lb = composite_loss(out, bt.target, cfg.weights, LossMode::kRegression);
      if (!all_finite(lb.total.value())) abort_non_finite("loss", step, epoch, lr, lb, named, nullptr);
      const Gradients g = backward(lb.total);
      for (const auto& p : params) {
        if (!all_finite(g.of(p))) abort_non_finite("gradient", step, epoch, lr, lb, named, &g);
      }
      optimizer_step(opt, params, g);
      r.curve.push_back({epoch, step, lb.l1, lb.dog, 0.0, 0.0, lb.total.value().item(), lr, 0.0});
      ++step;
    }
  }
  finish(cfg, r);
  return r;
}

TrainResult train_gan(const TrainConfig& cfg, const Dataset& data, const ModelParams& init) {
  validate(cfg);
  check_dataset(data, cfg);
  if (init.config.gop_size != cfg.model.gop_size) throw TrainingError("initial model GOP size differs");
  TrainResult r{clone_model(init), {}, std::nullopt};
  const DType dt = r.model.i_rep.input.weight.dtype();
  const auto named = r.model.named();
  std::vector<Var> params = r.model.parameters();
  OptimizerState opt = make_optimizer(cfg.optimizer, params, cfg.lr);

  CriticConfig cc = cfg.critic;
  cc.in_channels = 6 * cfg.model.gop_size;
  Rng critic_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  r.critic = init_critic(cc, critic_rng, dt);
  std::vector<Var> critic_params = r.critic->parameters();
  OptimizerState critic_opt = make_rmsprop(critic_params, cfg.critic_lr);
  const ToyFeatureNet toy_net = make_toy_feature_net(7, dt);
  const FeatureNet feature_net = [&toy_net](const Var& x) { return toy_net(x); };
  const bool train_critic = cfg.weights.gamma != 0.0 && cfg.critic_steps > 0;

  std::mt19937_64 rng(cfg.seed);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_anneal(cfg.lr, epoch, cfg.effective_anneal_start(), cfg.epochs);
    opt.hp.lr = lr;
    for (const auto& idx : epoch_batches(data.gops.size(), cfg.batch_size, rng)) {
      double critic_loss = 0.0;
      if (train_critic) {
        for (int k = 0; k < cfg.critic_steps; ++k) {
          const auto cb = sample_batch(data, cfg, rng);
          const BatchTensors ct = stack_batch(cb);
          Var fake;
          {
            NoGradGuard no_grad;
            fake = restore_batch(cb, r.model);
          }
          const Var candidate = reshape(fake, ct.compressed.shape());
          const Var real_target = reshape(ct.target, ct.compressed.shape());
          const WganLosses wl = wgan_losses(critic_forward(ct.compressed, real_target, *r.critic),
                                            critic_forward(ct.compressed, candidate, *r.critic));
          critic_loss = wl.critic.value().item();
          if (!std::isfinite(critic_loss)) {
            throw TrainingError("non-finite critic loss at step " + std::to_string(step) + " (epoch " +
                                std::to_string(epoch) + ")");
          }
          optimizer_step(critic_opt, critic_params, backward(wl.critic));
          clip_weights(*r.critic);
        }
      }
      const auto batch = make_batch(data, idx, cfg.crop, cfg.flips, rng);
      const BatchTensors bt = stack_batch(batch);
      const Var out = restore_batch(batch, r.model);
      const GanTerms terms{&*r.critic, bt.compressed, feature_net};
      const LossBreakdown lb = composite_loss(out, bt.target, cfg.weights, cfg.mode, &terms);
      if (!all_finite(lb.total.value())) abort_non_finite("loss", step, epoch, lr, lb, named, nullptr);
      const Gradients g = backward(lb.total);
      for (const auto& p : params) {
        if (!all_finite(g.of(p))) abort_non_finite("gradient", step, epoch, lr, lb, named, &g);
      }
      optimizer_step(opt, params, g);
      r.curve.push_back({epoch, step, lb.l1, lb.dog, lb.wgan, lb.texture, lb.total.value().item(), lr, critic_loss});
      ++step;
    }
  }
  finish(cfg, r);
  return r;
}

double delta_psnr(const ModelParams& model, const GopSample& sample) {
  NoGradGuard no_grad;
  std::vector<Tensor> frames;
  const DType dt = model.i_rep.input.weight.dtype();
  for (const auto& f : sample.degraded) frames.push_back(f.to(dt));
  const auto restored = restore_gop(frames, sample.meta, model);
  return evaluate(sample.degraded, restored, sample.target).delta_psnr;
}

}  // namespace metabit
