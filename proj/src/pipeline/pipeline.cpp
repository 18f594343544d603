#include "metabit/pipeline/pipeline.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "metabit/tensor/checkpoint.hpp"
#include "metabit/warp/warp.hpp"

namespace metabit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

long long parse_int(const std::string& key, const std::string& value, int line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ConfigError("line " + std::to_string(line) + ": " + key + " expects an integer, got '" + value + "'");
  }
  return v;
}

Var as_batch(const Var& frame) {
  const auto& s = frame.shape();
  if (s.size() != 3 || s[0] != 3) throw ShapeError("expected a [3,H,W] frame, got " + to_string(s));
  return reshape(frame, {1, s[0], s[1], s[2]});
}

}  // namespace

void validate(const ModelConfig& cfg) {
  auto check_width = [](const char* name, int c) {
    if (c < 4 || c % 4 != 0) throw ConfigError(std::string(name) + " must be a positive multiple of 4, got " + std::to_string(c));
  };
  check_width("channels_i", cfg.channels_i);
  check_width("channels_p", cfg.channels_p);
  if (cfg.blocks_per_stack < 0) throw ConfigError("blocks_per_stack must be >= 0");
  if (cfg.gop_size < 2) throw ConfigError("gop_size must be >= 2");
}

ModelConfig parse_model_config(std::istream& is) {
  ModelConfig cfg;
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const std::string text = trim(raw.substr(0, raw.find('#')));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key == "channels_i") {
      cfg.channels_i = static_cast<int>(parse_int(key, value, line));
    } else if (key == "channels_p") {
      cfg.channels_p = static_cast<int>(parse_int(key, value, line));
    } else if (key == "blocks_per_stack") {
      cfg.blocks_per_stack = static_cast<int>(parse_int(key, value, line));
    } else if (key == "gop_size") {
      cfg.gop_size = static_cast<int>(parse_int(key, value, line));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value, line));
    } else {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
  }
  validate(cfg);
  return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  return parse_model_config(in);
}

void write_model_config(std::ostream& os, const ModelConfig& cfg) {
  os << "channels_i=" << cfg.channels_i << "\nchannels_p=" << cfg.channels_p
     << "\nblocks_per_stack=" << cfg.blocks_per_stack << "\ngop_size=" << cfg.gop_size << "\nseed=" << cfg.seed
     << "\n";
}

std::vector<std::pair<std::string, Var>> ModelParams::named() const {
  std::vector<std::pair<std::string, Var>> out;
  collect(i_rep, "i_rep", out);
  collect(p_rep, "p_rep", out);
  collect(fuse_proj, "fuse_proj", out);
  collect(i_gen, "i_gen", out);
  collect(p_gen, "p_gen", out);
  return out;
}

std::vector<Var> ModelParams::parameters() const {
  std::vector<Var> out;
  for (auto& [name, v] : named()) out.push_back(v);
  return out;
}

ModelParams init_model(const ModelConfig& cfg, DType dtype) {
  validate(cfg);
  Rng rng(cfg.seed);
  ModelParams p;
  p.config = cfg;
  p.i_rep = init_stack({3, cfg.channels_i, cfg.blocks_per_stack, 0}, rng, dtype);
  p.p_rep = init_stack({3, cfg.channels_p, cfg.blocks_per_stack, 0}, rng, dtype);
  p.fuse_proj = init_conv(cfg.fuse_channels(), cfg.channels_i, 1, rng, dtype);
  p.i_gen = init_stack({cfg.channels_i, cfg.channels_i, cfg.blocks_per_stack, 3}, rng, dtype, kGenerationOutputScale);
  p.p_gen = init_stack({6, cfg.channels_i, cfg.blocks_per_stack, 3}, rng, dtype, kGenerationOutputScale);
  return p;
}

std::int64_t count_parameters(const ModelParams& params) {
  std::int64_t n = 0;
  for (const auto& v : params.parameters()) n += v.value().numel();
  return n;
}

std::int64_t count_parameters(const ModelConfig& cfg) { return count_parameters(init_model(cfg)); }

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  std::vector<NamedTensor> tensors;
  for (auto& [name, v] : params.named()) tensors.push_back({name, v.value()});
  save_checkpoint(path, tensors);
}

ModelParams load_model(const std::filesystem::path& path, const ModelConfig& cfg, DType dtype) {
  ModelParams p = init_model(cfg, dtype);
  std::map<std::string, Tensor> stored;
  for (auto& t : load_checkpoint(path)) stored[t.name] = std::move(t.value);
  const auto named = p.named();
  for (const auto& [name, v] : named) {
    auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != v.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(it->second.shape()) + ", model expects " +
                            to_string(v.shape()));
    }
    Var(v).assign(it->second.to(dtype));
    stored.erase(it);
  }
  if (!stored.empty()) throw CheckpointError("checkpoint has unexpected tensor '" + stored.begin()->first + "'");
  return p;
}

std::vector<Var> restore_gop(const std::vector<Var>& frames, const GopMetadata& meta, const ModelParams& params) {
  const int gop = params.config.gop_size;
  if (static_cast<int>(frames.size()) != gop || static_cast<int>(meta.frames.size()) != gop) {
    throw ShapeError("restore_gop: model GOP size " + std::to_string(gop) + ", got " +
                     std::to_string(frames.size()) + " frames and " + std::to_string(meta.frames.size()) +
                     " metadata entries");
  }
  if (meta.frames[0].type != FrameType::kI) throw SidecarValidationError("restore_gop: GOP must start with an I frame");
  validate(meta);
  const Shape& s0 = frames[0].shape();
  for (const auto& f : frames) {
    if (f.shape() != s0) throw ShapeError("restore_gop: frames differ in shape");
  }
  const Var x_i = as_batch(frames[0]);
  const int h = static_cast<int>(s0[1]), w = static_cast<int>(s0[2]);
  if (meta.width != w || meta.height != h) {
    throw ShapeError("restore_gop: metadata is " + std::to_string(meta.width) + "x" + std::to_string(meta.height) +
                     ", frames are " + std::to_string(w) + "x" + std::to_string(h));
  }
  const DType dt = frames[0].dtype();
  const Var plane_i = Var::constant(qp_plane(meta.frames[0].qp, h, w, dt));

  std::vector<Var> p_frames, p_planes;
  for (int k = 1; k < gop; ++k) {
    p_frames.push_back(as_batch(frames[k]));
    p_planes.push_back(Var::constant(qp_plane(meta.frames[k].qp, h, w, dt)));
  }
  const Var x_p = concat(p_frames, 0);
  const Var planes_p = concat(p_planes, 0);

  const Var f_i = stack_forward(x_i, plane_i, params.i_rep);
  const Var f_p = stack_forward(x_p, planes_p, params.p_rep);
  std::vector<Var> per_frame;
  for (int k = 0; k < gop - 1; ++k) per_frame.push_back(narrow(f_p, 0, k, 1));
  const AlignedVolume aligned = align_gop_features(per_frame, meta);

  std::vector<Var> volume{f_i};
  volume.insert(volume.end(), aligned.features.begin(), aligned.features.end());
  const Var fused = params.fuse_proj(concat(volume, 1));
  const Var restored_i = clamp(add(x_i, stack_forward(fused, plane_i, params.i_gen)), 0.0, 1.0);

  std::vector<Var> warped;
  for (int k = 1; k < gop; ++k) warped.push_back(forward_warp(restored_i, *meta.frames[k].mv));
  const Var p_in = concat({concat(warped, 0), x_p}, 1);
  const Var restored_p = clamp(add(x_p, stack_forward(p_in, planes_p, params.p_gen)), 0.0, 1.0);

  std::vector<Var> out{reshape(restored_i, s0)};
  for (int k = 0; k < gop - 1; ++k) out.push_back(reshape(narrow(restored_p, 0, k, 1), s0));
  return out;
}

std::vector<Tensor> restore_gop(const std::vector<Tensor>& frames, const GopMetadata& meta,
                                const ModelParams& params) {
  NoGradGuard guard;
  std::vector<Var> in;
  for (const auto& f : frames) in.push_back(Var::constant(f));
  std::vector<Tensor> out;
  for (const auto& v : restore_gop(in, meta, params)) out.push_back(v.value());
  return out;
}

StreamingRestorer::StreamingRestorer(const ModelParams& params, Sink sink) : params_(params), sink_(std::move(sink)) {}

void StreamingRestorer::note_resident() {
  const auto n = static_cast<std::int64_t>(frames_.size()) + (have_cache_ ? 1 : 0);
  stats_.peak_resident_frames = std::max(stats_.peak_resident_frames, n);
}

void StreamingRestorer::push(const Tensor& frame, const FrameMetadata& meta) {
  if (meta.type == FrameType::kB) throw SidecarValidationError("streaming: B-frames are not supported");
  if (!started_ && meta.type != FrameType::kI) {
    throw SidecarValidationError("streaming: stream must start with an I frame");
  }
  started_ = true;
  ++stats_.frames_in;
  if (meta.type == FrameType::kI) {
    if (!frames_.empty()) run_block();
    have_cache_ = false;
    cached_ = Tensor();
    pseudo_i_ = false;
  } else if (frames_.empty()) {
    if (!have_cache_) throw std::logic_error("streaming: P frame after finish() or a short block");
    // Continue from the cached restored frame.
    frames_.push_back(std::move(cached_));
    meta_.push_back(cached_meta_);
    have_cache_ = false;
    pseudo_i_ = true;
    stats_.substitutions.push_back(stats_.frames_out - 1);
  }
  frames_.push_back(frame);
  meta_.push_back(meta);
  note_resident();
  if (static_cast<int>(frames_.size()) == params_.config.gop_size) run_block();
}

void StreamingRestorer::finish() {
  if (!frames_.empty()) run_block();
}

void StreamingRestorer::run_block() {
  const int gop = params_.config.gop_size;
  const int real = static_cast<int>(frames_.size());
  const auto& q = meta_.front().qp;
  GopMetadata gm;
  gm.height = static_cast<int>(frames_[0].dim(1));
  gm.width = static_cast<int>(frames_[0].dim(2));
  gm.block_size = q.block_size;
  while (static_cast<int>(frames_.size()) < gop) {
    FrameMetadata pad;
    pad.type = FrameType::kP;
    pad.qp = meta_.back().qp;
    pad.mv = MVField::zeros(gm.width, gm.height, meta_.back().qp.block_size);
    frames_.push_back(frames_.back());
    meta_.push_back(std::move(pad));
    ++stats_.padded_frames;
    note_resident();
  }
  gm.frames = meta_;
  gm.frames[0].type = FrameType::kI;
  gm.frames[0].mv.reset();

  std::vector<Tensor> restored = restore_gop(frames_, gm, params_);
  ++stats_.blocks;
  for (int k = pseudo_i_ ? 1 : 0; k < real; ++k) sink_(stats_.frames_out++, restored[k]);

  cached_meta_ = gm.frames[gop - 1];
  cached_meta_.type = FrameType::kI;
  cached_meta_.mv.reset();
  have_cache_ = real == gop;
  cached_ = have_cache_ ? std::move(restored[gop - 1]) : Tensor();
  frames_.clear();
  meta_.clear();
  pseudo_i_ = false;
}

}  // namespace metabit
