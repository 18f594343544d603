// metabit: command-line front end for inspection, toy encoding, restoration,
// training, evaluation and gradient checks.
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"
#include "metabit/bitstream/h264.hpp"
#include "metabit/evalcli/gradient_suite.hpp"
#include "metabit/evalcli/metrics.hpp"
#include "metabit/evalcli/video.hpp"
#include "metabit/metadata/metadata.hpp"
#include "metabit/pipeline/pipeline.hpp"
#include "metabit/training/training.hpp"

namespace fs = std::filesystem;
using namespace metabit;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ColorRange parse_range(const std::string& s) { return s == "full" ? ColorRange::kFull : ColorRange::kLimited; }

// ---- inspect ----------------------------------------------------------------

struct InspectArgs {
  fs::path stream;
  std::string json;
};

int run_inspect(const InspectArgs& a) {
  const auto bytes = read_file(a.stream);
  bitstream::StreamSummary s;
  try {
    s = bitstream::scan_stream(bytes);
  } catch (const std::exception& e) {
    throw std::runtime_error(a.stream.string() + ": " + e.what());
  }
  nlohmann::json frames = nlohmann::json::array();
  std::cout << "stream:     " << a.stream.string() << "\n";
  if (s.sps) std::cout << "dimensions: " << s.sps->width << "x" << s.sps->height << "\n";
  std::cout << "pictures:   " << s.picture_count << " in " << s.gops.size() << " GOPs\n";
  std::cout << "pattern:   ";
  for (const auto& g : s.gops) {
    std::cout << ' ';
    for (const auto& f : g.frames) std::cout << frame_type_char(f.frame_type);
  }
  std::cout << "\n\nframe  type  slice_qp  gop\n";
  std::size_t index = 0;
  for (std::size_t gi = 0; gi < s.gops.size(); ++gi) {
    for (const auto& f : s.gops[gi].frames) {
      std::cout << std::left << std::setw(7) << index << std::setw(6) << frame_type_char(f.frame_type) << std::setw(10)
                << f.slice_qp << gi << "\n";
      frames.push_back({{"frame_index", index}, {"type", std::string(1, frame_type_char(f.frame_type))},
                        {"slice_qp", f.slice_qp}, {"gop_index", gi}});
      ++index;
    }
  }
  if (!a.json.empty()) {
    nlohmann::json doc{{"stream", a.stream.string()}, {"frames", frames}};
    if (s.sps) {
      doc["width"] = s.sps->width;
      doc["height"] = s.sps->height;
    }
    if (a.json == "-") {
      std::cout << doc.dump(2) << "\n";
    } else {
      std::ofstream out(a.json);
      if (!out) throw std::runtime_error("cannot write " + a.json);
      out << doc.dump(2) << "\n";
    }
  }
  return 0;
}

// ---- encode-toy -------------------------------------------------------------

struct EncodeArgs {
  fs::path input;
  int width = 64, height = 64;
  int scene_frames = 0;
  std::uint64_t scene_seed = 1;
  int qp = 35, gop = 7, block = 16, search = 8;
  fs::path out;
};

int run_encode(const EncodeArgs& a) {
  VideoClip reference;
  if (a.scene_frames > 0) {
    reference = scene_clip(a.scene_frames, a.width, a.height, a.scene_seed);
  } else {
    if (a.input.empty()) throw std::runtime_error("encode-toy needs an input YUV file or --scene");
    reference = read_yuv420(a.input, a.width, a.height);
  }
  if (reference.yuv.empty()) throw std::runtime_error("no frames to encode");
  ToyCodecConfig cfg = ToyCodecConfig::constant(a.qp, a.gop);
  cfg.block_size = a.block;
  cfg.search_radius = a.search;
  const ToyClip enc = encode_toy_clip(reference, cfg);
  const VideoClip& degraded = enc.degraded;
  const std::vector<GopMetadata>& metas = enc.gops;
  const double bits = enc.bits;
  const fs::path yuv = a.out.string() + ".yuv", ref = a.out.string() + ".ref.yuv", side = a.out.string() + ".mbmd";
  write_yuv420(yuv, degraded);
  write_yuv420(ref, reference);
  save_sidecar(side, metas);

  double mean_psnr = 0;
  const auto d_rgb = to_rgb(degraded), r_rgb = to_rgb(reference);
  for (std::size_t i = 0; i < d_rgb.rgb.size(); ++i) mean_psnr += frame_psnr(d_rgb.rgb[i], r_rgb.rgb[i]);
  mean_psnr /= static_cast<double>(d_rgb.rgb.size());
  std::cout << "encoded " << degraded.yuv.size() << " frames (" << metas.size() << " GOPs) at QP " << a.qp << "\n"
            << "estimated rate: " << std::fixed << std::setprecision(4)
            << bits / (static_cast<double>(reference.width) * reference.height * degraded.yuv.size()) << " bpp\n"
            << "luma PSNR:      " << mean_psnr << " dB\n"
            << "wrote " << yuv.string() << ", " << ref.string() << ", " << side.string() << "\n";
  return 0;
}

// ---- restore / stream-restore -----------------------------------------------

struct RestoreArgs {
  fs::path input, sidecar, ckpt, model_config, out;
  std::string range = "limited";
};

ModelParams load_for_restore(const RestoreArgs& a) {
  const fs::path cfg_path = a.model_config.empty() ? fs::path(a.ckpt.string() + ".model") : a.model_config;
  const ModelConfig cfg = load_model_config(cfg_path);
  return load_model(a.ckpt, cfg);
}

struct LoadedClip {
  std::vector<GopMetadata> gops;
  VideoClip rgb;
};

LoadedClip load_clip(const RestoreArgs& a) {
  LoadedClip c;
  c.gops = load_sidecar(a.sidecar);
  if (c.gops.empty()) throw std::runtime_error(a.sidecar.string() + ": no GOPs");
  c.rgb = to_rgb(read_yuv420(a.input, c.gops[0].width, c.gops[0].height), parse_range(a.range));
  std::size_t frames = 0;
  for (const auto& g : c.gops) frames += g.size();
  if (frames != c.rgb.rgb.size()) {
    throw std::runtime_error(a.sidecar.string() + " describes " + std::to_string(frames) + " frames but " +
                             a.input.string() + " holds " + std::to_string(c.rgb.rgb.size()));
  }
  return c;
}

void write_restored(const RestoreArgs& a, const LoadedClip& c, std::vector<Tensor> frames) {
  VideoClip out{c.rgb.width, c.rgb.height, PixelFormat::kRgbFloat, 25.0, {}, std::move(frames)};
  write_yuv420(a.out, to_yuv(out, parse_range(a.range)));
}

int run_restore(const RestoreArgs& a) {
  const ModelParams model = load_for_restore(a);
  const LoadedClip clip = load_clip(a);
  const int gop = model.config.gop_size;
  std::vector<Tensor> restored;
  std::size_t frame = 0;
  NoGradGuard no_grad;
  for (std::size_t gi = 0; gi < clip.gops.size(); ++gi) {
    GopMetadata meta = clip.gops[gi];
    const int n = static_cast<int>(meta.size());
    if (n > gop) {
      throw std::runtime_error("GOP " + std::to_string(gi) + " has " + std::to_string(n) +
                               " frames; the model restores GOPs of " + std::to_string(gop) +
                               " (use stream-restore for longer GOPs)");
    }
    std::vector<Tensor> frames(clip.rgb.rgb.begin() + static_cast<std::ptrdiff_t>(frame),
                               clip.rgb.rgb.begin() + static_cast<std::ptrdiff_t>(frame + n));
    // A short GOP is padded with zero-motion repeats of its last frame.
    while (static_cast<int>(frames.size()) < gop) {
      frames.push_back(frames.back());
      meta.frames.push_back({FrameType::kP, meta.frames.back().qp, MVField::zeros(meta.width, meta.height, meta.block_size)});
    }
    const auto out = restore_gop(frames, meta, model);
    restored.insert(restored.end(), out.begin(), out.begin() + n);
    frame += static_cast<std::size_t>(n);
  }
  write_restored(a, clip, std::move(restored));
  std::cout << "restored " << frame << " frames in " << clip.gops.size() << " GOPs -> " << a.out.string() << "\n";
  return 0;
}

int run_stream_restore(const RestoreArgs& a) {
  const ModelParams model = load_for_restore(a);
  const LoadedClip clip = load_clip(a);
  std::vector<Tensor> restored(clip.rgb.rgb.size());
  NoGradGuard no_grad;
  StreamingRestorer sr(model, [&](std::int64_t i, const Tensor& f) { restored.at(static_cast<std::size_t>(i)) = f; });
  std::size_t frame = 0;
  for (const auto& g : clip.gops) {
    for (const auto& m : g.frames) sr.push(clip.rgb.rgb[frame++], m);
  }
  sr.finish();
  write_restored(a, clip, std::move(restored));
  const StreamStats& s = sr.stats();
  std::cout << "restored " << s.frames_out << " frames in " << s.blocks << " blocks -> " << a.out.string() << "\n"
            << "cache substitutions: " << s.substitutions.size() << "\n"
            << "peak resident frames: " << s.peak_resident_frames << "\n"
            << "padded frames: " << s.padded_frames << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  fs::path config, checkpoint, curve, init;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = load_train_config(a.config);
  if (!a.checkpoint.empty()) cfg.checkpoint = a.checkpoint;
  if (!a.curve.empty()) cfg.curve = a.curve;
  if (!a.init.empty()) cfg.init = a.init;
  const Dataset data = build_dataset(cfg);
  std::optional<ModelParams> init;
  if (!cfg.init.empty()) {
    const fs::path model_cfg = cfg.init.string() + ".model";
    init = load_model(cfg.init, fs::exists(model_cfg) ? load_model_config(model_cfg) : cfg.model);
  }
  std::cout << "training on " << data.gops.size() << " GOPs, " << cfg.epochs << " epochs, "
            << (cfg.mode == LossMode::kGan ? "GAN" : "regression") << " loss (alpha " << cfg.weights.alpha << ", beta "
            << cfg.weights.beta << ", gamma " << cfg.weights.gamma << ", delta " << cfg.weights.delta << ")\n";
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r;
  if (cfg.mode == LossMode::kGan) {
    if (!init) throw std::runtime_error("GAN training needs an initial checkpoint (init = ... or --init)");
    r = train_gan(cfg, data, *init);
  } else {
    r = train_regression(cfg, data, init);
  }
  if (!cfg.checkpoint.empty()) {
    std::ofstream mc(cfg.checkpoint.string() + ".model");
    if (!mc) throw std::runtime_error("cannot write " + cfg.checkpoint.string() + ".model");
    write_model_config(mc, r.model.config);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << std::fixed << std::setprecision(6) << "steps: " << r.curve.size() << " in " << std::setprecision(1)
            << secs << " s\n"
            << std::setprecision(6) << "loss: " << r.curve.front().total << " -> " << r.curve.back().total << "\n"
            << std::setprecision(4) << "delta PSNR on GOP 0: " << delta_psnr(r.model, data.gops[0]) << " dB\n";
  if (!cfg.checkpoint.empty()) std::cout << "checkpoint: " << cfg.checkpoint.string() << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  fs::path degraded, restored, reference, bitstream;
  int width = 0, height = 0;
  std::string channels = "luma", range = "limited", csv;
};

int run_eval(const EvalArgs& a) {
  const ColorRange range = parse_range(a.range);
  const auto load = [&](const fs::path& p) { return to_rgb(read_yuv420(p, a.width, a.height), range).rgb; };
  const auto deg = load(a.degraded), res = load(a.restored), ref = load(a.reference);
  EvalReport report = evaluate(deg, res, ref, a.channels == "rgb" ? MetricChannels::kRgbMean : MetricChannels::kLuma);
  if (!a.bitstream.empty()) {
    report.bpp = bpp(fs::file_size(a.bitstream), a.width, a.height, static_cast<std::int64_t>(ref.size()));
  }
  write_text(std::cout, report);
  if (a.csv == "-") {
    write_csv(std::cout, report);
  } else if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw std::runtime_error("cannot write " + a.csv);
    write_csv(out, report);
  }
  return 0;
}

// ---- gradcheck --------------------------------------------------------------

int run_gradcheck() {
  int failures = 0;
  const auto t0 = std::chrono::steady_clock::now();
  run_gradient_suite([&](const GradientCheck& c) {
    failures += c.result.passed ? 0 : 1;
    std::cout << (c.result.passed ? "ok   " : "FAIL ") << std::left << std::setw(10) << c.group << std::setw(24)
              << c.name << " max rel " << std::scientific << std::setprecision(2) << c.result.max_rel_error
              << " (tol " << c.tolerance << ")" << std::defaultfloat << ", " << c.result.probed << " probes, "
              << c.result.refined << " refined\n";
    if (!c.result.passed) std::cout << "     worst: " << c.result.worst << "\n";
    std::cout.flush();
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " checks failed") << " in "
            << std::fixed << std::setprecision(1) << secs << " s\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaBit compressed-video restoration toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  InspectArgs ia;
  auto* inspect = app.add_subcommand("inspect", "Report GOP structure and slice QPs of an H.264 Annex-B stream");
  inspect->add_option("stream", ia.stream, "Elementary stream")->required();
  inspect->add_option("--json", ia.json, "Also write a JSON report to this path ('-' for stdout)");

  EncodeArgs ea;
  auto* encode = app.add_subcommand("encode-toy", "Encode a clip with the toy codec; writes <out>.yuv, <out>.ref.yuv, <out>.mbmd");
  encode->add_option("input", ea.input, "Input I420 YUV (omit with --scene)");
  encode->add_option("--width", ea.width, "Frame width")->check(CLI::PositiveNumber);
  encode->add_option("--height", ea.height, "Frame height")->check(CLI::PositiveNumber);
  encode->add_option("--scene", ea.scene_frames, "Generate this many frames of procedural footage instead of reading input");
  encode->add_option("--scene-seed", ea.scene_seed, "Seed of the procedural footage");
  encode->add_option("--qp", ea.qp, "Quantization parameter")->check(CLI::Range(0, 51));
  encode->add_option("--gop", ea.gop, "GOP length")->check(CLI::PositiveNumber);
  encode->add_option("--block", ea.block, "Motion block size")->check(CLI::PositiveNumber);
  encode->add_option("--search", ea.search, "Motion search radius")->check(CLI::NonNegativeNumber);
  encode->add_option("--out", ea.out, "Output prefix")->required();

  RestoreArgs ra;
  auto add_restore = [&](CLI::App* c) {
    c->add_option("input", ra.input, "Degraded I420 YUV")->required();
    c->add_option("--sidecar", ra.sidecar, "Metadata sidecar")->required();
    c->add_option("--ckpt", ra.ckpt, "Model checkpoint")->required();
    c->add_option("--model-config", ra.model_config, "Model config (default <ckpt>.model)");
    c->add_option("--out", ra.out, "Restored I420 YUV")->required();
    c->add_option("--range", ra.range, "BT.601 range")->check(CLI::IsMember({"limited", "full"}));
  };
  auto* restore = app.add_subcommand("restore", "Restore a clip GOP by GOP");
  add_restore(restore);
  auto* stream = app.add_subcommand("stream-restore", "Restore a clip of any GOP length in streaming mode");
  add_restore(stream);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model from a key=value config");
  train->add_option("--config", ta.config, "Training config")->required();
  train->add_option("--checkpoint", ta.checkpoint, "Override the output checkpoint path");
  train->add_option("--curve", ta.curve, "Override the loss-curve CSV path");
  train->add_option("--init", ta.init, "Override the initial checkpoint");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of degraded and restored clips against a reference");
  eval->add_option("--degraded", va.degraded, "Degraded I420 YUV")->required();
  eval->add_option("--restored", va.restored, "Restored I420 YUV")->required();
  eval->add_option("--reference", va.reference, "Reference I420 YUV")->required();
  eval->add_option("--width", va.width, "Frame width")->required()->check(CLI::PositiveNumber);
  eval->add_option("--height", va.height, "Frame height")->required()->check(CLI::PositiveNumber);
  eval->add_option("--bitstream", va.bitstream, "Bitstream whose size gives bpp")->check(CLI::ExistingFile);
  eval->add_option("--channels", va.channels, "Metric channels")->check(CLI::IsMember({"luma", "rgb"}));
  eval->add_option("--range", va.range, "BT.601 range")->check(CLI::IsMember({"limited", "full"}));
  eval->add_option("--csv", va.csv, "Per-frame CSV path ('-' for stdout)");

  auto* grad = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*inspect) return run_inspect(ia);
    if (*encode) return run_encode(ea);
    if (*restore) return run_restore(ra);
    if (*stream) return run_stream_restore(ra);
    if (*train) return run_train(ta);
    if (*eval) return run_eval(va);
    if (*grad) return run_gradcheck();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
