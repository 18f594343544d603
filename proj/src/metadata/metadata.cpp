#include "metabit/metadata/metadata.hpp"

#include <fstream>
#include <limits>

#include "metabit/common/byte_io.hpp"

namespace metabit {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::string frame_label(std::size_t index) { return "frame " + std::to_string(index); }

void validate_qp(const QPMap& q, int gw, int gh, int bs, std::size_t frame) {
  if (q.block_size != bs || q.grid_w != gw || q.grid_h != gh ||
      q.qp.size() != static_cast<std::size_t>(gw) * gh) {
    throw SidecarValidationError(frame_label(frame) + ": QP grid " + std::to_string(q.grid_w) + "x" +
                                 std::to_string(q.grid_h) + " (block " + std::to_string(q.block_size) +
                                 ") does not match frame grid " + std::to_string(gw) + "x" +
                                 std::to_string(gh) + " (block " + std::to_string(bs) + ")");
  }
  for (std::size_t i = 0; i < q.qp.size(); ++i) {
    if (q.qp[i] > 51) {
      const int bx = static_cast<int>(i % gw), by = static_cast<int>(i / gw);
      throw SidecarValidationError(frame_label(frame) + ", block " + std::to_string(i) + " (" +
                                   std::to_string(bx) + "," + std::to_string(by) + "): QP " +
                                   std::to_string(q.qp[i]) + " outside [0,51]");
    }
  }
}

}  // namespace

MVField MVField::zeros(int width, int height, int block_size) {
  return uniform(width, height, block_size, {});
}

MVField MVField::uniform(int width, int height, int block_size, MotionVector v) {
  MVField f;
  f.block_size = block_size;
  f.grid_w = grid_extent(width, block_size);
  f.grid_h = grid_extent(height, block_size);
  f.mv.assign(static_cast<std::size_t>(f.grid_w) * f.grid_h, v);
  return f;
}

QPMap qp_map_from_slice(int slice_qp, int width, int height, int block_size) {
  if (slice_qp < 0 || slice_qp > 51) {
    throw SidecarValidationError("slice QP " + std::to_string(slice_qp) + " outside [0,51]");
  }
  QPMap q;
  q.block_size = block_size;
  q.grid_w = grid_extent(width, block_size);
  q.grid_h = grid_extent(height, block_size);
  q.qp.assign(static_cast<std::size_t>(q.grid_w) * q.grid_h, static_cast<std::uint8_t>(slice_qp));
  return q;
}

void validate(const GopMetadata& gop, std::size_t first_frame_index) {
  if (!is_power_of_two(gop.block_size)) {
    throw SidecarValidationError("block_size " + std::to_string(gop.block_size) + " is not a power of two");
  }
  if (gop.width <= 0 || gop.height <= 0) {
    throw SidecarValidationError("frame dimensions " + std::to_string(gop.width) + "x" +
                                 std::to_string(gop.height) + " must be positive");
  }
  if (gop.frames.empty()) throw SidecarValidationError("GOP has no frames");
  const int gw = grid_extent(gop.width, gop.block_size);
  const int gh = grid_extent(gop.height, gop.block_size);
  for (std::size_t i = 0; i < gop.frames.size(); ++i) {
    const auto& f = gop.frames[i];
    const std::size_t index = first_frame_index + i;
    if (i == 0 && f.type != FrameType::kI) {
      throw SidecarValidationError(frame_label(index) + ": GOP must start with I");
    }
    if (i > 0 && f.type != FrameType::kP) {
      throw SidecarValidationError(frame_label(index) + ": expected P frame inside GOP, found " +
                                   std::string(1, frame_type_char(f.type)));
    }
    validate_qp(f.qp, gw, gh, gop.block_size, index);
    if (f.type == FrameType::kP) {
      if (!f.mv) throw SidecarValidationError(frame_label(index) + ": P frame without motion vectors");
      const auto& m = *f.mv;
      if (m.block_size != gop.block_size || m.grid_w != gw || m.grid_h != gh ||
          m.mv.size() != static_cast<std::size_t>(gw) * gh) {
        throw SidecarValidationError(frame_label(index) + ": MV grid does not match QP grid");
      }
    } else if (f.mv) {
      throw SidecarValidationError(frame_label(index) + ": I frame carries motion vectors");
    }
  }
}

std::size_t write_sidecar(std::span<const GopMetadata> gops, std::ostream& os) {
  using byte_io::put_le;
  std::size_t frame_count = 0;
  for (std::size_t g = 0; g < gops.size(); ++g) {
    validate(gops[g], frame_count);
    const auto& ref = gops.front();
    if (gops[g].width != ref.width || gops[g].height != ref.height || gops[g].block_size != ref.block_size) {
      throw SidecarValidationError("GOP " + std::to_string(g) +
                                   ": dimensions or block size differ from the first GOP");
    }
    frame_count += gops[g].frames.size();
  }
  if (frame_count > std::numeric_limits<std::uint32_t>::max()) throw SidecarValidationError("too many frames");
  const int bs = gops.empty() ? 16 : gops.front().block_size;
  if (bs > std::numeric_limits<std::uint16_t>::max()) throw SidecarValidationError("block_size too large");

  std::size_t bytes = kSidecarHeaderBytes;
  os.write("MBMD", 4);
  put_le<std::uint16_t>(os, kSidecarVersion);
  put_le<std::uint16_t>(os, static_cast<std::uint16_t>(bs));
  put_le<std::uint32_t>(os, gops.empty() ? 0u : static_cast<std::uint32_t>(gops.front().width));
  put_le<std::uint32_t>(os, gops.empty() ? 0u : static_cast<std::uint32_t>(gops.front().height));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(frame_count));
  for (const auto& gop : gops) {
    for (const auto& f : gop.frames) {
      put_le<std::uint8_t>(os, static_cast<std::uint8_t>(f.type));
      os.write(reinterpret_cast<const char*>(f.qp.qp.data()), static_cast<std::streamsize>(f.qp.qp.size()));
      bytes += 1 + f.qp.qp.size();
      if (f.type == FrameType::kP) {
        for (const auto& v : f.mv->mv) {
          put_le<std::uint16_t>(os, static_cast<std::uint16_t>(v.dx));
          put_le<std::uint16_t>(os, static_cast<std::uint16_t>(v.dy));
        }
        bytes += 4 * f.mv->mv.size();
      }
    }
  }
  if (!os) throw SidecarError("failed writing sidecar");
  return bytes;
}

std::vector<GopMetadata> read_sidecar(std::istream& is) {
  byte_io::Reader in(is);
  std::vector<GopMetadata> gops;
  try {
    char magic[4];
    in.read(magic, 4);
    if (std::string(magic, 4) != "MBMD") throw SidecarFormatError("not a sidecar file (bad magic)");
    const auto version = in.le<std::uint16_t>();
    if (version != kSidecarVersion) {
      throw SidecarFormatError("unsupported sidecar version " + std::to_string(version));
    }
    const int bs = in.le<std::uint16_t>();
    const auto width = in.le<std::uint32_t>();
    const auto height = in.le<std::uint32_t>();
    const auto frame_count = in.le<std::uint32_t>();
    if (frame_count == 0) return gops;
    if (!is_power_of_two(bs)) {
      throw SidecarValidationError("block_size " + std::to_string(bs) + " is not a power of two");
    }
    if (width == 0 || height == 0 || width > (1u << 16) || height > (1u << 16)) {
      throw SidecarValidationError("frame dimensions " + std::to_string(width) + "x" + std::to_string(height) +
                                   " out of range");
    }
    const int w = static_cast<int>(width), h = static_cast<int>(height);
    const int gw = grid_extent(w, bs), gh = grid_extent(h, bs);
    const std::size_t cells = static_cast<std::size_t>(gw) * gh;

    std::size_t gop_start = 0;
    auto close_gop = [&] {
      if (!gops.empty()) validate(gops.back(), gop_start);
    };
    for (std::uint32_t i = 0; i < frame_count; ++i) {
      const auto type_byte = in.le<std::uint8_t>();
      if (type_byte == static_cast<std::uint8_t>(FrameType::kB)) {
        throw SidecarFormatError(frame_label(i) + ": B-frames are not supported");
      }
      if (type_byte > 2) {
        throw SidecarFormatError(frame_label(i) + ": unknown frame type byte " + std::to_string(type_byte));
      }
      FrameMetadata f;
      f.type = static_cast<FrameType>(type_byte);
      if (f.type == FrameType::kP && gops.empty()) {
        throw SidecarValidationError(frame_label(i) + ": GOP must start with I");
      }
      f.qp.block_size = bs;
      f.qp.grid_w = gw;
      f.qp.grid_h = gh;
      f.qp.qp.resize(cells);
      in.read(f.qp.qp.data(), cells);
      if (f.type == FrameType::kP) {
        MVField m;
        m.block_size = bs;
        m.grid_w = gw;
        m.grid_h = gh;
        m.mv.resize(cells);
        for (auto& v : m.mv) {
          v.dx = static_cast<std::int16_t>(in.le<std::uint16_t>());
          v.dy = static_cast<std::int16_t>(in.le<std::uint16_t>());
        }
        f.mv = std::move(m);
      }
      if (f.type == FrameType::kI) {
        close_gop();
        gops.push_back({w, h, bs, {}});
        gop_start = i;
      }
      gops.back().frames.push_back(std::move(f));
    }
    close_gop();
    return gops;
  } catch (const byte_io::TruncatedInput& e) {
    throw SidecarTruncated(std::string("sidecar ") + e.what(), e.offset());
  }
}

std::size_t save_sidecar(const std::filesystem::path& path, std::span<const GopMetadata> gops) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw SidecarError("cannot open " + path.string() + " for writing");
  return write_sidecar(gops, os);
}

std::vector<GopMetadata> load_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw SidecarError("cannot open " + path.string());
  try {
    return read_sidecar(is);
  } catch (const SidecarTruncated& e) {
    throw SidecarTruncated(path.string() + ": " + e.what(), e.offset());
  } catch (const SidecarValidationError& e) {
    throw SidecarValidationError(path.string() + ": " + e.what());
  } catch (const SidecarFormatError& e) {
    throw SidecarFormatError(path.string() + ": " + e.what());
  }
}

}  // namespace metabit
