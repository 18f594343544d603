#include "metabit/tensor/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "metabit/common/byte_io.hpp"

namespace metabit {

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  using byte_io::put_le;
  os.write("MBWT", 4);
  put_le<std::uint16_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, value] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw CheckpointError("tensor name too long: " + name.substr(0, 32) + "...");
    }
    if (value.rank() > 255) throw CheckpointError("tensor rank too large: " + name);
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(value.rank()));
    for (auto e : value.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    const Tensor f32 = value.to(DType::kFloat32);
    for (float v : f32.data<float>()) byte_io::put_f32(os, v);
  }
  if (!os) throw CheckpointError("failed writing checkpoint");
}

std::vector<NamedTensor> read_checkpoint(std::istream& is) {
  byte_io::Reader in(is);
  try {
    char magic[4];
    in.read(magic, 4);
    if (std::string(magic, 4) != "MBWT") throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = in.le<std::uint16_t>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = in.le<std::uint32_t>();
    std::vector<NamedTensor> out;
    for (std::uint32_t t = 0; t < count; ++t) {
      const auto len = in.le<std::uint16_t>();
      std::string name(len, '\0');
      in.read(name.data(), len);
      const auto rank = in.le<std::uint8_t>();
      Shape shape(rank);
      for (auto& e : shape) {
        e = in.le<std::uint32_t>();
        if (e == 0) throw CheckpointError("zero extent in tensor " + name);
      }
      std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
      for (auto& v : values) v = in.f32();
      out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
    return out;
  } catch (const byte_io::TruncatedInput& e) {
    throw CheckpointError(std::string("checkpoint ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace metabit
