#pragma once

#include <cstdint>
#include <vector>

#include "metabit/tensor/tensor.hpp"

namespace metabit {

// Procedural test footage: a multi-octave value-noise texture (roughly 1/f
// spectrum, like natural images) panned by an integer number of pixels per
// frame, with a few flat-coloured discs moving independently.
struct SceneOptions {
  int frames = 7;
  int height = 64;
  int width = 64;
  int channels = 3;
  int pan_x = 2;  // pixels per frame
  int pan_y = 1;
  int discs = 3;
  std::uint64_t seed = 1;
};

// Frames as [C, H, W] float32 in [0, 1].
std::vector<Tensor> synthetic_scene(const SceneOptions& opts);

}  // namespace metabit
