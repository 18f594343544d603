#pragma once

#include <cstdint>

namespace metabit {

// Numeric values match the sidecar encoding.
enum class FrameType : std::uint8_t { kI = 0, kP = 1, kB = 2 };

inline char frame_type_char(FrameType t) {
  switch (t) {
    case FrameType::kI: return 'I';
    case FrameType::kP: return 'P';
    case FrameType::kB: return 'B';
  }
  return '?';
}

}  // namespace metabit
