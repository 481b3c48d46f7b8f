#pragma once

#include <cmath>
#include <cstdint>

namespace opera {

// All durations are counted on a 10 ms frame grid.
inline constexpr double kFrameSeconds = 0.010;
inline constexpr int kFramesPerSecond = 100;

inline std::int64_t seconds_to_frames(double seconds) {
    return static_cast<std::int64_t>(std::llround(seconds * kFramesPerSecond));
}

}  // namespace opera
