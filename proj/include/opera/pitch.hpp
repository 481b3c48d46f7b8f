#pragma once

#include <cmath>

#include "opera/error.hpp"

namespace opera {

// Pitch range of scores and transcriptions (B1 to C#6).
inline constexpr int kMinMidi = 35;
inline constexpr int kMaxMidi = 85;

inline double hz_to_midi(double hz) {
    if (!(hz > 0.0)) throw NonPositiveFrequency("frequency must be positive");
    return 69.0 + 12.0 * std::log2(hz / 440.0);
}

inline double midi_to_hz(double midi) { return 440.0 * std::exp2((midi - 69.0) / 12.0); }

inline double cents_between(double hz_a, double hz_b) { return 1200.0 * std::log2(hz_a / hz_b); }

}  // namespace opera
