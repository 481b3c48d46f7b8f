#pragma once

// Frame-wise f0 with voicing: YIN candidates per 10 ms frame, smoothed by an
// HMM over (pitch bin x {voiced, unvoiced}) states.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "opera/audio.hpp"
#include "opera/error.hpp"
#include "opera/frames.hpp"
#include "opera/hmm.hpp"
#include "opera/pitch.hpp"
#include "opera/yin.hpp"

namespace opera {

struct PitchFrame {
    double f0_hz = 0.0;
    bool voiced = false;
    bool operator==(const PitchFrame&) const = default;
};

struct PitchTrack {
    double hop_s = kFrameSeconds;
    std::vector<PitchFrame> frames;
    bool operator==(const PitchTrack&) const = default;
};

struct PitchTrackerConfig {
    int pitch_min_midi = 35;
    int pitch_max_midi = 85;
    int steps_per_semitone = 3;
    double jump_sigma_semitones = 0.8;
    double max_jump_semitones = 12.0;
    double voicing_switch_prob = 0.01;
    double emission_floor = 1e-6;
    int window_at_44k = 2048;
    ThresholdPrior prior;

    int bins() const { return (pitch_max_midi - pitch_min_midi) * steps_per_semitone + 1; }
    double bin_midi(int b) const { return pitch_min_midi + static_cast<double>(b) / steps_per_semitone; }
    double min_f0_hz() const { return midi_to_hz(pitch_min_midi - 0.5); }
    double max_f0_hz() const { return midi_to_hz(pitch_max_midi + 0.5); }
    int window_samples(int sample_rate) const {
        return static_cast<int>(std::lround(static_cast<double>(window_at_44k) * sample_rate / 44100.0));
    }
};

/// State layout: [0, bins) voiced pitch bins, [bins, 2*bins) unvoiced bins
/// that remember the last pitch.
class PitchHmm {
public:
    explicit PitchHmm(PitchTrackerConfig config) : config_(std::move(config)) { build(); }

    const PitchTrackerConfig& config() const noexcept { return config_; }
    const hmm::TransitionGraph& transitions() const noexcept { return graph_; }
    int bins() const noexcept { return bins_; }

    int nearest_bin(double f0_hz) const {
        const double pos = (hz_to_midi(f0_hz) - config_.pitch_min_midi) * config_.steps_per_semitone;
        return std::clamp(static_cast<int>(std::lround(pos)), 0, bins_ - 1);
    }

    hmm::EmissionTable emissions(std::span<const PitchCandidateFrame> frames) const {
        const auto n = static_cast<std::size_t>(bins_);
        hmm::EmissionTable table(frames.size(), 2 * n);
        std::vector<double> mass(n);
        for (std::size_t t = 0; t < frames.size(); ++t) {
            std::fill(mass.begin(), mass.end(), 0.0);
            for (const auto& c : frames[t].candidates) mass[nearest_bin(c.f0_hz)] += c.salience;
            const double unvoiced = std::max(config_.emission_floor, (1.0 - frames[t].voiced_prob) / bins_);
            for (std::size_t b = 0; b < n; ++b) {
                table.at(t, b) = std::log(std::max(config_.emission_floor, mass[b]));
                table.at(t, n + b) = std::log(unvoiced);
            }
        }
        return table;
    }

    /// Decoded track; `frames` supplies both the lattice and the exact
    /// candidate frequencies reported for voiced frames.
    PitchTrack decode(std::span<const PitchCandidateFrame> frames) const {
        PitchTrack track;
        track.frames.resize(frames.size());
        if (frames.empty()) return track;
        const auto result = hmm::viterbi(graph_, emissions(frames));
        for (std::size_t t = 0; t < frames.size(); ++t) {
            const auto s = static_cast<int>(result.path[t]);
            if (s >= bins_) continue;
            double f0 = midi_to_hz(config_.bin_midi(s));
            int best_gap = config_.steps_per_semitone + 1;
            for (const auto& c : frames[t].candidates) {
                const int gap = std::abs(nearest_bin(c.f0_hz) - s);
                if (gap < best_gap) {
                    best_gap = gap;
                    f0 = c.f0_hz;
                }
            }
            track.frames[t] = {f0, true};
        }
        return track;
    }

private:
    void build() {
        bins_ = config_.bins();
        const auto n = static_cast<std::size_t>(bins_);
        graph_.resize(2 * n);
        const int reach = static_cast<int>(std::floor(config_.max_jump_semitones * config_.steps_per_semitone));
        const double stay = std::log(1.0 - config_.voicing_switch_prob);
        const double flip = std::log(config_.voicing_switch_prob);
        for (int from = 0; from < bins_; ++from) {
            const int lo = std::max(0, from - reach);
            const int hi = std::min(bins_ - 1, from + reach);
            std::vector<double> w;
            double total = 0.0;
            for (int to = lo; to <= hi; ++to) {
                const double semis = static_cast<double>(to - from) / config_.steps_per_semitone;
                const double z = semis / config_.jump_sigma_semitones;
                w.push_back(std::exp(-0.5 * z * z));
                total += w.back();
            }
            for (int to = lo; to <= hi; ++to) {
                const double lj = std::log(w[to - lo] / total);
                const auto f = static_cast<std::size_t>(from);
                const auto d = static_cast<std::size_t>(to);
                graph_.add(f, d, lj + stay);
                graph_.add(n + f, n + d, lj + stay);
                graph_.add(f, n + d, lj + flip);
                graph_.add(n + f, d, lj + flip);
            }
        }
        const double init = std::log(0.5 / bins_);
        for (std::size_t s = 0; s < 2 * n; ++s) graph_.log_initial[s] = init;
    }

    PitchTrackerConfig config_;
    int bins_ = 0;
    hmm::TransitionGraph graph_;
};

inline PitchTrack viterbi_pitch(std::span<const PitchCandidateFrame> frames, const PitchTrackerConfig& config = {}) {
    return PitchHmm(config).decode(frames);
}

/// Number of 10 ms frames covering `samples` at `rate`.
inline std::size_t frame_count(std::size_t samples, int rate) {
    return static_cast<std::size_t>(samples * static_cast<std::size_t>(kFramesPerSecond) / static_cast<std::size_t>(rate));
}

/// Per-frame candidate analysis; frame i is a window centred on i * 10 ms
/// with zero padding past the signal edges.
inline std::vector<PitchCandidateFrame> analyze_frames(const AudioBuffer& audio, const PitchTrackerConfig& config = {}) {
    validate(audio);
    const int window = config.window_samples(audio.sample_rate_hz);
    const auto max_lag = static_cast<std::size_t>(window / 2);
    const std::size_t frames = frame_count(audio.samples.size(), audio.sample_rate_hz);
    const CandidateSearch search{static_cast<double>(audio.sample_rate_hz), config.min_f0_hz(), config.max_f0_hz()};

    std::vector<PitchCandidateFrame> out(frames);
    std::vector<double> buf(static_cast<std::size_t>(window));
    const auto n = static_cast<std::ptrdiff_t>(audio.samples.size());
    for (std::size_t i = 0; i < frames; ++i) {
        const auto centre = static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(audio.sample_rate_hz) / kFramesPerSecond);
        const std::ptrdiff_t start = centre - window / 2;
        for (int j = 0; j < window; ++j) {
            const std::ptrdiff_t k = start + j;
            buf[static_cast<std::size_t>(j)] = (k >= 0 && k < n) ? audio.samples[static_cast<std::size_t>(k)] : 0.0;
        }
        const auto cmndf = yin_cmndf(buf, max_lag);
        out[i] = extract_candidates(cmndf, config.prior, search);
    }
    return out;
}

inline PitchTrack track_pitch(const AudioBuffer& audio, const PitchTrackerConfig& config = {}) {
    return viterbi_pitch(analyze_frames(audio, config), config);
}

/// CSV `frame,time_s,f0_hz,voiced`.
inline void write_pitch_csv(std::ostream& out, const PitchTrack& track) {
    out << "frame,time_s,f0_hz,voiced\n";
    char line[96];
    for (std::size_t i = 0; i < track.frames.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.2f,%.4f,%d\n", i, static_cast<double>(i) * track.hop_s,
                      track.frames[i].f0_hz, track.frames[i].voiced ? 1 : 0);
        out << line;
    }
}

}  // namespace opera
