#pragma once

// Pitch track -> pseudo score. A note HMM over a 1/steps-semitone pitch grid
// with Attack and Stable states per grid pitch plus one shared Silent state.
// Attack is expanded into a chain of at most `attack_max_frames` sub-states
// so its duration is bounded; every note enters through Attack.

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "opera/error.hpp"
#include "opera/frames.hpp"
#include "opera/hmm.hpp"
#include "opera/pitch.hpp"
#include "opera/pitch_tracker.hpp"

namespace opera {

/// Discretised Gaussian over integer semitone intervals in [-max, max].
inline std::map<double, double> gaussian_interval_distribution(double sigma = 2.5, int max_interval = 12) {
    std::map<double, double> dist;
    double total = 0.0;
    for (int k = -max_interval; k <= max_interval; ++k) {
        const double z = k / sigma;
        dist[k] = std::exp(-0.5 * z * z);
        total += dist[k];
    }
    for (auto& [_, p] : dist) p /= total;
    return dist;
}

struct NoteStateParams {
    double emission_sigma = 0.25;  // semitones
    double self_transition = 0.9;
};

struct NoteHmmConfig {
    int pitch_min_midi = 35;
    int pitch_max_midi = 85;
    int steps_per_semitone = 3;
    std::map<double, double> transition_distribution = gaussian_interval_distribution();

    NoteStateParams attack{1.0, 0.6};
    NoteStateParams stable{0.25, 0.985};
    NoteStateParams silent{0.0, 0.95};
    int attack_max_frames = 15;
    double stable_to_silent = 0.005;
    double silent_voiced_emission = 1e-3;  // density floor for voiced frames in Silent
    double initial_silent = 0.5;

    int grid_size() const { return (pitch_max_midi - pitch_min_midi) * steps_per_semitone + 1; }
    double grid_midi(int g) const { return pitch_min_midi + static_cast<double>(g) / steps_per_semitone; }

    void validate() const {
        if (pitch_max_midi < pitch_min_midi || steps_per_semitone < 1) throw ConfigError("bad note grid");
        if (attack_max_frames < 1) throw ConfigError("attack_max_frames must be at least 1");
        double total = 0.0;
        for (const auto& [_, p] : transition_distribution) {
            if (p < 0.0) throw ConfigError("negative transition probability");
            total += p;
        }
        if (transition_distribution.empty() || std::abs(total - 1.0) > 1e-6)
            throw ConfigError("transition distribution must sum to 1");
        if (stable.self_transition + stable_to_silent >= 1.0)
            throw ConfigError("stable self-transition plus stable_to_silent must stay below 1");
    }
};

/// Interval histogram JSON: {"intervals": [{"semitones": 0, "prob": 0.4}, ...]}.
inline std::map<double, double> read_transition_histogram(std::istream& in) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("transition histogram is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("intervals") || !doc["intervals"].is_array())
        throw FormatError("/intervals: expected an array");
    std::map<double, double> dist;
    double total = 0.0;
    for (std::size_t i = 0; i < doc["intervals"].size(); ++i) {
        const auto& e = doc["intervals"][i];
        const auto path = "/intervals/" + std::to_string(i);
        if (!e.is_object() || !e.contains("semitones") || !e["semitones"].is_number())
            throw FormatError(path + "/semitones: expected a number");
        if (!e.contains("prob") || !e["prob"].is_number() || e["prob"].get<double>() < 0.0)
            throw FormatError(path + "/prob: expected a non-negative number");
        if (!dist.emplace(e["semitones"].get<double>(), e["prob"].get<double>()).second)
            throw FormatError(path + "/semitones: duplicate interval");
        total += e["prob"].get<double>();
    }
    if (dist.empty() || std::abs(total - 1.0) > 1e-6) throw FormatError("/intervals: probabilities must sum to 1");
    return dist;
}

namespace note_detail {

// Linear interpolation between histogram keys; zero outside the support.
inline double interval_density(const std::map<double, double>& dist, double semis) {
    constexpr double kEps = 1e-9;
    auto hi = dist.lower_bound(semis - kEps);
    if (hi == dist.end()) return 0.0;
    if (std::abs(hi->first - semis) <= kEps) return hi->second;
    if (hi == dist.begin()) return 0.0;
    auto lo = std::prev(hi);
    const double f = (semis - lo->first) / (hi->first - lo->first);
    return lo->second + f * (hi->second - lo->second);
}

inline int grid_index(double midi, const NoteHmmConfig& c) {
    const double pos = (midi - c.pitch_min_midi) * c.steps_per_semitone;
    const double r = std::round(pos);
    if (std::abs(pos - r) > 1e-6 || r < 0 || r > c.grid_size() - 1)
        throw OffGrid("pitch " + std::to_string(midi) + " is not on the note grid");
    return static_cast<int>(r);
}

}  // namespace note_detail

/// P(next note pitch | current note pitch): the interval distribution at
/// the semitone distance, normalised over all grid targets.
inline double note_transition_prob(double from_midi, double to_midi, const NoteHmmConfig& config = {}) {
    const int from = note_detail::grid_index(from_midi, config);
    const int to = note_detail::grid_index(to_midi, config);
    double total = 0.0;
    for (int g = 0; g < config.grid_size(); ++g)
        total += note_detail::interval_density(config.transition_distribution,
                                               static_cast<double>(g - from) / config.steps_per_semitone);
    if (total <= 0.0) return 0.0;
    return note_detail::interval_density(config.transition_distribution,
                                         static_cast<double>(to - from) / config.steps_per_semitone) /
           total;
}

/// Nearest integral MIDI pitch; x.5 rounds up.
inline int quantize_grid_pitch(double grid_value) {
    if (!(grid_value >= kMinMidi && grid_value <= kMaxMidi))
        throw OffGrid("grid pitch " + std::to_string(grid_value) + " outside [35, 85]");
    return static_cast<int>(std::floor(grid_value + 0.5 + 1e-9));
}

struct TranscribedNote {
    int midi_pitch = 0;
    std::int64_t start_frame = 0;
    std::int64_t end_frame = 0;  // exclusive
    bool operator==(const TranscribedNote&) const = default;
};

struct PseudoScore {
    std::vector<int> frame_pitch;
    std::vector<TranscribedNote> notes;
    double hop_s = kFrameSeconds;
    bool operator==(const PseudoScore&) const = default;
};

enum class NoteStateKind { Attack, Stable, Silent };

/// State layout: for grid pitch g, Attack sub-states occupy
/// g*(A+1) .. g*(A+1)+A-1 and Stable is g*(A+1)+A; Silent is last.
class NoteHmm {
public:
    explicit NoteHmm(NoteHmmConfig config) : config_(std::move(config)) {
        config_.validate();
        build();
    }

    const NoteHmmConfig& config() const noexcept { return config_; }
    const hmm::TransitionGraph& transitions() const noexcept { return graph_; }
    std::size_t num_states() const noexcept { return graph_.num_states(); }
    std::size_t silent_state() const noexcept { return graph_.num_states() - 1; }

    std::size_t attack_state(int g, int age) const {
        return static_cast<std::size_t>(g * per_pitch_ + age);
    }
    std::size_t stable_state(int g) const { return static_cast<std::size_t>(g * per_pitch_ + config_.attack_max_frames); }

    NoteStateKind kind(std::size_t s) const {
        if (s == silent_state()) return NoteStateKind::Silent;
        return static_cast<int>(s) % per_pitch_ == config_.attack_max_frames ? NoteStateKind::Stable : NoteStateKind::Attack;
    }
    int grid_of(std::size_t s) const { return static_cast<int>(s) / per_pitch_; }
    int attack_age(std::size_t s) const { return static_cast<int>(s) % per_pitch_; }

    hmm::EmissionTable emissions(const PitchTrack& track) const {
        const std::size_t n = num_states();
        hmm::EmissionTable table(track.frames.size(), n);
        const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < track.frames.size(); ++t) {
            const auto& f = track.frames[t];
            if (!f.voiced || f.f0_hz <= 0.0) {
                table.at(t, silent_state()) = 0.0;
                continue;
            }
            const double m = hz_to_midi(f.f0_hz);
            table.at(t, silent_state()) = std::log(config_.silent_voiced_emission);
            for (int g = 0; g < grid_; ++g) {
                const double dev = m - config_.grid_midi(g);
                const double zs = dev / config_.stable.emission_sigma;
                const double za = dev / config_.attack.emission_sigma;
                const double ls = -0.5 * zs * zs - std::log(config_.stable.emission_sigma) - log_norm;
                const double la = -0.5 * za * za - std::log(config_.attack.emission_sigma) - log_norm;
                table.at(t, stable_state(g)) = ls;
                for (int a = 0; a < config_.attack_max_frames; ++a) table.at(t, attack_state(g, a)) = la;
            }
        }
        return table;
    }

    PseudoScore decode(const PitchTrack& track) const {
        if (track.frames.empty()) throw EmptyTrack("pitch track has no frames");
        if (std::abs(track.hop_s - kFrameSeconds) > 1e-12) throw ConfigError("pitch track hop must be 10 ms");
        const auto result = hmm::viterbi(graph_, emissions(track));
        if (result.path.empty()) throw InvariantViolation("note lattice admits no path");
        return segment(result.path);
    }

    /// Notes begin on entry to the first Attack sub-state and run until the
    /// path leaves that pitch's Attack/Stable states.
    PseudoScore segment(std::span<const std::size_t> path) const {
        PseudoScore score;
        score.frame_pitch.assign(path.size(), 0);
        for (std::size_t t = 0; t < path.size(); ++t) {
            const auto s = path[t];
            if (kind(s) == NoteStateKind::Silent) continue;
            const bool onset = kind(s) == NoteStateKind::Attack && attack_age(s) == 0;
            const int midi = quantize_grid_pitch(config_.grid_midi(grid_of(s)));
            const bool continues = !onset && t > 0 && kind(path[t - 1]) != NoteStateKind::Silent &&
                                   grid_of(path[t - 1]) == grid_of(s) && !score.notes.empty() &&
                                   score.notes.back().end_frame == static_cast<std::int64_t>(t);
            if (continues) {
                score.notes.back().end_frame = static_cast<std::int64_t>(t) + 1;
            } else {
                score.notes.push_back({midi, static_cast<std::int64_t>(t), static_cast<std::int64_t>(t) + 1});
            }
            score.frame_pitch[t] = midi;
        }
        return score;
    }

private:
    void build() {
        grid_ = config_.grid_size();
        per_pitch_ = config_.attack_max_frames + 1;
        const std::size_t n = static_cast<std::size_t>(grid_ * per_pitch_) + 1;
        graph_.resize(n);
        const std::size_t silent = n - 1;
        const double lg = std::log(static_cast<double>(grid_));

        graph_.log_initial[silent] = std::log(config_.initial_silent);
        for (int g = 0; g < grid_; ++g) graph_.log_initial[attack_state(g, 0)] = std::log(1.0 - config_.initial_silent) - lg;

        graph_.add(silent, silent, std::log(config_.silent.self_transition));
        for (int g = 0; g < grid_; ++g)
            graph_.add(silent, attack_state(g, 0), std::log(1.0 - config_.silent.self_transition) - lg);

        const double attack_stay = std::log(config_.attack.self_transition);
        const double attack_leave = std::log(1.0 - config_.attack.self_transition);
        for (int g = 0; g < grid_; ++g) {
            for (int a = 0; a + 1 < config_.attack_max_frames; ++a) {
                graph_.add(attack_state(g, a), attack_state(g, a + 1), attack_stay);
                graph_.add(attack_state(g, a), stable_state(g), attack_leave);
            }
            graph_.add(attack_state(g, config_.attack_max_frames - 1), stable_state(g), 0.0);
        }

        const double new_note = 1.0 - config_.stable.self_transition - config_.stable_to_silent;
        for (int from = 0; from < grid_; ++from) {
            const auto s = stable_state(from);
            graph_.add(s, s, std::log(config_.stable.self_transition));
            graph_.add(s, silent, std::log(config_.stable_to_silent));
            std::vector<double> w(static_cast<std::size_t>(grid_));
            double total = 0.0;
            for (int to = 0; to < grid_; ++to) {
                w[to] = note_detail::interval_density(config_.transition_distribution,
                                                      static_cast<double>(to - from) / config_.steps_per_semitone);
                total += w[to];
            }
            if (total <= 0.0) continue;
            for (int to = 0; to < grid_; ++to)
                if (w[to] > 0.0) graph_.add(s, attack_state(to, 0), std::log(new_note * w[to] / total));
        }
    }

    NoteHmmConfig config_;
    int grid_ = 0;
    int per_pitch_ = 0;
    hmm::TransitionGraph graph_;
};

inline PseudoScore transcribe(const PitchTrack& track, const NoteHmmConfig& config = {}) {
    return NoteHmm(config).decode(track);
}

struct NoteScore {
    double precision = 0.0;
    double recall = 0.0;
    double f_score = 0.0;
};

/// Greedy one-to-one matching in onset order: a predicted note takes the
/// earliest unmatched reference note within the onset and pitch tolerances.
inline NoteScore score_note_f(std::span<const TranscribedNote> predicted, std::span<const TranscribedNote> reference,
                              std::int64_t onset_tol_frames = 5, int pitch_tol = 0) {
    std::vector<std::size_t> pred_order(predicted.size()), ref_order(reference.size());
    for (std::size_t i = 0; i < pred_order.size(); ++i) pred_order[i] = i;
    for (std::size_t i = 0; i < ref_order.size(); ++i) ref_order[i] = i;
    std::stable_sort(pred_order.begin(), pred_order.end(),
                     [&](auto a, auto b) { return predicted[a].start_frame < predicted[b].start_frame; });
    std::stable_sort(ref_order.begin(), ref_order.end(),
                     [&](auto a, auto b) { return reference[a].start_frame < reference[b].start_frame; });
    std::vector<bool> used(reference.size(), false);
    std::size_t matched = 0;
    for (auto p : pred_order) {
        for (auto r : ref_order) {
            if (used[r]) continue;
            if (std::abs(predicted[p].start_frame - reference[r].start_frame) > onset_tol_frames) continue;
            if (std::abs(predicted[p].midi_pitch - reference[r].midi_pitch) > pitch_tol) continue;
            used[r] = true;
            ++matched;
            break;
        }
    }
    NoteScore s;
    if (!predicted.empty()) s.precision = static_cast<double>(matched) / predicted.size();
    if (!reference.empty()) s.recall = static_cast<double>(matched) / reference.size();
    if (s.precision + s.recall > 0.0) s.f_score = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

/// CSV `frame,midi_pitch`.
inline void write_pseudo_score_csv(std::ostream& out, const PseudoScore& score) {
    out << "frame,midi_pitch\n";
    for (std::size_t i = 0; i < score.frame_pitch.size(); ++i) out << i << ',' << score.frame_pitch[i] << '\n';
}

/// JSON `{"notes": [{"midi", "start_frame", "end_frame"}]}`.
inline void write_pseudo_score_json(std::ostream& out, const PseudoScore& score) {
    nlohmann::json notes = nlohmann::json::array();
    for (const auto& n : score.notes)
        notes.push_back({{"midi", n.midi_pitch}, {"start_frame", n.start_frame}, {"end_frame", n.end_frame}});
    nlohmann::json doc;
    doc["notes"] = std::move(notes);
    doc["frames"] = score.frame_pitch.size();
    out << doc.dump(2) << '\n';
}

inline std::vector<TranscribedNote> read_pseudo_score_json(std::istream& in) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("pseudo-score is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("notes") || !doc["notes"].is_array())
        throw FormatError("/notes: expected an array");
    std::vector<TranscribedNote> notes;
    for (std::size_t i = 0; i < doc["notes"].size(); ++i) {
        const auto& n = doc["notes"][i];
        const auto path = "/notes/" + std::to_string(i);
        for (const char* key : {"midi", "start_frame", "end_frame"})
            if (!n.is_object() || !n.contains(key) || !n[key].is_number_integer())
                throw FormatError(path + "/" + key + ": expected an integer");
        TranscribedNote t{n["midi"].get<int>(), n["start_frame"].get<std::int64_t>(), n["end_frame"].get<std::int64_t>()};
        if (t.end_frame <= t.start_frame) throw FormatError(path + ": end_frame must exceed start_frame");
        if (!notes.empty() && t.start_frame < notes.back().end_frame) throw FormatError(path + ": overlaps previous note");
        notes.push_back(t);
    }
    return notes;
}

}  // namespace opera
