#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "opera/note_transcriber.hpp"
#include "support/oracles.hpp"
#include "support/synth.hpp"

using namespace opera;
using opera::testing::constant_track;
using opera::testing::track_from_midi;

namespace {

NoteHmmConfig reduced_config() {
    NoteHmmConfig c;
    c.pitch_min_midi = 60;
    c.pitch_max_midi = 62;
    c.steps_per_semitone = 2;
    c.attack_max_frames = 2;
    return c;
}

void expect_well_formed(const PseudoScore& s, std::size_t frames) {
    ASSERT_EQ(s.frame_pitch.size(), frames);
    std::int64_t prev_end = 0;
    std::vector<int> painted(frames, 0);
    for (const auto& n : s.notes) {
        EXPECT_GE(n.midi_pitch, kMinMidi);
        EXPECT_LE(n.midi_pitch, kMaxMidi);
        EXPECT_GE(n.start_frame, prev_end);
        EXPECT_GT(n.end_frame, n.start_frame);
        EXPECT_LE(n.end_frame, static_cast<std::int64_t>(frames));
        for (auto t = n.start_frame; t < n.end_frame; ++t) painted[static_cast<std::size_t>(t)] = n.midi_pitch;
        prev_end = n.end_frame;
    }
    EXPECT_EQ(painted, s.frame_pitch);
}

}  // namespace

TEST(NoteTransition, ZeroIntervalIsTheMode) {
    NoteHmmConfig c;
    const double stay = note_transition_prob(60, 60, c);
    for (int g = 0; g < c.grid_size(); ++g) {
        const double to = c.grid_midi(g);
        if (to != 60.0) {
            EXPECT_LT(note_transition_prob(60, to, c), stay) << to;
        }
    }
}

TEST(NoteTransition, SumsToOneOverGridTargets) {
    NoteHmmConfig c;
    for (double from : {35.0, 47.0, 60.0, 72.0 + 2.0 / 3.0, 85.0}) {
        double total = 0.0;
        for (int g = 0; g < c.grid_size(); ++g) total += note_transition_prob(from, c.grid_midi(g), c);
        EXPECT_NEAR(total, 1.0, 1e-12) << from;
    }
}

TEST(NoteTransition, SymmetricAwayFromEdges) {
    for (double a : {50.0, 55.0, 60.0})
        for (double b : {58.0, 61.0, 63.0 + 1.0 / 3.0})
            EXPECT_NEAR(note_transition_prob(a, b), note_transition_prob(b, a), 1e-15);
    EXPECT_EQ(note_transition_prob(50, 70), 0.0);
}

TEST(NoteTransition, OffGridRejected) {
    EXPECT_THROW(note_transition_prob(60.1, 60), OffGrid);
    EXPECT_THROW(note_transition_prob(34, 60), OffGrid);
}

TEST(NoteTransition, GaussianIntervalShape) {
    auto d = gaussian_interval_distribution();
    EXPECT_EQ(d.size(), 25u);
    double total = 0.0;
    for (const auto& [k, p] : d) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(d[1] / d[0], std::exp(-0.5 / 6.25), 1e-12);
    EXPECT_NEAR(d[-3], d[3], 1e-15);
}

TEST(QuantizeGridPitch, Examples) {
    EXPECT_EQ(quantize_grid_pitch(60.0), 60);
    EXPECT_EQ(quantize_grid_pitch(60.0 + 1.0 / 3.0), 60);
    EXPECT_EQ(quantize_grid_pitch(60.0 + 2.0 / 3.0), 61);
    EXPECT_EQ(quantize_grid_pitch(60.5), 61);
    EXPECT_EQ(quantize_grid_pitch(35.0), 35);
    EXPECT_EQ(quantize_grid_pitch(85.0), 85);
    EXPECT_THROW(quantize_grid_pitch(34.9), OffGrid);
    EXPECT_THROW(quantize_grid_pitch(85.1), OffGrid);
    EXPECT_THROW(quantize_grid_pitch(std::nan("")), OffGrid);
}

TEST(NoteHmm, StateLayout) {
    NoteHmm h(NoteHmmConfig{});
    EXPECT_EQ(h.num_states(), 151u * 16u + 1u);
    EXPECT_EQ(h.kind(h.silent_state()), NoteStateKind::Silent);
    EXPECT_EQ(h.kind(h.stable_state(7)), NoteStateKind::Stable);
    EXPECT_EQ(h.kind(h.attack_state(7, 3)), NoteStateKind::Attack);
    EXPECT_EQ(h.grid_of(h.attack_state(7, 3)), 7);
    EXPECT_EQ(h.attack_age(h.attack_state(7, 3)), 3);
}

TEST(NoteHmm, OutgoingProbabilitiesSumToOne) {
    for (const auto& cfg : {NoteHmmConfig{}, reduced_config()}) {
        NoteHmm h(cfg);
        const auto& g = h.transitions();
        std::vector<double> out(g.num_states(), 0.0);
        double init = 0.0;
        for (std::size_t to = 0; to < g.num_states(); ++to) {
            for (const auto& a : g.incoming[to]) out[a.from] += std::exp(a.log_prob);
            init += std::exp(g.log_initial[to]);
        }
        for (double p : out) EXPECT_NEAR(p, 1.0, 1e-9);
        EXPECT_NEAR(init, 1.0, 1e-9);
    }
}

TEST(NoteHmm, NotesOnlyEnterThroughAttack) {
    NoteHmm h(reduced_config());
    const auto& g = h.transitions();
    for (std::size_t to = 0; to < g.num_states(); ++to) {
        if (h.kind(to) == NoteStateKind::Silent) continue;
        for (const auto& a : g.incoming[to]) {
            const bool same_note = h.kind(a.from) != NoteStateKind::Silent && h.grid_of(a.from) == h.grid_of(to) &&
                                   !(h.kind(to) == NoteStateKind::Attack && h.attack_age(to) == 0);
            if (!same_note) {
                EXPECT_EQ(h.attack_age(to), 0) << to;
            }
        }
        if (h.kind(to) != NoteStateKind::Attack || h.attack_age(to) != 0) {
            EXPECT_EQ(g.log_initial[to], hmm::kLogZero);
        }
    }
}

TEST(Transcribe, ConstantSlightlySharp) {
    auto s = transcribe(constant_track(100, 60.1));
    ASSERT_EQ(s.notes.size(), 1u);
    EXPECT_EQ(s.notes[0], (TranscribedNote{60, 0, 100}));
    expect_well_formed(s, 100);
}

TEST(Transcribe, TwoNoteStep) {
    std::vector<double> m(100, 60.0);
    for (std::size_t i = 50; i < 100; ++i) m[i] = 64.0;
    auto s = transcribe(track_from_midi(m));
    ASSERT_EQ(s.notes.size(), 2u);
    EXPECT_EQ(s.notes[0].midi_pitch, 60);
    EXPECT_EQ(s.notes[1].midi_pitch, 64);
    EXPECT_EQ(s.notes[0].start_frame, 0);
    EXPECT_NEAR(static_cast<double>(s.notes[1].start_frame), 50.0, 3.0);
    expect_well_formed(s, 100);
}

TEST(Transcribe, AllUnvoiced) {
    auto s = transcribe(track_from_midi(std::vector<double>(80, 0.0)));
    EXPECT_TRUE(s.notes.empty());
    for (int p : s.frame_pitch) EXPECT_EQ(p, 0);
}

TEST(Transcribe, VibratoStaysOneNote) {
    auto s = transcribe(track_from_midi(opera::testing::vibrato_midi(200, 64.0, 0.5, 6.0)));
    ASSERT_EQ(s.notes.size(), 1u);
    EXPECT_EQ(s.notes[0], (TranscribedNote{64, 0, 200}));
}

TEST(Transcribe, RestSplitsNotes) {
    std::vector<double> m(120, 67.0);
    for (std::size_t i = 50; i < 70; ++i) m[i] = 0.0;
    auto s = transcribe(track_from_midi(m));
    ASSERT_EQ(s.notes.size(), 2u);
    EXPECT_EQ(s.notes[0], (TranscribedNote{67, 0, 50}));
    EXPECT_EQ(s.notes[1], (TranscribedNote{67, 70, 120}));
}

TEST(Transcribe, UnvoicedFramesAreAlwaysSilent) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pitch(40, 80);
    std::bernoulli_distribution voiced(0.7), change(0.1);
    for (int c = 0; c < 15; ++c) {
        std::vector<double> m;
        double cur = pitch(rng);
        for (int i = 0; i < 150; ++i) {
            if (change(rng)) cur = pitch(rng);
            m.push_back(voiced(rng) ? cur : 0.0);
        }
        auto s = transcribe(track_from_midi(m));
        expect_well_formed(s, m.size());
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i] == 0.0) {
                EXPECT_EQ(s.frame_pitch[i], 0) << i;
            }
    }
}

TEST(Transcribe, TranspositionShiftsNotes) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto p = opera::testing::synth_phrase(seed);
        std::vector<double> lo = p.midi, hi = p.midi;
        for (std::size_t i = 0; i < p.midi.size(); ++i) {
            if (p.midi[i] == 0.0) continue;
            lo[i] -= 5.0;
            hi[i] -= 3.0;
        }
        auto a = transcribe(track_from_midi(lo));
        auto b = transcribe(track_from_midi(hi));
        ASSERT_EQ(a.notes.size(), b.notes.size()) << seed;
        for (std::size_t k = 0; k < a.notes.size(); ++k) {
            EXPECT_EQ(b.notes[k].midi_pitch, a.notes[k].midi_pitch + 2);
            EXPECT_EQ(b.notes[k].start_frame, a.notes[k].start_frame);
            EXPECT_EQ(b.notes[k].end_frame, a.notes[k].end_frame);
        }
    }
}

TEST(Transcribe, OutOfRangePitchStaysInRange) {
    std::vector<double> m(60, 30.0);
    m.insert(m.end(), 60, 90.0);
    auto s = transcribe(track_from_midi(m));
    expect_well_formed(s, m.size());
}

TEST(Transcribe, OptimalOnReducedGrid) {
    const auto cfg = reduced_config();
    NoteHmm h(cfg);
    ASSERT_EQ(h.num_states(), 16u);
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> frames(1, 8);
    std::uniform_real_distribution<double> pitch(59.5, 62.5);
    std::bernoulli_distribution voiced(0.8);
    for (int c = 0; c < 80; ++c) {
        std::vector<double> m(static_cast<std::size_t>(frames(rng)));
        for (auto& v : m) v = voiced(rng) ? pitch(rng) : 0.0;
        const auto e = h.emissions(track_from_midi(m));
        const auto v = hmm::viterbi(h.transitions(), e);
        const auto best = opera::testing::enumerate_best_path(h.transitions(), e);
        EXPECT_NEAR(v.log_prob, best.log_prob, 1e-9) << "case " << c;
        EXPECT_NEAR(hmm::path_log_prob(h.transitions(), e, v.path), v.log_prob, 1e-9);
    }
}

TEST(Transcribe, SyntheticPhrases) {
    double total = 0.0, worst = 1.0;
    const int n = 20;
    for (int seed = 1; seed <= n; ++seed) {
        auto p = opera::testing::synth_phrase(static_cast<std::uint64_t>(seed));
        auto s = transcribe(track_from_midi(p.midi));
        expect_well_formed(s, p.midi.size());
        const double f = score_note_f(s.notes, p.notes).f_score;
        total += f;
        worst = std::min(worst, f);
    }
    EXPECT_GE(total / n, 0.8);
    EXPECT_GE(worst, 0.5);
}

TEST(Transcribe, Errors) {
    EXPECT_THROW(transcribe(PitchTrack{}), EmptyTrack);
    auto t = constant_track(10, 60);
    t.hop_s = 0.005;
    EXPECT_THROW(transcribe(t), ConfigError);
    NoteHmmConfig c;
    c.attack_max_frames = 0;
    EXPECT_THROW(NoteHmm{c}, ConfigError);
    c = {};
    c.transition_distribution = {{0.0, 0.5}};
    EXPECT_THROW(NoteHmm{c}, ConfigError);
    c = {};
    c.stable.self_transition = 0.996;
    EXPECT_THROW(NoteHmm{c}, ConfigError);
}

TEST(NoteF, Examples) {
    const std::vector<TranscribedNote> ref = {{60, 0, 50}, {62, 50, 100}, {64, 100, 150}};
    auto same = score_note_f(ref, ref);
    EXPECT_EQ(same.precision, 1.0);
    EXPECT_EQ(same.recall, 1.0);
    EXPECT_EQ(same.f_score, 1.0);

    auto none = score_note_f({}, ref);
    EXPECT_EQ(none.f_score, 0.0);
    EXPECT_EQ(score_note_f(ref, {}).f_score, 0.0);

    const std::vector<TranscribedNote> two = {{60, 3, 50}, {62, 55, 100}};
    auto partial = score_note_f(two, ref);
    EXPECT_DOUBLE_EQ(partial.precision, 1.0);
    EXPECT_DOUBLE_EQ(partial.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(partial.f_score, 0.8);

    const std::vector<TranscribedNote> off = {{60, 6, 50}, {63, 50, 100}};
    EXPECT_EQ(score_note_f(off, ref).f_score, 0.0);
    EXPECT_DOUBLE_EQ(score_note_f(off, ref, 5, 1).recall, 1.0 / 3.0);
}

TEST(NoteF, OneToOneMatching) {
    const std::vector<TranscribedNote> ref = {{60, 10, 20}};
    const std::vector<TranscribedNote> pred = {{60, 8, 9}, {60, 10, 20}};
    auto s = score_note_f(pred, ref);
    EXPECT_DOUBLE_EQ(s.precision, 0.5);
    EXPECT_DOUBLE_EQ(s.recall, 1.0);
}

TEST(Histogram, ReadAndUse) {
    std::istringstream in(R"({"intervals": [{"semitones": -1, "prob": 0.25}, {"semitones": 0, "prob": 0.5},
                                            {"semitones": 1, "prob": 0.25}]})");
    auto d = read_transition_histogram(in);
    ASSERT_EQ(d.size(), 3u);
    NoteHmmConfig c;
    c.transition_distribution = d;
    // Third-semitone targets interpolate the histogram: masses 0.25, 1/3, 5/12, 0.5, ... total 2.5.
    EXPECT_NEAR(note_transition_prob(60, 61, c), 0.25 / 2.5, 1e-12);
    EXPECT_NEAR(note_transition_prob(60, 60 + 1.0 / 3.0, c), (5.0 / 12.0) / 2.5, 1e-12);
    EXPECT_EQ(note_transition_prob(60, 62, c), 0.0);
    EXPECT_EQ(transcribe(constant_track(40, 70), c).notes.size(), 1u);
}

TEST(Histogram, Errors) {
    const std::pair<const char*, const char*> cases[] = {
        {"[1,2", "not valid JSON"},
        {"{}", "/intervals"},
        {R"({"intervals": [{"prob": 1}]})", "/intervals/0/semitones"},
        {R"({"intervals": [{"semitones": 0, "prob": -1}]})", "/intervals/0/prob"},
        {R"({"intervals": [{"semitones": 0, "prob": 0.5}, {"semitones": 0, "prob": 0.5}]})", "duplicate"},
        {R"({"intervals": [{"semitones": 0, "prob": 0.5}]})", "sum to 1"},
    };
    for (const auto& [doc, needle] : cases) {
        std::istringstream in(doc);
        try {
            read_transition_histogram(in);
            ADD_FAILURE() << doc;
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    }
}

TEST(PseudoScoreIo, JsonRoundTripAndCsv) {
    PseudoScore s;
    s.frame_pitch = {0, 60, 60, 0, 62};
    s.notes = {{60, 1, 3}, {62, 4, 5}};
    std::stringstream js;
    write_pseudo_score_json(js, s);
    EXPECT_EQ(read_pseudo_score_json(js), s.notes);
    std::ostringstream csv;
    write_pseudo_score_csv(csv, s);
    EXPECT_EQ(csv.str(), "frame,midi_pitch\n0,0\n1,60\n2,60\n3,0\n4,62\n");
}

TEST(PseudoScoreIo, JsonErrors) {
    for (const char* doc : {"nope", R"({"notes": 3})", R"({"notes": [{"midi": 60, "start_frame": 0}]})",
                            R"({"notes": [{"midi": 60, "start_frame": 5, "end_frame": 5}]})",
                            R"({"notes": [{"midi": 60, "start_frame": 0, "end_frame": 5},
                                           {"midi": 62, "start_frame": 4, "end_frame": 8}]})"}) {
        std::istringstream in(doc);
        EXPECT_THROW(read_pseudo_score_json(in), FormatError) << doc;
    }
}
