#pragma once

// Monophonic MusicXML (part-wise or time-wise, uncompressed) to Score.

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "opera/error.hpp"
#include "opera/frames.hpp"
#include "opera/score_io.hpp"

namespace opera {

inline constexpr double kDefaultTempoBpm = 60.0;

namespace musicxml_detail {

using boost::property_tree::ptree;

inline std::optional<double> child_number(const ptree& node, const char* path) {
    auto v = node.get_optional<std::string>(path);
    if (!v) return std::nullopt;
    return detail::parse_double(*v);
}

inline bool has_child(const ptree& node, const char* name) { return node.find(name) != node.not_found(); }

inline std::optional<double> type_to_quarters(std::string_view type) {
    if (type == "breve") return 8.0;
    if (type == "whole") return 4.0;
    if (type == "half") return 2.0;
    if (type == "quarter") return 1.0;
    if (type == "eighth") return 0.5;
    if (type == "16th") return 0.25;
    if (type == "32nd") return 0.125;
    if (type == "64th") return 0.0625;
    if (type == "128th") return 0.03125;
    return std::nullopt;
}

inline int step_to_semitone(char step) {
    switch (step) {
        case 'C': return 0;
        case 'D': return 2;
        case 'E': return 4;
        case 'F': return 5;
        case 'G': return 7;
        case 'A': return 9;
        case 'B': return 11;
        default: return -1;
    }
}

// Walks the content of a single part in document order.
class PartReader {
public:
    explicit PartReader(Score& score) : score_(score) {}

    void element(const std::string& name, const ptree& node) {
        if (name == "attributes") {
            if (auto d = child_number(node, "divisions")) {
                if (!(*d > 0)) throw MalformedDocument("divisions must be positive");
                divisions_ = *d;
            }
        } else if (name == "direction") {
            if (auto s = node.get_child_optional("sound")) sound(*s);
            for (const auto& [dt_name, dt] : node) {
                if (dt_name != "direction-type") continue;
                if (auto m = dt.get_child_optional("metronome")) metronome(*m);
            }
        } else if (name == "sound") {
            sound(node);
        } else if (name == "note") {
            note(node);
        } else if (name == "backup") {
            throw UnsupportedFeature("<backup> implies multiple voices; only monophonic scores are supported");
        } else if (name == "forward") {
            auto d = child_number(node, "duration");
            if (!d) throw MalformedDocument("<forward> without duration");
            emit(0, quarters_to_seconds(*d / divisions_), std::nullopt, false, false);
        }
    }

    void finish() {
        if (!tempo_seen_ && !score_.notes.empty())
            score_.warnings.push_back("no tempo marking; defaulting to 60 bpm");
    }

private:
    void set_tempo(double bpm) {
        if (!(bpm > 0)) return;
        tempo_ = bpm;
        if (!tempo_seen_ && score_.notes.empty()) score_.tempo_bpm = bpm;
        tempo_seen_ = true;
    }

    void sound(const ptree& node) {
        if (auto t = node.get_optional<std::string>("<xmlattr>.tempo"))
            if (auto v = detail::parse_double(*t)) {
                set_tempo(*v);
            }
    }

    void metronome(const ptree& node) {
        auto unit = node.get_optional<std::string>("beat-unit");
        auto per_minute = child_number(node, "per-minute");
        if (!unit || !per_minute) return;
        auto q = type_to_quarters(detail::trim(*unit));
        if (!q) return;
        double quarters = *q;
        double add = quarters / 2.0;
        for (const auto& [n, _] : node)
            if (n == "beat-unit-dot") {
                quarters += add;
                add /= 2.0;
            }
        set_tempo(*per_minute * quarters);
    }

    double quarters_to_seconds(double quarters) const { return quarters * 60.0 / tempo_; }

    void note(const ptree& node) {
        if (has_child(node, "chord")) throw UnsupportedFeature("chords are not supported (monophonic scores only)");
        if (has_child(node, "cue")) return;
        if (auto v = node.get_optional<std::string>("voice")) {
            voices_.insert(std::string(detail::trim(*v)));
            if (voices_.size() > 1) throw UnsupportedFeature("multiple voices in one part; only monophonic scores are supported");
        }

        double quarters = 0.0;
        if (has_child(node, "grace")) {
            auto type = node.get_optional<std::string>("type");
            auto q = type ? type_to_quarters(detail::trim(*type)) : std::nullopt;
            if (!q) throw MalformedDocument("grace note without a usable <type>");
            quarters = *q;
            double add = quarters / 2.0;
            for (const auto& [n, _] : node)
                if (n == "dot") {
                    quarters += add;
                    add /= 2.0;
                }
        } else {
            auto d = child_number(node, "duration");
            if (!d || *d < 0) throw MalformedDocument("<note> without a valid duration");
            quarters = *d / divisions_;
        }
        if (!(quarters > 0)) return;

        int midi = 0;
        if (!has_child(node, "rest")) {
            auto step = node.get_optional<std::string>("pitch.step");
            auto octave = child_number(node, "pitch.octave");
            if (!step || !octave) throw MalformedDocument("<note> without pitch or rest");
            auto s = detail::trim(*step);
            const int semis = s.size() == 1 ? step_to_semitone(s[0]) : -1;
            if (semis < 0) throw MalformedDocument("bad pitch step '" + *step + "'");
            const double alter = child_number(node, "pitch.alter").value_or(0.0);
            midi = static_cast<int>(std::lround((*octave + 1) * 12 + semis + alter));
            if (midi < kMinMidi || midi > kMaxMidi) {
                score_.warnings.push_back("pitch " + std::to_string(midi) + " outside [35,85]; clamped");
                midi = std::clamp(midi, kMinMidi, kMaxMidi);
            }
        }

        bool tie_start = false;
        bool tie_stop = false;
        auto scan_ties = [&](const ptree& parent, const char* tag) {
            for (const auto& [n, child] : parent) {
                if (n != tag) continue;
                auto type = child.get<std::string>("<xmlattr>.type", "");
                if (type == "start") tie_start = true;
                if (type == "stop") tie_stop = true;
            }
        };
        scan_ties(node, "tie");
        if (!tie_start && !tie_stop)
            for (const auto& [n, notations] : node)
                if (n == "notations") scan_ties(notations, "tied");

        std::optional<std::string> syllable;
        if (auto lyric = node.get_child_optional("lyric"))
            if (auto text = lyric->get_optional<std::string>("text")) {
                auto t = detail::trim(*text);
                if (!t.empty()) syllable = std::string(t);
            }

        emit(midi, quarters_to_seconds(quarters), std::move(syllable), tie_start, tie_stop);
    }

    void emit(int midi, double seconds, std::optional<std::string> syllable, bool tie_start, bool tie_stop) {
        if (tie_stop && tie_open_ && !score_.notes.empty() && score_.notes.back().midi_pitch == midi && midi != 0) {
            auto& prev = score_.notes.back();
            prev.duration_s += seconds;
            prev.duration_frames = std::max<std::int64_t>(1, seconds_to_frames(prev.duration_s));
            if (!prev.syllable) prev.syllable = std::move(syllable);
            tie_open_ = tie_start;
            return;
        }
        NoteEvent ev;
        ev.midi_pitch = midi;
        ev.duration_s = seconds;
        ev.duration_frames = std::max<std::int64_t>(1, seconds_to_frames(seconds));
        ev.syllable = std::move(syllable);
        ev.note_index = static_cast<int>(score_.notes.size());
        score_.notes.push_back(std::move(ev));
        tie_open_ = tie_start && midi != 0;
    }

    Score& score_;
    double divisions_ = 1.0;
    double tempo_ = kDefaultTempoBpm;
    bool tempo_seen_ = false;
    bool tie_open_ = false;
    std::set<std::string> voices_;
};

}  // namespace musicxml_detail

/// Parses an uncompressed MusicXML document. Only the first part is read;
/// additional parts are reported in `Score::warnings`.
inline Score parse_musicxml(std::string_view document, std::string source_id = {}) {
    namespace pt = boost::property_tree;
    using musicxml_detail::ptree;

    ptree doc;
    try {
        std::istringstream in{std::string(document)};
        pt::read_xml(in, doc);
    } catch (const pt::xml_parser_error& e) {
        throw MalformedDocument(std::string("not well-formed XML: ") + e.message());
    }

    Score score;
    score.source_id = std::move(source_id);
    score.tempo_bpm = kDefaultTempoBpm;
    musicxml_detail::PartReader reader(score);

    if (auto root = doc.get_child_optional("score-partwise")) {
        const ptree* first = nullptr;
        int parts = 0;
        for (const auto& [name, node] : *root)
            if (name == "part") {
                if (!first) first = &node;
                ++parts;
            }
        if (!first) throw MalformedDocument("score-partwise without a <part>");
        if (parts > 1) score.warnings.push_back("ignoring " + std::to_string(parts - 1) + " additional part(s)");
        for (const auto& [name, measure] : *first) {
            if (name != "measure") continue;
            for (const auto& [el, node] : measure) reader.element(el, node);
        }
    } else if (auto root = doc.get_child_optional("score-timewise")) {
        std::optional<std::string> part_id;
        bool extra_parts = false;
        bool any_part = false;
        for (const auto& [name, measure] : *root) {
            if (name != "measure") continue;
            for (const auto& [pname, part] : measure) {
                if (pname != "part") continue;
                any_part = true;
                auto id = part.get<std::string>("<xmlattr>.id", "");
                if (!part_id) part_id = id;
                if (id != *part_id) {
                    extra_parts = true;
                    continue;
                }
                for (const auto& [el, node] : part) reader.element(el, node);
            }
        }
        if (!any_part) throw MalformedDocument("score-timewise without a <part>");
        if (extra_parts) score.warnings.push_back("ignoring additional part(s)");
    } else {
        throw MalformedDocument("root element is neither <score-partwise> nor <score-timewise>");
    }

    reader.finish();
    if (score.notes.empty()) throw MalformedDocument("score contains no notes");
    return score;
}

}  // namespace opera
