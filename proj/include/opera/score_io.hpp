#pragma once

// Score-side data: note events, the phoneme lexicon, and phoneme-level
// annotations of recorded phrases.

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "opera/error.hpp"
#include "opera/frames.hpp"
#include "opera/pitch.hpp"

namespace opera {

struct NoteEvent {
    int midi_pitch = 0;  // 0 = rest
    double duration_s = 0.0;
    std::int64_t duration_frames = 1;
    std::optional<std::string> syllable;
    int note_index = 0;

    bool is_rest() const noexcept { return midi_pitch == 0; }
    bool operator==(const NoteEvent&) const = default;
};

struct Score {
    std::vector<NoteEvent> notes;
    double tempo_bpm = 60.0;  // tempo in effect at the first note
    std::string source_id;
    std::vector<std::string> warnings;

    double total_seconds() const {
        double total = 0.0;
        for (const auto& n : notes) total += n.duration_s;
        return total;
    }
    bool operator==(const Score&) const = default;
};

enum class PhonemeClass { Vowel, Consonant, Silence };

inline std::string_view to_string(PhonemeClass c) {
    switch (c) {
        case PhonemeClass::Vowel: return "vowel";
        case PhonemeClass::Consonant: return "consonant";
        case PhonemeClass::Silence: return "silence";
    }
    return "silence";
}

inline std::optional<PhonemeClass> phoneme_class_from_string(std::string_view s) {
    if (s == "vowel") return PhonemeClass::Vowel;
    if (s == "consonant") return PhonemeClass::Consonant;
    if (s == "silence") return PhonemeClass::Silence;
    return std::nullopt;
}

/// Phoneme symbols with their broad class. Silence is never an inventory
/// member; it stands for phrase edges and rests.
class PhonemeInventory {
public:
    PhonemeInventory() = default;

    void add(std::string symbol, PhonemeClass cls) { classes_[std::move(symbol)] = cls; }
    bool contains(std::string_view symbol) const { return classes_.find(std::string(symbol)) != classes_.end(); }
    std::size_t size() const noexcept { return classes_.size(); }

    PhonemeClass class_of(std::string_view symbol) const {
        auto it = classes_.find(std::string(symbol));
        if (it == classes_.end()) throw UnknownPhoneme("phoneme not in inventory: '" + std::string(symbol) + "'");
        return it->second;
    }

    std::vector<std::string> symbols() const {
        std::vector<std::string> out;
        out.reserve(classes_.size());
        for (const auto& [sym, _] : classes_) out.push_back(sym);
        return out;
    }

    const std::map<std::string, PhonemeClass>& classes() const noexcept { return classes_; }

private:
    std::map<std::string, PhonemeClass> classes_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace detail

// Stand-in for a 51-symbol modified X-SAMPA set covering Mandarin/Jingju
// initials, glides, nuclei and finals. Mirrors data/phonemes.txt.
inline const PhonemeInventory& default_inventory() {
    static const PhonemeInventory inv = [] {
        static constexpr std::array<std::string_view, 25> consonants = {
            "p", "ph", "m", "f", "t", "th", "n", "l", "k", "kh", "x", "ts\\", "ts\\h",
            "s\\", "ts`", "ts`h", "s`", "z`", "ts", "tsh", "s", "N", "j", "w", "H"};
        static constexpr std::array<std::string_view, 26> vowels = {
            "a", "A", "o", "O", "e", "E", "7", "@", "i", "u", "y", "1", "1`",
            "@`", "aI", "eI", "AU", "oU", "an", "@n", "in", "yn", "AN", "7N", "iN", "UN"};
        PhonemeInventory out;
        for (auto c : consonants) out.add(std::string(c), PhonemeClass::Consonant);
        for (auto v : vowels) out.add(std::string(v), PhonemeClass::Vowel);
        return out;
    }();
    return inv;
}

/// Reads `symbol<TAB>vowel|consonant` lines; `#` starts a comment line.
inline PhonemeInventory read_inventory(std::istream& in) {
    PhonemeInventory inv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto fields = detail::split_ws(t);
        if (fields.size() != 2) throw FormatError("inventory line " + std::to_string(line_no) + ": expected 'symbol<TAB>class'");
        auto cls = phoneme_class_from_string(fields[1]);
        if (!cls || *cls == PhonemeClass::Silence)
            throw FormatError("inventory line " + std::to_string(line_no) + ": bad class '" + std::string(fields[1]) + "'");
        inv.add(std::string(fields[0]), *cls);
    }
    return inv;
}

struct PhonemeLexicon {
    std::map<std::string, std::vector<std::string>> entries;
    PhonemeInventory inventory;
};

/// Lexicon text format: `syllable<TAB>ph1 ph2 ...`, UTF-8, one entry per
/// line. Blank lines and `#` comments are skipped. Every phoneme must be in
/// `inventory`.
inline PhonemeLexicon read_lexicon(std::istream& in, const PhonemeInventory& inventory = default_inventory()) {
    PhonemeLexicon lex;
    lex.inventory = inventory;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto tab = t.find('\t');
        if (tab == std::string_view::npos)
            throw FormatError("lexicon line " + std::to_string(line_no) + ": missing TAB separator");
        const std::string syllable(detail::trim(t.substr(0, tab)));
        auto phones = detail::split_ws(t.substr(tab + 1));
        if (syllable.empty() || phones.empty())
            throw FormatError("lexicon line " + std::to_string(line_no) + ": empty syllable or phoneme list");
        std::vector<std::string> seq;
        for (auto p : phones) {
            if (!inventory.contains(p))
                throw FormatError("lexicon line " + std::to_string(line_no) + ": phoneme '" + std::string(p) +
                                  "' not in inventory");
            seq.emplace_back(p);
        }
        if (!lex.entries.emplace(syllable, std::move(seq)).second)
            throw FormatError("lexicon line " + std::to_string(line_no) + ": duplicate syllable '" + syllable + "'");
    }
    return lex;
}

inline const std::vector<std::string>& syllable_to_phonemes(std::string_view syllable, const PhonemeLexicon& lexicon) {
    auto it = lexicon.entries.find(std::string(syllable));
    if (it == lexicon.entries.end()) throw UnknownSyllable(std::string(syllable));
    return it->second;
}

struct PhoneInterval {
    std::string phoneme;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct AnnotatedPhrase {
    std::string phrase_id;
    std::string audio_path;
    std::vector<PhoneInterval> phones;
};

/// CSV with header `phoneme,start_s,end_s`. Intervals must be ordered and
/// may touch but not overlap.
inline AnnotatedPhrase load_annotation(std::istream& in, std::string phrase_id = {}, std::string audio_path = {}) {
    constexpr double kTouchTolerance = 1e-9;
    AnnotatedPhrase phrase{std::move(phrase_id), std::move(audio_path), {}};
    std::string line;
    if (!std::getline(in, line)) throw FormatError("annotation: missing header");
    {
        std::string header;
        for (char c : line)
            if (c != ' ' && c != '\r' && c != '\t') header.push_back(c);
        if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
        if (header != "phoneme,start_s,end_s") throw FormatError("annotation: bad header '" + line + "'");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = detail::trim(line);
        if (t.empty()) continue;
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            auto comma = t.find(',', start);
            fields.push_back(detail::trim(t.substr(start, comma == std::string_view::npos ? t.npos : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        const auto where = "annotation line " + std::to_string(line_no);
        if (fields.size() != 3 || fields[0].empty()) throw FormatError(where + ": expected 3 fields");
        auto s = detail::parse_double(fields[1]);
        auto e = detail::parse_double(fields[2]);
        if (!s || !e) throw FormatError(where + ": non-numeric time");
        if (!(*e > *s)) throw FormatError(where + ": end_s must exceed start_s");
        if (!phrase.phones.empty() && *s < phrase.phones.back().end_s - kTouchTolerance)
            throw OverlapError(where + ": interval starts at " + std::string(fields[1]) + " before previous end");
        phrase.phones.push_back({std::string(fields[0]), *s, *e});
    }
    return phrase;
}

}  // namespace opera
