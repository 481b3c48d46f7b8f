#pragma once

// Duration-allocation benchmark on a synthetic corpus: mean absolute
// per-phoneme error in frames, over all notes and over notes shorter than
// 2 s, for the Lagrange, fitting-heuristic and mean-fit allocators.

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "opera/duration_model.hpp"
#include "opera/duration_table.hpp"
#include "opera/error.hpp"
#include "opera/score_io.hpp"

namespace opera {

inline constexpr std::int64_t kShortNoteFrames = 200;

struct PhonemeErrors {
    std::vector<double> abs_errors;
    bool short_note = false;
};

inline PhonemeErrors duration_error(std::span<const std::int64_t> predicted, std::span<const std::int64_t> truth,
                                    std::int64_t note_frames) {
    if (predicted.size() != truth.size())
        throw LengthMismatch("predicted and true duration sequences differ in length");
    PhonemeErrors out;
    out.abs_errors.reserve(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i)
        out.abs_errors.push_back(std::abs(static_cast<double>(predicted[i] - truth[i])));
    out.short_note = note_frames < kShortNoteFrames;
    return out;
}

struct PhonemeStats {
    double mean_frames = 10.0;
    double std_frames = 3.0;
};

struct LengthRegime {
    std::string name;
    double prob = 1.0;
    double vowel_scale = 1.0;
    double consonant_scale = 1.0;
};

struct BenchmarkConfig {
    std::size_t train_notes = 4000;
    std::size_t test_notes = 2000;
    std::size_t phrase_notes = 8;
    double rest_prob = 0.2;
    std::vector<LengthRegime> regimes = {
        {"short", 0.59, 1.0, 1.0},
        {"medium", 0.315, 2.2, 1.2},
        {"long", 0.085, 7.0, 1.6},
        {"sustained", 0.01, 13.0, 2.0},
    };
    std::map<std::string, PhonemeStats> phonemes;  // overrides of the built-in stats
    std::vector<std::vector<std::string>> syllables;  // empty = built-in set
    std::optional<double> equal_std;
    bool zero_residual = false;
    bool use_true_distributions = false;
    int components = 2;
    std::size_t primary_index = 1;
};

inline const std::vector<std::vector<std::string>>& default_benchmark_syllables() {
    static const std::vector<std::vector<std::string>> s = {
        {"l", "j", "E", "a", "a", "N"}, {"a"}, {"m", "a"}, {"n", "i"}, {"w", "O"}, {"s`", "1`"},
        {"t", "7"}, {"z`", "@n"}, {"ts\\", "j", "a"}, {"s\\", "j", "A", "N"}, {"x", "w", "A", "N"},
        {"H", "E"}, {"ts`", "UN"}, {"k", "w", "an"}, {"ts\\h", "j", "oU"}, {"l", "aI"}, {"s`", "an"},
        {"x", "w", "a"}, {"m", "eI"}, {"kh", "an"}, {"in"}, {"f", "7N"}, {"s\\", "H", "E"}, {"t", "AU"},
        {"ts\\", "j", "a", "AU"}, {"x", "w", "a", "aI"}, {"7"}, {"j", "a", "a", "N"}};
    return s;
}

/// Deterministic built-in per-phoneme statistics (frames at 10 ms).
inline std::map<std::string, PhonemeStats> default_phoneme_stats(const PhonemeInventory& inventory = default_inventory()) {
    std::map<std::string, PhonemeStats> out;
    int i = 0;
    for (const auto& [sym, cls] : inventory.classes()) {
        if (cls == PhonemeClass::Vowel)
            out[sym] = {16.0 + 3.0 * (i % 7), 5.0 + 2.0 * (i % 4)};
        else
            out[sym] = {6.0 + 1.5 * (i % 5), 1.5 + 0.75 * (i % 3)};
        ++i;
    }
    return out;
}

namespace bench_detail {

using nlohmann::json;

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
    if (!obj.is_object()) throw ConfigError(path.empty() ? "/: expected an object" : path + ": expected an object");
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(path + "/" + key + ": unknown key");
    }
}

inline double get_number(const json& obj, const char* key, const std::string& path, double lo, double hi) {
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(path + "/" + key + ": expected a number");
    const double d = v.get<double>();
    if (!(d >= lo && d <= hi)) throw ConfigError(path + "/" + key + ": value out of range");
    return d;
}

inline std::size_t get_count(const json& obj, const char* key, const std::string& path, std::size_t lo) {
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(lo))
        throw ConfigError(path + "/" + key + ": expected an integer >= " + std::to_string(lo));
    return v.get<std::size_t>();
}

inline bool get_bool(const json& obj, const char* key, const std::string& path) {
    if (!obj.at(key).is_boolean()) throw ConfigError(path + "/" + key + ": expected true or false");
    return obj.at(key).get<bool>();
}

}  // namespace bench_detail

/// Benchmark config from JSON. Every key is optional; unknown keys and bad
/// values raise ConfigError naming the JSON path.
inline BenchmarkConfig read_benchmark_config(std::istream& in, const PhonemeInventory& inventory = default_inventory()) {
    using bench_detail::json;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("/: not valid JSON: ") + e.what());
    }
    bench_detail::check_keys(doc,
                             {"train_notes", "test_notes", "phrase_notes", "rest_prob", "regimes", "phonemes",
                              "syllables", "equal_std", "zero_residual", "use_true_distributions", "components",
                              "primary_index"},
                             "");
    BenchmarkConfig c;
    if (doc.contains("train_notes")) c.train_notes = bench_detail::get_count(doc, "train_notes", "", 1);
    if (doc.contains("test_notes")) c.test_notes = bench_detail::get_count(doc, "test_notes", "", 1);
    if (doc.contains("phrase_notes")) c.phrase_notes = bench_detail::get_count(doc, "phrase_notes", "", 1);
    if (doc.contains("rest_prob")) c.rest_prob = bench_detail::get_number(doc, "rest_prob", "", 0.0, 1.0);
    if (doc.contains("components")) c.components = static_cast<int>(bench_detail::get_count(doc, "components", "", 1));
    if (doc.contains("primary_index")) c.primary_index = bench_detail::get_count(doc, "primary_index", "", 0);
    if (doc.contains("zero_residual")) c.zero_residual = bench_detail::get_bool(doc, "zero_residual", "");
    if (doc.contains("use_true_distributions"))
        c.use_true_distributions = bench_detail::get_bool(doc, "use_true_distributions", "");
    if (doc.contains("equal_std") && !doc["equal_std"].is_null())
        c.equal_std = bench_detail::get_number(doc, "equal_std", "", 0.0, 1e6);
    if (doc.contains("regimes")) {
        const auto& r = doc["regimes"];
        if (!r.is_array() || r.empty()) throw ConfigError("/regimes: expected a non-empty array");
        c.regimes.clear();
        double total = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const auto path = "/regimes/" + std::to_string(i);
            bench_detail::check_keys(r[i], {"name", "prob", "vowel_scale", "consonant_scale"}, path);
            LengthRegime g;
            g.name = r[i].value("name", "regime" + std::to_string(i));
            for (const char* key : {"prob", "vowel_scale", "consonant_scale"})
                if (!r[i].contains(key)) throw ConfigError(path + "/" + key + ": missing");
            g.prob = bench_detail::get_number(r[i], "prob", path, 0.0, 1.0);
            g.vowel_scale = bench_detail::get_number(r[i], "vowel_scale", path, 1e-6, 1e3);
            g.consonant_scale = bench_detail::get_number(r[i], "consonant_scale", path, 1e-6, 1e3);
            total += g.prob;
            c.regimes.push_back(g);
        }
        if (std::abs(total - 1.0) > 1e-6) throw ConfigError("/regimes: probabilities must sum to 1");
    }
    if (doc.contains("phonemes")) {
        const auto& p = doc["phonemes"];
        if (!p.is_object()) throw ConfigError("/phonemes: expected an object");
        for (const auto& [sym, stats] : p.items()) {
            const auto path = "/phonemes/" + sym;
            if (!inventory.contains(sym)) throw ConfigError(path + ": phoneme not in inventory");
            bench_detail::check_keys(stats, {"mean_frames", "std_frames"}, path);
            if (!stats.contains("mean_frames") || !stats.contains("std_frames"))
                throw ConfigError(path + ": needs mean_frames and std_frames");
            c.phonemes[sym] = {bench_detail::get_number(stats, "mean_frames", path, 1.0, 1e5),
                               bench_detail::get_number(stats, "std_frames", path, 0.0, 1e5)};
        }
    }
    if (doc.contains("syllables")) {
        const auto& s = doc["syllables"];
        if (!s.is_array() || s.empty()) throw ConfigError("/syllables: expected a non-empty array");
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto path = "/syllables/" + std::to_string(i);
            if (!s[i].is_array() || s[i].empty()) throw ConfigError(path + ": expected a non-empty array of phonemes");
            std::vector<std::string> syl;
            for (std::size_t j = 0; j < s[i].size(); ++j) {
                if (!s[i][j].is_string() || !inventory.contains(s[i][j].get<std::string>()))
                    throw ConfigError(path + "/" + std::to_string(j) + ": phoneme not in inventory");
                syl.push_back(s[i][j].get<std::string>());
            }
            c.syllables.push_back(std::move(syl));
        }
    }
    return c;
}

/// A synthetic note with its generating distributions.
struct SyntheticNote {
    ObservedNote observed;
    std::vector<PhonemeDurationDistribution> true_distributions;
    std::int64_t total_frames = 0;
};

/// Phrases of notes; each note draws a syllable and a length regime, then
/// samples every phoneme's duration from its regime-scaled Gaussian. With
/// `zero_residual`, true means are integral and the sampled deviations are
/// centred so that T equals the sum of the true means.
inline std::vector<SyntheticNote> generate_synthetic_notes(std::size_t count, const BenchmarkConfig& config,
                                                           std::mt19937_64& rng,
                                                           const PhonemeInventory& inventory = default_inventory()) {
    auto stats = default_phoneme_stats(inventory);
    for (const auto& [sym, s] : config.phonemes) stats[sym] = s;
    const auto& syllables = config.syllables.empty() ? default_benchmark_syllables() : config.syllables;

    std::vector<double> regime_probs;
    for (const auto& r : config.regimes) regime_probs.push_back(r.prob);
    std::discrete_distribution<std::size_t> pick_regime(regime_probs.begin(), regime_probs.end());
    std::uniform_int_distribution<std::size_t> pick_syllable(0, syllables.size() - 1);
    std::bernoulli_distribution rest(config.rest_prob);
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<SyntheticNote> notes;
    notes.reserve(count);
    PhonemeClass before = PhonemeClass::Silence;
    std::size_t in_phrase = 0;
    while (notes.size() < count) {
        if (in_phrase == config.phrase_notes) {
            in_phrase = 0;
            before = PhonemeClass::Silence;
        }
        const auto& regime = config.regimes[pick_regime(rng)];
        const auto& syl = syllables[pick_syllable(rng)];
        SyntheticNote note;
        note.observed.phonemes = syl;
        note.observed.before = before;
        std::vector<double> means, stds, draws;
        for (const auto& ph : syl) {
            const auto& s = stats.at(ph);
            const bool vowel = inventory.class_of(ph) == PhonemeClass::Vowel;
            const double scale = vowel ? regime.vowel_scale : regime.consonant_scale;
            double mean = s.mean_frames * scale;
            double sd = config.equal_std ? *config.equal_std : s.std_frames * scale;
            if (config.zero_residual) mean = std::max(1.0, std::round(mean));
            means.push_back(mean);
            stds.push_back(sd);
            draws.push_back(unit(rng));
            note.true_distributions.push_back(single_gaussian(ph, mean, sd));
        }
        if (config.zero_residual) {
            double centre = 0.0;
            for (double z : draws) centre += z;
            centre /= static_cast<double>(draws.size());
            std::vector<double> real;
            double target = 0.0;
            for (std::size_t i = 0; i < syl.size(); ++i) {
                real.push_back(std::max(1.0, means[i] + stds[i] * (draws[i] - centre)));
                target += means[i];
            }
            // Re-centre after the floor so the reals still sum to the target.
            double sum = 0.0;
            for (double r : real) sum += r;
            for (auto& r : real) r *= target / sum;
            note.observed.durations = quantize_to_frames(real, static_cast<std::int64_t>(target));
        } else {
            for (std::size_t i = 0; i < syl.size(); ++i)
                note.observed.durations.push_back(
                    std::max<std::int64_t>(1, std::llround(means[i] + stds[i] * draws[i])));
        }
        for (auto d : note.observed.durations) note.total_frames += d;
        if (!notes.empty() && in_phrase > 0 && before != PhonemeClass::Silence)
            notes.back().observed.after = inventory.class_of(syl.front());
        before = rest(rng) ? PhonemeClass::Silence : inventory.class_of(syl.back());
        notes.push_back(std::move(note));
        ++in_phrase;
    }
    return notes;
}

struct MethodErrors {
    double sum_all = 0.0;
    double sum_short = 0.0;
    double mean_all() const { return n_all ? sum_all / static_cast<double>(n_all) : 0.0; }
    double mean_short() const { return n_short ? sum_short / static_cast<double>(n_short) : 0.0; }
    std::size_t n_all = 0;
    std::size_t n_short = 0;
};

struct NoteErrorRow {
    std::size_t note_index = 0;
    std::size_t phonemes = 0;
    std::int64_t note_frames = 0;
    bool short_note = false;
    std::array<double, 3> mean_abs_error{};  // lagrange, heuristic, meanfit
};

struct DurationEvalReport {
    std::uint64_t seed = 0;
    std::size_t n_notes = 0;
    std::size_t n_short_notes = 0;
    std::size_t n_phonemes = 0;
    std::size_t n_short_phonemes = 0;
    std::size_t constraint_violations = 0;
    std::size_t lagrange_clamped_notes = 0;
    double lagrange_max_abs_alpha = 0.0;
    std::map<AllocationMethod, MethodErrors> methods;
    std::vector<NoteErrorRow> per_note;
};

struct BenchmarkArtifacts {
    DurationEvalReport report;
    DurationModelTable table;
};

inline BenchmarkArtifacts run_duration_benchmark(std::uint64_t seed, const BenchmarkConfig& config = {},
                                                 const PhonemeInventory& inventory = default_inventory()) {
    if (config.regimes.empty()) throw ConfigError("/regimes: expected a non-empty array");
    std::mt19937_64 rng(seed);
    const auto train = generate_synthetic_notes(config.train_notes, config, rng, inventory);
    const auto test = generate_synthetic_notes(config.test_notes, config, rng, inventory);

    std::vector<ObservedNote> observed;
    observed.reserve(train.size());
    for (const auto& n : train) observed.push_back(n.observed);
    EstimatorOptions est;
    est.components = config.components;
    auto table = estimate_table(observed, inventory, est);

    DurationEvalReport report;
    report.seed = seed;
    for (auto m : {AllocationMethod::Lagrange, AllocationMethod::FittingHeuristic, AllocationMethod::MeanFit})
        report.methods[m] = {};

    for (std::size_t idx = 0; idx < test.size(); ++idx) {
        const auto& note = test[idx];
        const auto& ph = note.observed.phonemes;
        const auto t = note.total_frames;
        NoteSpan span;
        span.total_frames = t;
        if (config.use_true_distributions) {
            span.distributions = note.true_distributions;
        } else {
            auto ctx = make_contexts(ph, t, inventory, note.observed.before, note.observed.after);
            span.distributions = predict_distributions(ctx, table);
        }
        const std::size_t primary = std::min(config.primary_index, ph.size() - 1);

        const auto lag = allocate_lagrange(span);
        const auto heur = allocate_fitting_heuristic(span, primary);
        const auto mean = allocate_mean_fit(span, table, primary);
        report.lagrange_max_abs_alpha = std::max(report.lagrange_max_abs_alpha, std::abs(lag.alpha));
        if (!lag.clamped_indices.empty()) ++report.lagrange_clamped_notes;

        NoteErrorRow row{idx, ph.size(), t, t < kShortNoteFrames, {}};
        int slot = 0;
        for (const AllocationResult* r : {&lag, &heur, &mean}) {
            std::int64_t sum = 0;
            for (auto d : r->durations_frames) sum += d;
            if (sum != t) ++report.constraint_violations;
            const auto err = duration_error(r->durations_frames, note.observed.durations, t);
            auto& acc = report.methods[r->method];
            double note_sum = 0.0;
            for (double e : err.abs_errors) {
                acc.sum_all += e;
                ++acc.n_all;
                note_sum += e;
                if (err.short_note) {
                    acc.sum_short += e;
                    ++acc.n_short;
                }
            }
            row.mean_abs_error[slot++] = note_sum / static_cast<double>(err.abs_errors.size());
        }
        ++report.n_notes;
        report.n_phonemes += ph.size();
        if (row.short_note) {
            ++report.n_short_notes;
            report.n_short_phonemes += ph.size();
        }
        report.per_note.push_back(row);
    }
    return {std::move(report), std::move(table)};
}

inline DurationEvalReport synth_duration_benchmark(std::uint64_t seed, const BenchmarkConfig& config = {}) {
    return run_duration_benchmark(seed, config).report;
}

inline nlohmann::json report_to_json(const DurationEvalReport& r) {
    nlohmann::json methods = nlohmann::json::object();
    for (const auto& [m, e] : r.methods)
        methods[std::string(to_string(m))] = {{"mean_abs_error_frames_all", e.mean_all()},
                                              {"mean_abs_error_frames_short", e.mean_short()}};
    return {{"averaging", "per phoneme"},
            {"frame_ms", 10},
            {"short_note_frames", kShortNoteFrames},
            {"seed", r.seed},
            {"n_notes", r.n_notes},
            {"n_short_notes", r.n_short_notes},
            {"n_phonemes", r.n_phonemes},
            {"n_short_phonemes", r.n_short_phonemes},
            {"constraint_violations", r.constraint_violations},
            {"lagrange_clamped_notes", r.lagrange_clamped_notes},
            {"lagrange_max_abs_alpha", r.lagrange_max_abs_alpha},
            {"methods", methods}};
}

/// Aligned text table: rows are methods, columns "all" and "notes < 2s".
inline void write_report_table(std::ostream& out, const DurationEvalReport& r) {
    char line[128];
    out << "mean phoneme duration error (frames, averaged per phoneme)\n";
    std::snprintf(line, sizeof line, "%-20s %10s %12s\n", "", "all", "notes < 2s");
    out << line;
    const std::pair<AllocationMethod, const char*> rows[] = {{AllocationMethod::Lagrange, "Lagrange"},
                                                             {AllocationMethod::FittingHeuristic, "FittingHeuristic"},
                                                             {AllocationMethod::MeanFit, "MeanFit"}};
    for (const auto& [m, name] : rows) {
        const auto& e = r.methods.at(m);
        std::snprintf(line, sizeof line, "%-20s %10.2f %12.2f\n", name, e.mean_all(), e.mean_short());
        out << line;
    }
    std::snprintf(line, sizeof line, "notes: %zu (%zu shorter than 2 s)\n", r.n_notes, r.n_short_notes);
    out << line;
}

inline void write_note_errors_csv(std::ostream& out, const DurationEvalReport& r) {
    out << "note_index,phonemes,note_frames,short,lagrange_mae,heuristic_mae,meanfit_mae\n";
    char line[160];
    for (const auto& row : r.per_note) {
        std::snprintf(line, sizeof line, "%zu,%zu,%lld,%d,%.6f,%.6f,%.6f\n", row.note_index, row.phonemes,
                      static_cast<long long>(row.note_frames), row.short_note ? 1 : 0, row.mean_abs_error[0],
                      row.mean_abs_error[1], row.mean_abs_error[2]);
        out << line;
    }
}

}  // namespace opera
