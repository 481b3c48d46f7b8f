#pragma once

// Context-bucketed table of duration mixtures. Backs phoneme duration
// prediction when no trained model is supplied, and reads/writes the
// mixture-parameter JSON shared with the trainer:
//
//   {"frame_ms": 10, "K": 2, "tertile_bounds_frames": [lo, hi],
//    "entries": [{"phoneme": "a",
//                 "context": {"prev": "vowel", "next": "silence", "length": 2},
//                 "components": [{"weight": .., "mean_frames": .., "std_frames": ..}]}]}
//
// "context" and each of its keys are optional; a missing key matches any
// value. "tertile_bounds_frames" is optional.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "opera/duration_model.hpp"
#include "opera/error.hpp"
#include "opera/score_io.hpp"

namespace opera {

struct ContextKey {
    std::optional<PhonemeClass> prev;
    std::optional<PhonemeClass> next;
    std::optional<int> length_tertile;  // 0 short, 1 medium, 2 long

    int specificity() const { return int(prev.has_value()) + int(next.has_value()) + int(length_tertile.has_value()); }
    bool is_context_free() const { return specificity() == 0; }
    bool operator==(const ContextKey&) const = default;
    auto operator<=>(const ContextKey&) const = default;
};

/// A phoneme occurrence with the context the table is keyed on.
struct PhonemeContext {
    std::string phoneme;
    PhonemeClass prev = PhonemeClass::Silence;
    PhonemeClass next = PhonemeClass::Silence;
    std::int64_t note_frames = 1;
};

inline constexpr std::array<double, 2> kDefaultTertileBounds = {60.0, 150.0};

class DurationModelTable {
public:
    struct Entry {
        std::string phoneme;
        ContextKey context;
        PhonemeDurationDistribution distribution;
    };

    DurationModelTable() = default;
    explicit DurationModelTable(int k, std::array<double, 2> tertile_bounds = kDefaultTertileBounds)
        : k_(k), tertile_bounds_(tertile_bounds) {}

    int components() const noexcept { return k_; }
    const std::array<double, 2>& tertile_bounds() const noexcept { return tertile_bounds_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    int tertile_of(std::int64_t note_frames) const {
        const auto t = static_cast<double>(note_frames);
        if (t < tertile_bounds_[0]) return 0;
        if (t < tertile_bounds_[1]) return 1;
        return 2;
    }

    /// Adds or replaces the entry for (phoneme, context).
    void set(const std::string& phoneme, const ContextKey& context, PhonemeDurationDistribution dist) {
        dist.phoneme = phoneme;
        dist.validate();
        if (static_cast<int>(dist.components.size()) > k_) k_ = static_cast<int>(dist.components.size());
        auto& slots = index_[phoneme];
        for (auto i : slots)
            if (entries_[i].context == context) {
                entries_[i].distribution = std::move(dist);
                return;
            }
        slots.push_back(entries_.size());
        entries_.push_back({phoneme, context, std::move(dist)});
    }

    const PhonemeDurationDistribution* context_free(const std::string& phoneme) const {
        auto it = index_.find(phoneme);
        if (it == index_.end()) return nullptr;
        for (auto i : it->second)
            if (entries_[i].context.is_context_free()) return &entries_[i].distribution;
        return nullptr;
    }

    /// Most specific entry whose specified keys all match; earliest entry
    /// wins among equally specific matches.
    const PhonemeDurationDistribution& lookup(const PhonemeContext& ctx) const {
        auto it = index_.find(ctx.phoneme);
        if (it == index_.end()) throw UnknownPhoneme("no duration entry for phoneme '" + ctx.phoneme + "'");
        const int tertile = tertile_of(ctx.note_frames);
        const Entry* best = nullptr;
        for (auto i : it->second) {
            const auto& e = entries_[i];
            const auto& key = e.context;
            if (key.prev && *key.prev != ctx.prev) continue;
            if (key.next && *key.next != ctx.next) continue;
            if (key.length_tertile && *key.length_tertile != tertile) continue;
            if (!best || key.specificity() > best->context.specificity()) best = &e;
        }
        if (!best) throw UnknownPhoneme("no matching duration entry for phoneme '" + ctx.phoneme + "'");
        return best->distribution;
    }

    /// Throws unless every inventory phoneme has a context-free entry.
    void validate_against(const PhonemeInventory& inventory) const {
        for (const auto& sym : inventory.symbols())
            if (!context_free(sym)) throw UnknownPhoneme("duration table lacks a fallback entry for '" + sym + "'");
    }

private:
    int k_ = 2;
    std::array<double, 2> tertile_bounds_ = kDefaultTertileBounds;
    std::vector<Entry> entries_;
    std::map<std::string, std::vector<std::size_t>> index_;
};

inline std::vector<PhonemeDurationDistribution> predict_distributions(std::span<const PhonemeContext> phonemes,
                                                                      const DurationModelTable& table) {
    std::vector<PhonemeDurationDistribution> out;
    out.reserve(phonemes.size());
    for (const auto& p : phonemes) out.push_back(table.lookup(p));
    return out;
}

/// Contexts for the phonemes of one note. `before`/`after` are the classes
/// of the neighbouring phonemes outside the note (Silence at phrase edges
/// and next to rests).
inline std::vector<PhonemeContext> make_contexts(std::span<const std::string> phonemes, std::int64_t note_frames,
                                                 const PhonemeInventory& inventory,
                                                 PhonemeClass before = PhonemeClass::Silence,
                                                 PhonemeClass after = PhonemeClass::Silence) {
    std::vector<PhonemeContext> out;
    out.reserve(phonemes.size());
    for (std::size_t i = 0; i < phonemes.size(); ++i) {
        PhonemeContext c;
        c.phoneme = phonemes[i];
        inventory.class_of(c.phoneme);
        c.prev = i == 0 ? before : inventory.class_of(phonemes[i - 1]);
        c.next = i + 1 == phonemes.size() ? after : inventory.class_of(phonemes[i + 1]);
        c.note_frames = note_frames;
        out.push_back(std::move(c));
    }
    return out;
}

/// Mean-fit baseline: each phoneme's context-free mean duration, then the
/// fitting heuristic.
inline AllocationResult allocate_mean_fit(const NoteSpan& span, const DurationModelTable& table,
                                          std::size_t primary_index, const FittingHeuristicOptions& options = {}) {
    duration_detail::check_feasible(span.total_frames, span.size());
    std::vector<double> means;
    means.reserve(span.size());
    for (const auto& d : span.distributions) {
        const auto* entry = table.context_free(d.phoneme);
        if (!entry) throw UnknownPhoneme("mean-fit table has no entry for '" + d.phoneme + "'");
        means.push_back(entry->mixture_mean());
    }
    return fit_primary_residual(means, span.total_frames, primary_index, options, AllocationMethod::MeanFit);
}

// ---------------------------------------------------------------------------
// Mixture-parameter file

namespace table_json {

using nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw FormatError(path + "/" + key + ": missing");
    return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
    if (!v.is_number()) throw FormatError(path + ": expected a number");
    return v.get<double>();
}

inline PhonemeClass phoneme_class(const json& v, const std::string& path) {
    if (!v.is_string()) throw FormatError(path + ": expected a class string");
    auto c = phoneme_class_from_string(v.get<std::string>());
    if (!c) throw FormatError(path + ": unknown class '" + v.get<std::string>() + "'");
    return *c;
}

}  // namespace table_json

inline DurationModelTable read_mixture_file(std::istream& in) {
    using table_json::json;
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("mixture file is not valid JSON: ") + e.what());
    }
    const auto frame_ms = table_json::number(table_json::require(doc, "frame_ms", ""), "/frame_ms");
    if (frame_ms != 10.0) throw FormatError("/frame_ms: only 10 ms frames are supported");
    const auto& k_node = table_json::require(doc, "K", "");
    if (!k_node.is_number_integer() || k_node.get<int>() < 1) throw FormatError("/K: expected a positive integer");
    const int k = k_node.get<int>();

    std::array<double, 2> bounds = kDefaultTertileBounds;
    if (doc.contains("tertile_bounds_frames")) {
        const auto& b = doc["tertile_bounds_frames"];
        if (!b.is_array() || b.size() != 2) throw FormatError("/tertile_bounds_frames: expected two numbers");
        bounds = {table_json::number(b[0], "/tertile_bounds_frames/0"),
                  table_json::number(b[1], "/tertile_bounds_frames/1")};
        if (!(bounds[0] <= bounds[1])) throw FormatError("/tertile_bounds_frames: bounds out of order");
    }

    DurationModelTable table(k, bounds);
    const auto& entries = table_json::require(doc, "entries", "");
    if (!entries.is_array()) throw FormatError("/entries: expected an array");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto path = "/entries/" + std::to_string(i);
        const auto& e = entries[i];
        const auto& ph = table_json::require(e, "phoneme", path);
        if (!ph.is_string()) throw FormatError(path + "/phoneme: expected a string");
        ContextKey key;
        if (e.contains("context") && !e["context"].is_null()) {
            const auto& c = e["context"];
            if (!c.is_object()) throw FormatError(path + "/context: expected an object");
            for (const auto& [name, _] : c.items())
                if (name != "prev" && name != "next" && name != "length")
                    throw FormatError(path + "/context/" + name + ": unknown key");
            if (c.contains("prev")) key.prev = table_json::phoneme_class(c["prev"], path + "/context/prev");
            if (c.contains("next")) key.next = table_json::phoneme_class(c["next"], path + "/context/next");
            if (c.contains("length")) {
                if (!c["length"].is_number_integer() || c["length"].get<int>() < 0 || c["length"].get<int>() > 2)
                    throw FormatError(path + "/context/length: expected 0, 1 or 2");
                key.length_tertile = c["length"].get<int>();
            }
        }
        const auto& comps = table_json::require(e, "components", path);
        if (!comps.is_array() || comps.empty() || static_cast<int>(comps.size()) > k)
            throw FormatError(path + "/components: expected 1..K components");
        PhonemeDurationDistribution dist{ph.get<std::string>(), {}};
        for (std::size_t j = 0; j < comps.size(); ++j) {
            const auto cp = path + "/components/" + std::to_string(j);
            MixtureComponent mc;
            mc.weight = table_json::number(table_json::require(comps[j], "weight", cp), cp + "/weight");
            mc.mean_frames = table_json::number(table_json::require(comps[j], "mean_frames", cp), cp + "/mean_frames");
            mc.std_frames = table_json::number(table_json::require(comps[j], "std_frames", cp), cp + "/std_frames");
            dist.components.push_back(mc);
        }
        try {
            table.set(dist.phoneme, key, dist);
        } catch (const InvalidDistribution& err) {
            throw FormatError(path + ": " + err.what());
        }
    }
    return table;
}

inline void write_mixture_file(std::ostream& out, const DurationModelTable& table) {
    using table_json::json;
    json doc;
    doc["frame_ms"] = 10;
    doc["K"] = table.components();
    doc["tertile_bounds_frames"] = {table.tertile_bounds()[0], table.tertile_bounds()[1]};
    json entries = json::array();
    for (const auto& e : table.entries()) {
        json j;
        j["phoneme"] = e.phoneme;
        if (!e.context.is_context_free()) {
            json c = json::object();
            if (e.context.prev) c["prev"] = std::string(to_string(*e.context.prev));
            if (e.context.next) c["next"] = std::string(to_string(*e.context.next));
            if (e.context.length_tertile) c["length"] = *e.context.length_tertile;
            j["context"] = c;
        }
        json comps = json::array();
        for (const auto& c : e.distribution.components)
            comps.push_back({{"weight", c.weight}, {"mean_frames", c.mean_frames}, {"std_frames", c.std_frames}});
        j["components"] = comps;
        entries.push_back(std::move(j));
    }
    doc["entries"] = std::move(entries);
    out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Statistical estimator

/// One observed note: its phonemes, their true frame durations, and the
/// classes of the phonemes just outside the note.
struct ObservedNote {
    std::vector<std::string> phonemes;
    std::vector<std::int64_t> durations;
    PhonemeClass before = PhonemeClass::Silence;
    PhonemeClass after = PhonemeClass::Silence;
};

struct EstimatorOptions {
    int components = 2;
    std::size_t min_bucket_samples = 30;
    double std_floor = 0.5;
    int em_iterations = 200;
};

/// 1-D Gaussian mixture by EM, initialised from equal-count quantile slices
/// of the sorted samples. Falls back to fewer components for small samples.
inline PhonemeDurationDistribution fit_gaussian_mixture(std::vector<double> samples, int components, double std_floor,
                                                        int iterations = 200) {
    if (samples.empty()) throw InvalidDistribution("cannot fit a mixture to zero samples");
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    int k = std::max(1, std::min<int>(components, static_cast<int>(n / 4)));

    std::vector<double> w(k), mu(k), sd(k);
    for (int c = 0; c < k; ++c) {
        const std::size_t lo = n * c / k;
        const std::size_t hi = n * (c + 1) / k;
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += samples[i];
        const double cnt = static_cast<double>(hi - lo);
        const double m = s / cnt;
        for (std::size_t i = lo; i < hi; ++i) s2 += (samples[i] - m) * (samples[i] - m);
        w[c] = cnt / static_cast<double>(n);
        mu[c] = m;
        sd[c] = std::max(std_floor, std::sqrt(s2 / cnt));
    }

    std::vector<double> resp(n * k);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < iterations && k > 1; ++it) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double peak = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                resp[i * k + c] = std::log(w[c]) + gaussian_log_pdf(samples[i], mu[c], sd[c]);
                peak = std::max(peak, resp[i * k + c]);
            }
            double acc = 0.0;
            for (int c = 0; c < k; ++c) acc += std::exp(resp[i * k + c] - peak);
            const double lse = peak + std::log(acc);
            ll += lse;
            for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(resp[i * k + c] - lse);
        }
        for (int c = 0; c < k; ++c) {
            double nk = 0.0, s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i * k + c];
                s += resp[i * k + c] * samples[i];
            }
            if (nk < 1e-9) continue;
            const double m = s / nk;
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += resp[i * k + c] * (samples[i] - m) * (samples[i] - m);
            w[c] = nk / static_cast<double>(n);
            mu[c] = m;
            sd[c] = std::max(std_floor, std::sqrt(v / nk));
        }
        if (std::abs(ll - prev_ll) < 1e-9 * std::max(1.0, std::abs(ll))) break;
        prev_ll = ll;
    }

    PhonemeDurationDistribution dist;
    double wsum = 0.0;
    for (int c = 0; c < k; ++c)
        if (w[c] > 0.0) wsum += w[c];
    for (int c = 0; c < k; ++c)
        if (w[c] > 0.0) dist.components.push_back({w[c] / wsum, std::max(mu[c], 1e-6), sd[c]});
    return dist;
}

/// Builds a table from observed notes: a context-free entry for every
/// inventory phoneme (class-pooled when the phoneme was never observed) and a
/// full-context entry for every bucket with enough samples. Tertile bounds
/// are the 1/3 and 2/3 quantiles of the observed note lengths.
inline DurationModelTable estimate_table(std::span<const ObservedNote> notes, const PhonemeInventory& inventory,
                                         const EstimatorOptions& options = {}) {
    std::vector<double> lengths;
    for (const auto& n : notes) {
        if (n.phonemes.size() != n.durations.size()) throw LengthMismatch("observed note: phoneme/duration count differ");
        std::int64_t t = 0;
        for (auto d : n.durations) t += d;
        lengths.push_back(static_cast<double>(t));
    }
    if (lengths.empty()) throw InvalidDistribution("cannot estimate a duration table from zero notes");
    std::sort(lengths.begin(), lengths.end());
    const auto quantile = [&](double q) { return lengths[std::min(lengths.size() - 1, std::size_t(q * lengths.size()))]; };

    DurationModelTable table(options.components, {quantile(1.0 / 3.0), quantile(2.0 / 3.0)});

    std::map<std::string, std::vector<double>> free_samples;
    std::map<std::pair<std::string, ContextKey>, std::vector<double>> bucket_samples;
    std::map<PhonemeClass, std::vector<double>> class_samples;
    for (const auto& n : notes) {
        std::int64_t t = 0;
        for (auto d : n.durations) t += d;
        auto ctx = make_contexts(n.phonemes, t, inventory, n.before, n.after);
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            const double d = static_cast<double>(n.durations[i]);
            free_samples[ctx[i].phoneme].push_back(d);
            class_samples[inventory.class_of(ctx[i].phoneme)].push_back(d);
            ContextKey key{ctx[i].prev, ctx[i].next, table.tertile_of(t)};
            bucket_samples[{ctx[i].phoneme, key}].push_back(d);
        }
    }

    for (const auto& [sym, cls] : inventory.classes()) {
        auto it = free_samples.find(sym);
        std::vector<double> pool;
        if (it != free_samples.end()) {
            pool = it->second;
        } else if (auto ct = class_samples.find(cls); ct != class_samples.end()) {
            pool = ct->second;
        } else {
            for (const auto& [_, v] : class_samples) pool.insert(pool.end(), v.begin(), v.end());
        }
        table.set(sym, {}, fit_gaussian_mixture(pool, options.components, options.std_floor, options.em_iterations));
    }
    for (const auto& [key, samples] : bucket_samples) {
        if (samples.size() < options.min_bucket_samples) continue;
        table.set(key.first, key.second,
                  fit_gaussian_mixture(samples, options.components, options.std_floor, options.em_iterations));
    }
    return table;
}

}  // namespace opera
