// opera_frontend: score parsing, duration prediction, transcription,
// plotting and benchmarking.
//
// Exit codes: 0 success, 2 usage or input error, 3 internal invariant
// violation.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "opera/opera.hpp"

#ifndef OPERA_DATA_DIR
#define OPERA_DATA_DIR "data"
#endif

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

// TOML run config whose keys use underscores where flags use dashes.
class RunConfigFormat : public CLI::ConfigTOML {
public:
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        auto items = CLI::ConfigTOML::from_config(input);
        for (auto& item : items) {
            std::replace(item.name.begin(), item.name.end(), '_', '-');
            for (auto& p : item.parents) std::replace(p.begin(), p.end(), '_', '-');
        }
        return items;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw opera::Error("cannot open '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw opera::Error("cannot open '" + path + "'");
    return in;
}

// Writes the whole payload at once; "-" means standard output.
void write_output(const std::string& path, const std::string& payload) {
    if (path == "-") {
        std::cout << payload << std::flush;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw opera::Error("cannot write '" + path + "'");
    out << payload;
    if (!out) throw opera::Error("write failed for '" + path + "'");
}

opera::PhonemeInventory load_inventory(const std::string& path) {
    if (path.empty()) return opera::default_inventory();
    auto in = open_input(path);
    return opera::read_inventory(in);
}

opera::AudioBuffer load_wav(const std::string& path) {
    auto in = open_input(path);
    return opera::read_wav(in);
}

// ---------------------------------------------------------------------------
// parse-score

struct ParseScoreArgs {
    std::string score;
    std::string lexicon = std::string(OPERA_DATA_DIR) + "/lexicon.txt";
    std::string inventory;
    std::string out = "-";
};

void cmd_parse_score(const ParseScoreArgs& a) {
    const auto inventory = load_inventory(a.inventory);
    auto lex_in = open_input(a.lexicon);
    const auto lexicon = opera::read_lexicon(lex_in, inventory);
    const auto score = opera::parse_musicxml(read_file(a.score), fs::path(a.score).filename().string());

    json notes = json::array();
    std::vector<std::string> warnings = score.warnings;
    for (const auto& n : score.notes) {
        json phonemes = json::array();
        if (!n.is_rest()) {
            if (n.syllable) {
                for (const auto& p : opera::syllable_to_phonemes(*n.syllable, lexicon)) phonemes.push_back(p);
            } else {
                warnings.push_back("note " + std::to_string(n.note_index) + " has no lyric; no phonemes assigned");
            }
        }
        notes.push_back({{"index", n.note_index},
                         {"midi", n.midi_pitch},
                         {"duration_s", n.duration_s},
                         {"duration_frames", n.duration_frames},
                         {"syllable", n.syllable ? json(*n.syllable) : json(nullptr)},
                         {"phonemes", std::move(phonemes)}});
    }
    json doc = {{"source_id", score.source_id}, {"tempo_bpm", score.tempo_bpm}, {"frame_ms", 10},
                {"warnings", warnings},         {"notes", std::move(notes)}};
    write_output(a.out, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// predict-duration

struct PredictArgs {
    std::string score_json;
    std::string model = std::string(OPERA_DATA_DIR) + "/default_model.json";
    std::string method = "lagrange";
    std::size_t primary_index = 1;
    std::string inventory;
    std::string out = "-";
};

struct ScoreNote {
    int index = 0;
    std::int64_t frames = 0;
    std::vector<std::string> phonemes;
};

std::vector<ScoreNote> read_score_json(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw opera::FormatError("score JSON is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("notes") || !doc["notes"].is_array())
        throw opera::FormatError("/notes: expected an array");
    std::vector<ScoreNote> out;
    for (std::size_t i = 0; i < doc["notes"].size(); ++i) {
        const auto& n = doc["notes"][i];
        const auto p = "/notes/" + std::to_string(i);
        if (!n.is_object()) throw opera::FormatError(p + ": expected an object");
        if (!n.contains("duration_frames") || !n["duration_frames"].is_number_integer() ||
            n["duration_frames"].get<std::int64_t>() < 1)
            throw opera::FormatError(p + "/duration_frames: expected a positive integer");
        ScoreNote s;
        s.index = n.contains("index") && n["index"].is_number_integer() ? n["index"].get<int>() : static_cast<int>(i);
        s.frames = n["duration_frames"].get<std::int64_t>();
        if (n.contains("phonemes")) {
            if (!n["phonemes"].is_array()) throw opera::FormatError(p + "/phonemes: expected an array");
            for (std::size_t j = 0; j < n["phonemes"].size(); ++j) {
                if (!n["phonemes"][j].is_string())
                    throw opera::FormatError(p + "/phonemes/" + std::to_string(j) + ": expected a string");
                s.phonemes.push_back(n["phonemes"][j].get<std::string>());
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

void cmd_predict_duration(const PredictArgs& a) {
    const auto inventory = load_inventory(a.inventory);
    auto model_in = open_input(a.model);
    const auto table = opera::read_mixture_file(model_in);
    const auto notes = read_score_json(a.score_json);

    std::ostringstream csv;
    csv << "note_index,phoneme_index,phoneme,note_frames,duration_frames\n";
    for (std::size_t k = 0; k < notes.size(); ++k) {
        const auto& n = notes[k];
        if (n.phonemes.empty()) continue;
        for (const auto& p : n.phonemes)
            if (!inventory.contains(p)) throw opera::UnknownPhoneme("phoneme not in inventory: '" + p + "'");
        // Neighbouring phonemes across note boundaries; rests and lyric-less
        // notes count as silence.
        auto before = opera::PhonemeClass::Silence, after = opera::PhonemeClass::Silence;
        if (k > 0 && !notes[k - 1].phonemes.empty()) before = inventory.class_of(notes[k - 1].phonemes.back());
        if (k + 1 < notes.size() && !notes[k + 1].phonemes.empty())
            after = inventory.class_of(notes[k + 1].phonemes.front());

        opera::NoteSpan span;
        span.total_frames = n.frames;
        span.distributions =
            opera::predict_distributions(opera::make_contexts(n.phonemes, n.frames, inventory, before, after), table);
        const std::size_t primary = std::min(a.primary_index, n.phonemes.size() - 1);
        opera::AllocationResult r;
        if (a.method == "lagrange")
            r = opera::allocate_lagrange(span);
        else if (a.method == "heuristic")
            r = opera::allocate_fitting_heuristic(span, primary);
        else
            r = opera::allocate_mean_fit(span, table, primary);

        std::int64_t sum = 0;
        for (std::size_t i = 0; i < n.phonemes.size(); ++i) {
            csv << n.index << ',' << i << ',' << n.phonemes[i] << ',' << n.frames << ',' << r.durations_frames[i] << '\n';
            sum += r.durations_frames[i];
        }
        if (sum != n.frames)
            throw opera::InvariantViolation("note " + std::to_string(n.index) + ": durations sum to " +
                                            std::to_string(sum) + ", expected " + std::to_string(n.frames));
    }
    write_output(a.out, csv.str());
}

// ---------------------------------------------------------------------------
// transcribe

struct TranscribeArgs {
    std::string wav;
    std::string out = "-";
    std::string csv;
    std::string pitch_csv;
    std::string transitions;
};

void cmd_transcribe(const TranscribeArgs& a) {
    opera::NoteHmmConfig config;
    if (!a.transitions.empty()) {
        auto in = open_input(a.transitions);
        config.transition_distribution = opera::read_transition_histogram(in);
    }
    const auto audio = load_wav(a.wav);
    const auto track = opera::track_pitch(audio);
    const auto score = opera::transcribe(track, config);

    std::ostringstream js;
    opera::write_pseudo_score_json(js, score);
    write_output(a.out, js.str());
    if (!a.csv.empty()) {
        std::ostringstream s;
        opera::write_pseudo_score_csv(s, score);
        write_output(a.csv, s.str());
    }
    if (!a.pitch_csv.empty()) {
        std::ostringstream s;
        opera::write_pitch_csv(s, track);
        write_output(a.pitch_csv, s.str());
    }
}

// ---------------------------------------------------------------------------
// plot-f0

struct PlotArgs {
    std::string wav;
    std::string pseudo_score;
    std::string out;
    int width = 960;
    int height = 360;
};

void cmd_plot_f0(const PlotArgs& a) {
    std::optional<std::vector<opera::TranscribedNote>> notes;
    if (!a.pseudo_score.empty()) {
        auto in = open_input(a.pseudo_score);
        notes = opera::read_pseudo_score_json(in);
    }
    const auto track = opera::track_pitch(load_wav(a.wav));
    if (track.frames.empty()) throw opera::EmptyTrack("audio is shorter than one 10 ms frame");
    opera::SvgPlotOptions opt;
    opt.width = a.width;
    opt.height = a.height;
    std::ostringstream svg;
    if (notes)
        opera::write_f0_svg(svg, track, std::span<const opera::TranscribedNote>(*notes), opt);
    else
        opera::write_f0_svg(svg, track, std::nullopt, opt);
    write_output(a.out, svg.str());
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::uint64_t seed = 42;
    std::string config;
    std::string out = "-";
    std::string table;
    std::string csv;
    std::string model_out;
};

void cmd_evaluate(const EvaluateArgs& a) {
    opera::BenchmarkConfig config;
    if (!a.config.empty()) {
        auto in = open_input(a.config);
        config = opera::read_benchmark_config(in);
    }
    const auto result = opera::run_duration_benchmark(a.seed, config);
    if (result.report.constraint_violations != 0)
        throw opera::InvariantViolation(std::to_string(result.report.constraint_violations) +
                                        " allocations do not sum to their note length");
    write_output(a.out, opera::report_to_json(result.report).dump(2) + "\n");
    if (!a.table.empty()) {
        std::ostringstream s;
        opera::write_report_table(s, result.report);
        write_output(a.table, s.str());
    }
    if (!a.csv.empty()) {
        std::ostringstream s;
        opera::write_note_errors_csv(s, result.report);
        write_output(a.csv, s.str());
    }
    if (!a.model_out.empty()) {
        std::ostringstream s;
        opera::write_mixture_file(s, result.table);
        write_output(a.model_out, s.str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Singing-voice front end: scores, durations, pitch and notes"};
    app.require_subcommand(1);
    app.fallthrough();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.config_formatter(std::make_shared<RunConfigFormat>());
    app.set_config("--run-config", "", "TOML run config; its sections are subcommand names")
        ->envname("OPERA_FRONTEND_CONFIG");

    ParseScoreArgs parse_args;
    auto* parse = app.add_subcommand("parse-score", "MusicXML + lexicon -> note/phoneme JSON");
    parse->add_option("--score", parse_args.score, "MusicXML file")->required();
    parse->add_option("--lexicon", parse_args.lexicon, "lexicon file (syllable<TAB>phonemes)")->capture_default_str();
    parse->add_option("--inventory", parse_args.inventory, "phoneme inventory file; built-in set if omitted");
    parse->add_option("--out", parse_args.out, "output JSON, - for stdout")->capture_default_str();

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict-duration", "note/phoneme JSON -> per-phoneme durations CSV");
    predict->add_option("--score-json", predict_args.score_json, "output of parse-score")->required();
    predict->add_option("--model", predict_args.model, "mixture-parameter JSON")->capture_default_str();
    predict->add_option("--method", predict_args.method, "allocator")
        ->check(CLI::IsMember({"lagrange", "heuristic", "meanfit"}))
        ->capture_default_str();
    predict->add_option("--primary-index", predict_args.primary_index, "primary phoneme for heuristic/meanfit")
        ->capture_default_str();
    predict->add_option("--inventory", predict_args.inventory, "phoneme inventory file; built-in set if omitted");
    predict->add_option("--out", predict_args.out, "output CSV, - for stdout")->capture_default_str();

    TranscribeArgs transcribe_args;
    auto* transcribe = app.add_subcommand("transcribe", "WAV -> pseudo-score");
    transcribe->add_option("--wav", transcribe_args.wav, "mono WAV at 16000, 22050 or 44100 Hz")->required();
    transcribe->add_option("--out", transcribe_args.out, "pseudo-score JSON, - for stdout")->capture_default_str();
    transcribe->add_option("--csv", transcribe_args.csv, "per-frame MIDI pitch CSV");
    transcribe->add_option("--pitch-csv", transcribe_args.pitch_csv, "per-frame f0 CSV");
    transcribe->add_option("--transitions", transcribe_args.transitions, "note interval histogram JSON");

    PlotArgs plot_args;
    auto* plot = app.add_subcommand("plot-f0", "WAV [+ pseudo-score] -> SVG");
    plot->add_option("--wav", plot_args.wav, "mono WAV")->required();
    plot->add_option("--pseudo-score", plot_args.pseudo_score, "pseudo-score JSON from transcribe");
    plot->add_option("--out", plot_args.out, "output SVG, - for stdout")->required();
    plot->add_option("--width", plot_args.width, "pixels")->check(CLI::Range(200, 10000))->capture_default_str();
    plot->add_option("--height", plot_args.height, "pixels")->check(CLI::Range(100, 10000))->capture_default_str();

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "synthetic duration benchmark");
    evaluate->add_option("--seed", eval_args.seed, "RNG seed")->capture_default_str();
    evaluate->add_option("--config", eval_args.config, "benchmark config JSON");
    evaluate->add_option("--out", eval_args.out, "report JSON, - for stdout")->capture_default_str();
    evaluate->add_option("--table", eval_args.table, "aligned text table");
    evaluate->add_option("--csv", eval_args.csv, "per-note errors CSV");
    evaluate->add_option("--model-out", eval_args.model_out, "write the estimated mixture table");

    // CLI11 silently skips a missing config file named by the environment.
    if (const char* env = std::getenv("OPERA_FRONTEND_CONFIG"); env && *env && !fs::exists(env)) {
        std::cerr << "error: OPERA_FRONTEND_CONFIG names a missing file: " << env << '\n';
        return kExitInput;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    } catch (const opera::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }

    try {
        if (parse->parsed()) cmd_parse_score(parse_args);
        if (predict->parsed()) cmd_predict_duration(predict_args);
        if (transcribe->parsed()) cmd_transcribe(transcribe_args);
        if (plot->parsed()) cmd_plot_f0(plot_args);
        if (evaluate->parsed()) cmd_evaluate(eval_args);
    } catch (const opera::InvariantViolation& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    } catch (const opera::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return 0;
}
