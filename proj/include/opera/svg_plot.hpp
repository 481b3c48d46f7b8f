#pragma once

// SVG overlay of an f0 contour (solid) and transcribed note steps (dashed),
// drawn on a MIDI-pitch axis. Output is byte-deterministic.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>

#include "opera/note_transcriber.hpp"
#include "opera/pitch.hpp"
#include "opera/pitch_tracker.hpp"

namespace opera {

struct SvgPlotOptions {
    int width = 960;
    int height = 360;
    int margin = 40;
};

inline void write_f0_svg(std::ostream& out, const PitchTrack& track,
                         std::optional<std::span<const TranscribedNote>> notes = std::nullopt,
                         const SvgPlotOptions& opt = {}) {
    double lo = 1e9, hi = -1e9;
    for (const auto& f : track.frames)
        if (f.voiced) {
            const double m = hz_to_midi(f.f0_hz);
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    if (notes)
        for (const auto& n : *notes) {
            lo = std::min<double>(lo, n.midi_pitch);
            hi = std::max<double>(hi, n.midi_pitch);
        }
    if (lo > hi) {
        lo = 55.0;
        hi = 75.0;
    }
    lo = std::floor(lo) - 2.0;
    hi = std::ceil(hi) + 2.0;

    std::size_t frames = track.frames.size();
    if (notes)
        for (const auto& n : *notes) frames = std::max<std::size_t>(frames, static_cast<std::size_t>(n.end_frame));
    frames = std::max<std::size_t>(frames, 1);

    const double plot_w = opt.width - 2.0 * opt.margin;
    const double plot_h = opt.height - 2.0 * opt.margin;
    const auto x_of = [&](double frame) { return opt.margin + plot_w * frame / static_cast<double>(frames); };
    const auto y_of = [&](double midi) { return opt.margin + plot_h * (hi - midi) / (hi - lo); };

    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                  opt.width, opt.height, opt.width, opt.height);
    out << buf;
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<g id=\"axes\" stroke=\"#444\" stroke-width=\"1\"><line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\"/>"
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\"/></g>\n",
                  opt.margin, opt.height - opt.margin, opt.width - opt.margin, opt.height - opt.margin, opt.margin,
                  opt.margin, opt.margin, opt.height - opt.margin);
    out << buf;
    out << "<g id=\"labels\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">\n";
    for (int m = static_cast<int>(lo); m <= static_cast<int>(hi); m += 2) {
        std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%.2f\" text-anchor=\"end\">%d</text>\n", opt.margin - 4,
                      y_of(m) + 4.0, m);
        out << buf;
    }
    const double seconds = static_cast<double>(frames) * kFrameSeconds;
    const double tick = seconds > 20 ? 5.0 : (seconds > 5 ? 1.0 : 0.5);
    for (double s = 0.0; s <= seconds + 1e-9; s += tick) {
        std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"%d\" text-anchor=\"middle\">%.1f</text>\n",
                      x_of(s / kFrameSeconds), opt.height - opt.margin + 14, s);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">time (s)</text>\n", opt.width / 2,
                  opt.height - 6);
    out << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"12\" y=\"%d\" transform=\"rotate(-90 12 %d)\" text-anchor=\"middle\">MIDI pitch</text>\n",
                  opt.height / 2, opt.height / 2);
    out << buf << "</g>\n";

    out << "<g id=\"f0\" fill=\"none\" stroke=\"#ff7f0e\" stroke-width=\"1.5\">\n";
    bool open = false;
    for (std::size_t i = 0; i < track.frames.size(); ++i) {
        const auto& f = track.frames[i];
        if (!f.voiced) {
            if (open) out << "\"/>\n";
            open = false;
            continue;
        }
        if (!open) out << "<polyline points=\"";
        std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", open ? " " : "", x_of(static_cast<double>(i)), y_of(hz_to_midi(f.f0_hz)));
        out << buf;
        open = true;
    }
    if (open) out << "\"/>\n";
    out << "</g>\n";

    if (notes) {
        out << "<g id=\"notes\" stroke=\"#1f77b4\" stroke-width=\"2\" stroke-dasharray=\"4 3\">\n";
        for (const auto& n : *notes) {
            std::snprintf(buf, sizeof buf, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\"/>\n",
                          x_of(static_cast<double>(n.start_frame)), y_of(n.midi_pitch),
                          x_of(static_cast<double>(n.end_frame)), y_of(n.midi_pitch));
            out << buf;
        }
        out << "</g>\n";
    }
    out << "</svg>\n";
}

}  // namespace opera
