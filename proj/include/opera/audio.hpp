#pragma once

// Mono audio buffers and WAV (PCM 16-bit / IEEE float 32) I/O.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "opera/error.hpp"

namespace opera {

struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate_hz = 44100;

    double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
};

inline bool is_supported_sample_rate(int rate) { return rate == 16000 || rate == 22050 || rate == 44100; }

inline void validate(const AudioBuffer& audio) {
    if (!is_supported_sample_rate(audio.sample_rate_hz))
        throw FormatError("unsupported sample rate " + std::to_string(audio.sample_rate_hz) +
                          " Hz (expected 16000, 22050 or 44100)");
}

namespace wav_detail {

inline std::uint32_t u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF), char((v >> 24) & 0xFF)};
    out.write(b, 4);
}
inline void put_u16(std::ostream& out, std::uint16_t v) {
    const char b[2] = {char(v & 0xFF), char((v >> 8) & 0xFF)};
    out.write(b, 2);
}

}  // namespace wav_detail

inline AudioBuffer read_wav(std::istream& in) {
    using namespace wav_detail;
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw FormatError("not a RIFF/WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::size_t size = u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min(size, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw FormatError("truncated fmt chunk");
            format = u16(chunk + 8);
            channels = u16(chunk + 10);
            rate = u32(chunk + 12);
            bits = u16(chunk + 22);
            if (format == 0xFFFE && avail >= 26) format = u16(chunk + 8 + 24);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = bytes.data() + body;
            data_size = avail;
        }
        pos = body + size + (size & 1);
    }
    if (!have_fmt) throw FormatError("WAV file has no fmt chunk");
    if (!data) throw FormatError("WAV file has no data chunk");
    if (channels != 1) throw FormatError("only mono WAV files are supported");

    AudioBuffer audio;
    audio.sample_rate_hz = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        const std::size_t n = data_size / 2;
        audio.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            audio.samples[i] = static_cast<std::int16_t>(u16(data + 2 * i)) / 32768.0;
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data_size / 4;
        audio.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t raw = u32(data + 4 * i);
            float f;
            std::memcpy(&f, &raw, sizeof f);
            audio.samples[i] = f;
        }
    } else {
        throw FormatError("unsupported WAV encoding (need 16-bit PCM or 32-bit float)");
    }
    validate(audio);
    return audio;
}

enum class WavEncoding { Pcm16, Float32 };

inline void write_wav(std::ostream& out, const AudioBuffer& audio, WavEncoding encoding = WavEncoding::Pcm16) {
    using namespace wav_detail;
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint32_t bytes_per_sample = bits / 8;
    const auto data_size = static_cast<std::uint32_t>(audio.samples.size() * bytes_per_sample);
    out.write("RIFF", 4);
    put_u32(out, 36 + data_size);
    out.write("WAVEfmt ", 8);
    put_u32(out, 16);
    put_u16(out, encoding == WavEncoding::Pcm16 ? 1 : 3);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz));
    put_u32(out, static_cast<std::uint32_t>(audio.sample_rate_hz) * bytes_per_sample);
    put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
    put_u16(out, bits);
    out.write("data", 4);
    put_u32(out, data_size);
    for (double s : audio.samples) {
        const double c = std::clamp(s, -1.0, 1.0);
        if (encoding == WavEncoding::Pcm16) {
            const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
            put_u16(out, static_cast<std::uint16_t>(v));
        } else {
            const float f = static_cast<float>(c);
            std::uint32_t raw;
            std::memcpy(&raw, &f, sizeof raw);
            put_u32(out, raw);
        }
    }
}

}  // namespace opera
