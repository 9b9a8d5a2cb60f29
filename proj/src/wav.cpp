#include "gramsec/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gramsec/error.hpp"

namespace gramsec {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>(v >> 8));
}
void put32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

AudioSegment read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    const auto fail = [&](const std::string& why) -> FormatError {
        return FormatError(path.string() + ": " + why);
    };

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw fail("not a RIFF/WAVE file");
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t size = u32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw fail("fmt chunk too short");
            format = u16(chunk + 8);
            channels = u16(chunk + 10);
            rate = u32(chunk + 12);
            bits = u16(chunk + 22);
            if (format == kFormatExtensible) {
                if (avail < 26) throw fail("extensible fmt chunk too short");
                format = u16(chunk + 8 + 24);
            }
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = avail;
        }
        pos = body + size + (size & 1u);
    }

    if (channels == 0 || rate == 0) throw fail("missing or invalid fmt chunk");
    if (!data) throw fail("missing data chunk");

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool float32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !float32) {
        throw fail("unsupported encoding (format " + std::to_string(format) + ", " +
                   std::to_string(bits) + " bits); need 16-bit PCM or 32-bit float");
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = data_size / frame_bytes;

    AudioSegment audio;
    audio.sample_rate = rate;
    audio.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const unsigned char* p = data + f * frame_bytes + ch * bytes_per_sample;
            if (pcm16) {
                acc += static_cast<std::int16_t>(u16(p)) / 32768.0;
            } else {
                const float v = std::bit_cast<float>(u32(p));
                if (!std::isfinite(v)) throw NonFiniteError(path.string() + ": non-finite sample");
                acc += v;
            }
        }
        audio.samples[f] = acc / channels;
    }
    return audio;
}

void write_wav_pcm16(const AudioSegment& audio, const std::filesystem::path& path) {
    if (audio.sample_rate <= 0.0) throw ContractError("write_wav_pcm16: sample rate must be > 0");
    const auto n = static_cast<std::uint32_t>(audio.samples.size());
    std::string b;
    b.append("RIFF");
    put32(b, 36 + 2 * n);
    b.append("WAVEfmt ");
    put32(b, 16);
    put16(b, kFormatPcm);
    put16(b, 1);
    const auto rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate));
    put32(b, rate);
    put32(b, rate * 2);
    put16(b, 2);
    put16(b, 16);
    b.append("data");
    put32(b, 2 * n);
    for (double s : audio.samples) {
        const double clipped = std::clamp(s, -1.0, 1.0);
        const auto q = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
        put16(b, static_cast<std::uint16_t>(q));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("failed to write " + path.string());
}

}  // namespace gramsec
