#include "gramsec/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "gramsec/error.hpp"

namespace gramsec {

namespace {

constexpr int kResampleTaps = 32;
constexpr double kResampleHalfWidth = kResampleTaps / 2.0;

double sinc(double x) noexcept {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

}  // namespace

AudioSegment resample(const AudioSegment& audio, double target_rate) {
    if (audio.samples.empty()) throw ContractError("resample: empty input");
    if (!(audio.sample_rate > 0.0)) throw ContractError("resample: input sample rate must be > 0");
    if (!(target_rate > 0.0)) throw ContractError("resample: target rate must be > 0");
    if (audio.sample_rate == target_rate) return audio;

    const double ratio = target_rate / audio.sample_rate;
    // Lowpass at the lower of the two Nyquist frequencies, in input-sample units.
    const double cutoff = std::min(1.0, ratio);
    const auto len = static_cast<std::int64_t>(audio.samples.size());
    const auto out_len = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(len) * ratio));

    AudioSegment out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(out_len));

    for (std::int64_t j = 0; j < out_len; ++j) {
        const double x = static_cast<double>(j) / ratio;
        const auto base = static_cast<std::int64_t>(std::floor(x));
        double acc = 0.0;
        double weight_sum = 0.0;
        for (int t = -kResampleTaps / 2 + 1; t <= kResampleTaps / 2; ++t) {
            const std::int64_t i = base + t;
            if (i < 0 || i >= len) continue;
            const double d = x - static_cast<double>(i);
            const double taper = 0.5 * (1.0 + std::cos(std::numbers::pi * d / kResampleHalfWidth));
            const double w = cutoff * sinc(cutoff * d) * taper;
            acc += w * audio.samples[static_cast<std::size_t>(i)];
            weight_sum += w;
        }
        out.samples[static_cast<std::size_t>(j)] = weight_sum != 0.0 ? acc / weight_sum : 0.0;
    }
    return out;
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                    static_cast<double>(n));
    }
    return w;
}

void fft(std::span<std::complex<double>> a) {
    const std::size_t n = a.size();
    if (n == 0 || !std::has_single_bit(n)) {
        throw ContractError("fft: size " + std::to_string(n) + " is not a power of two");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                // Twiddles computed directly rather than by recurrence to avoid drift.
                const std::complex<double> w(std::cos(angle * static_cast<double>(k)),
                                             std::sin(angle * static_cast<double>(k)));
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

std::size_t window_samples(const StftParams& p, double sample_rate) {
    return static_cast<std::size_t>(std::llround(p.window_ms * sample_rate / 1000.0));
}

std::size_t hop_samples(const StftParams& p, double sample_rate) {
    return static_cast<std::size_t>(std::llround(p.hop_ms * sample_rate / 1000.0));
}

std::size_t stft_frame_count(std::size_t num_samples, std::size_t window, std::size_t hop) {
    if (num_samples < window) return 0;
    return (num_samples - window) / hop + 1;
}

Matrix stft_power(const AudioSegment& audio, const StftParams& params) {
    if (!(audio.sample_rate > 0.0)) throw ContractError("stft_power: sample rate must be > 0");
    const std::size_t window = window_samples(params, audio.sample_rate);
    const std::size_t hop = hop_samples(params, audio.sample_rate);
    if (window == 0 || hop == 0) throw ContractError("stft_power: window and hop must be >= 1 sample");
    if (window > params.fft_size) {
        throw ContractError("stft_power: window of " + std::to_string(window) +
                            " samples exceeds fft size " + std::to_string(params.fft_size));
    }
    const std::size_t frames = stft_frame_count(audio.samples.size(), window, hop);
    if (frames == 0) {
        throw ContractError("stft_power: audio of " + std::to_string(audio.samples.size()) +
                            " samples is shorter than one " + std::to_string(window) +
                            "-sample window");
    }

    const auto taper = hann_window(window);
    const std::size_t bins = params.fft_size / 2 + 1;
    Matrix power(bins, frames);
    std::vector<std::complex<double>> buf(params.fft_size);
    for (std::size_t f = 0; f < frames; ++f) {
        std::fill(buf.begin(), buf.end(), std::complex<double>{});
        const std::size_t start = f * hop;
        for (std::size_t i = 0; i < window; ++i) buf[i] = audio.samples[start + i] * taper[i];
        fft(buf);
        for (std::size_t k = 0; k < bins; ++k) power(k, f) = std::norm(buf[k]);
    }
    return power;
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const MelParams& p, std::size_t fft_size, double sample_rate) {
    if (p.num_bands == 0) throw ContractError("mel_filterbank: num_bands must be >= 1");
    if (!(p.fmax > p.fmin) || p.fmin < 0.0) {
        throw ContractError("mel_filterbank: need 0 <= fmin < fmax");
    }
    const std::size_t bins = fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(p.fmin);
    const double mel_hi = hz_to_mel(p.fmax);

    // num_bands + 2 edge points; filter b spans edges b, b+1, b+2.
    std::vector<double> edges(p.num_bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(p.num_bands + 1));
    }

    Matrix fb(p.num_bands, bins);
    for (std::size_t b = 0; b < p.num_bands; ++b) {
        const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
            if (f <= left || f >= right) continue;
            fb(b, k) = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
        }
    }
    return fb;
}

MelSpectrogram mel_project(const Matrix& power, const MelParams& params, double sample_rate) {
    if (power.rows() < 2 || power.cols() == 0) {
        throw ContractError("mel_project: power matrix needs >= 2 bins and >= 1 frame");
    }
    for (std::size_t k = 0; k < power.rows(); ++k) {
        for (std::size_t f = 0; f < power.cols(); ++f) {
            const double v = power(k, f);
            if (!std::isfinite(v) || v < 0.0) {
                throw ContractError("mel_project: power(" + std::to_string(k) + ", " +
                                    std::to_string(f) + ") is negative or non-finite");
            }
        }
    }
    const std::size_t fft_size = 2 * (power.rows() - 1);
    const Matrix fb = mel_filterbank(params, fft_size, sample_rate);

    MelSpectrogram out{Matrix(params.num_bands, power.cols())};
    for (std::size_t b = 0; b < params.num_bands; ++b) {
        const auto weights = fb.row(b);
        for (std::size_t f = 0; f < power.cols(); ++f) {
            double acc = 0.0;
            for (std::size_t k = 0; k < weights.size(); ++k) {
                if (weights[k] != 0.0) acc += weights[k] * power(k, f);
            }
            out.values(b, f) = std::log(acc + params.log_floor);
        }
    }
    return out;
}

MelSpectrogram log_mel_spectrogram(const AudioSegment& audio) {
    const AudioSegment at_rate = resample(audio, kFrontendSampleRate);
    return mel_project(stft_power(at_rate), MelParams{}, kFrontendSampleRate);
}

SampleActivations to_activations(const MelSpectrogram& spec, std::string sample_id) {
    ActivationRecord r;
    r.layer_id = 0;
    r.channels = 1;
    r.height = static_cast<std::uint32_t>(spec.bands());
    r.width = static_cast<std::uint32_t>(spec.frames());
    r.values.reserve(spec.values.data().size());
    for (double v : spec.values.data()) r.values.push_back(static_cast<float>(v));
    return {std::move(sample_id), {std::move(r)}};
}

MelSpectrogram spectrogram_from(const SampleActivations& sample) {
    if (sample.records.size() != 1 || sample.records[0].channels != 1) {
        throw ShapeError("spectrogram file must hold exactly one single-channel layer");
    }
    const auto& r = sample.records[0];
    MelSpectrogram spec{Matrix(r.height, r.width)};
    auto dst = spec.values.data();
    std::copy(r.values.begin(), r.values.end(), dst.begin());
    return spec;
}

}  // namespace gramsec
