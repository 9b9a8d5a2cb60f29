#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "gramsec/interchange.hpp"
#include "gramsec/matrix.hpp"

namespace gramsec {

inline constexpr double kFrontendSampleRate = 16000.0;
inline constexpr std::size_t kMelBands = 128;

struct AudioSegment {
    std::vector<double> samples;
    double sample_rate = 0.0;
};

struct StftParams {
    std::size_t fft_size = 1024;
    double window_ms = 40.0;
    double hop_ms = 20.0;
};

struct MelParams {
    std::size_t num_bands = kMelBands;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-10;
};

// bands x frames matrix of log mel energies.
struct MelSpectrogram {
    Matrix values;

    std::size_t bands() const noexcept { return values.rows(); }
    std::size_t frames() const noexcept { return values.cols(); }
};

// Windowed-sinc resampler (32 taps per output phase, Hann-tapered). Taps
// falling outside the signal are dropped and the remaining weights
// renormalized to unit DC gain.
AudioSegment resample(const AudioSegment& audio, double target_rate);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// In-place radix-2 FFT; size must be a power of two.
void fft(std::span<std::complex<double>> data);

// (fft_size/2 + 1) x frames power spectrogram of Hann-windowed frames,
// each zero-padded to fft_size.
Matrix stft_power(const AudioSegment& audio, const StftParams& params = {});

// Window and hop in samples for a given rate.
std::size_t window_samples(const StftParams& params, double sample_rate);
std::size_t hop_samples(const StftParams& params, double sample_rate);
std::size_t stft_frame_count(std::size_t num_samples, std::size_t window, std::size_t hop);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

// num_bands x (fft_size/2 + 1) unit-peak triangular filters.
Matrix mel_filterbank(const MelParams& params, std::size_t fft_size, double sample_rate);

MelSpectrogram mel_project(const Matrix& power, const MelParams& params = {},
                           double sample_rate = kFrontendSampleRate);

// resample to 16 kHz -> stft_power -> mel_project.
MelSpectrogram log_mel_spectrogram(const AudioSegment& audio);

// Spectrogram <-> single-record activation sample (K=1, m=bands, n=frames).
SampleActivations to_activations(const MelSpectrogram& spec, std::string sample_id = {});
MelSpectrogram spectrogram_from(const SampleActivations& sample);

}  // namespace gramsec
