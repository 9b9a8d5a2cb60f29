#pragma once

#include <filesystem>

#include "gramsec/audio.hpp"

namespace gramsec {

// Reads 16-bit PCM or 32-bit float WAV; multichannel input is averaged to mono.
AudioSegment read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM, clipping to [-1, 1].
void write_wav_pcm16(const AudioSegment& audio, const std::filesystem::path& path);

}  // namespace gramsec
