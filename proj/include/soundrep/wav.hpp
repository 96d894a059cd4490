#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "soundrep/errors.hpp"

namespace soundrep {

/// Mono audio clip, samples in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string source_id;
};

/// Decodes a RIFF/WAVE container. Supported: PCM 16-bit and IEEE float 32-bit,
/// 1 or 2 channels. Stereo is mean-downmixed to mono.
AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string source_id);

AudioClip decode_wav_file(const std::filesystem::path& path);

/// Writes a mono PCM 16-bit WAV file. Samples are clamped to [-1, 1].
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples,
                     int sample_rate);

/// Same encoding, to memory (used by tests).
std::vector<std::uint8_t> encode_wav_pcm16(std::span<const double> samples, int sample_rate);

}  // namespace soundrep
