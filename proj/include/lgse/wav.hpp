#pragma once

// 16-bit PCM mono WAV at 16 kHz.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "lgse/dsp.hpp"

namespace lgse {

struct WavError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rejects anything but RIFF/WAVE, PCM, one channel, 16 bits, 16000 Hz.
Waveform read_wav(const std::filesystem::path& path);

/// Samples are clamped to [-1, 1] and rounded to the nearest 16-bit level.
void write_wav(const std::filesystem::path& path, const Waveform& w);

/// Writes clean_NNNN.wav / noise_NNNN.wav pairs and manifest.csv
/// (id,clean,noise,duration_s,seed,color) into `dir`.
void save_corpus(const std::filesystem::path& dir, const std::vector<CorpusPair>& corpus, std::uint64_t seed);
/// Reads a directory written by save_corpus.
std::vector<CorpusPair> load_corpus(const std::filesystem::path& dir);

}  // namespace lgse
