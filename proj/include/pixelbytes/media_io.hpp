#pragma once

#include <filesystem>
#include <string>

#include "pixelbytes/palette.hpp"
#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

// Plain-text index grid: "T H W" followed by T*H*W palette indices.
FrameStack read_grid(const std::filesystem::path& path);
void write_grid(const std::filesystem::path& path, const FrameStack& frames);

// Binary (P6) or ASCII (P3) portable pixmap with maxval 255; one frame.
RgbFrames read_ppm(const std::filesystem::path& path);
// Frames are stacked vertically.
void write_ppm(const std::filesystem::path& path, const RgbFrames& frames);

struct WavData {
  std::uint32_t sample_rate = 0;
  Signals channels;
};

// RIFF/WAVE with 8- or 16-bit integer PCM. Samples are scaled to [-1, 1).
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavData& wav);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace pixelbytes
