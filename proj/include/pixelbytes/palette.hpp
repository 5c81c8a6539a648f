#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pixelbytes {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  auto operator<=>(const Rgb&) const = default;
};

// CIE L*a*b* under the D65 white point.
struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

// sRGB -> linear RGB -> XYZ (D65) -> L*a*b*.
Lab rgb_to_lab(Rgb rgb);

// Squared Euclidean distance in Lab (CIE76, without the square root).
double lab_distance2(const Lab& x, const Lab& y);

struct PaletteColor {
  Rgb rgb;
  Lab lab;
};

// Fixed, ordered color table. Token ids for image pixels are indices into
// this table, so the order is part of the data format.
class Palette {
 public:
  static constexpr std::size_t kSize = 55;

  explicit Palette(std::span<const Rgb> colors);

  // The 55-entry NES-derived palette shipped in data/palette_nes55.txt.
  static const Palette& nes55();

  // Parses the `index R G B` text format; throws std::runtime_error on any
  // malformed line, wrong count or duplicate color.
  static Palette parse(std::string_view text);
  static Palette load(const std::filesystem::path& path);

  std::string serialize() const;

  std::size_t size() const { return colors_.size(); }
  const PaletteColor& operator[](std::size_t i) const { return colors_[i]; }
  std::span<const PaletteColor> colors() const { return colors_; }

  // argmin over entries of the Lab distance; lowest index wins ties.
  std::size_t nearest(Rgb rgb) const;

 private:
  std::vector<PaletteColor> colors_;
};

// Index of the entry closest to `lab`; the lowest index wins exact ties.
std::size_t nearest_lab(std::span<const PaletteColor> colors, const Lab& lab);

// T x H x W stack of palette indices, row-major (t, h, w).
struct FrameStack {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> indices;

  std::uint8_t at(std::size_t t, std::size_t h, std::size_t w) const {
    return indices[(t * height + h) * width + w];
  }
  bool operator==(const FrameStack&) const = default;
};

// T x H x W stack of RGB pixels, row-major.
struct RgbFrames {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Rgb> pixels;
};

FrameStack quantize_frames(const RgbFrames& frames, const Palette& palette);

// Palette colors of an index stack (inverse of quantization on palette members).
RgbFrames frames_to_rgb(const FrameStack& frames, const Palette& palette);

}  // namespace pixelbytes
