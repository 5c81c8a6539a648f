#include "pixelbytes/palette.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pixelbytes {
namespace {

constexpr std::array<Rgb, Palette::kSize> kNes55 = {{
    {124, 124, 124}, {0, 0, 252}, {0, 0, 188}, {68, 40, 188}, {148, 0, 132},
    {168, 0, 32}, {168, 16, 0}, {136, 20, 0}, {80, 48, 0}, {0, 120, 0},
    {0, 104, 0}, {0, 88, 0}, {0, 64, 88}, {0, 0, 0}, {188, 188, 188},
    {0, 120, 248}, {0, 88, 248}, {104, 68, 252}, {216, 0, 204}, {228, 0, 88},
    {248, 56, 0}, {228, 92, 16}, {172, 124, 0}, {0, 184, 0}, {0, 168, 0},
    {0, 168, 68}, {0, 136, 136}, {248, 248, 248}, {60, 188, 252}, {104, 136, 252},
    {152, 120, 248}, {248, 120, 248}, {248, 88, 152}, {248, 120, 88}, {252, 160, 68},
    {248, 184, 0}, {184, 248, 24}, {88, 216, 84}, {88, 248, 152}, {0, 232, 216},
    {120, 120, 120}, {252, 252, 252}, {164, 228, 252}, {184, 184, 248}, {216, 184, 248},
    {248, 184, 248}, {248, 164, 192}, {240, 208, 176}, {252, 224, 168}, {248, 216, 120},
    {216, 248, 120}, {184, 248, 184}, {184, 248, 216}, {0, 252, 252}, {248, 216, 248},
}};

double srgb_to_linear(std::uint8_t v) {
  const double c = v / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

}  // namespace

Lab rgb_to_lab(Rgb rgb) {
  const double r = srgb_to_linear(rgb.r);
  const double g = srgb_to_linear(rgb.g);
  const double b = srgb_to_linear(rgb.b);

  const double x = 0.412453 * r + 0.357580 * g + 0.180423 * b;
  const double y = 0.212671 * r + 0.715160 * g + 0.072169 * b;
  const double z = 0.019334 * r + 0.119193 * g + 0.950227 * b;

  // D65 reference white
  const double fx = lab_f(x / 0.95047);
  const double fy = lab_f(y / 1.00000);
  const double fz = lab_f(z / 1.08883);

  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double lab_distance2(const Lab& x, const Lab& y) {
  const double dl = x.l - y.l;
  const double da = x.a - y.a;
  const double db = x.b - y.b;
  return dl * dl + da * da + db * db;
}

Palette::Palette(std::span<const Rgb> colors) {
  if (colors.size() != kSize) {
    throw std::invalid_argument("palette must have exactly " + std::to_string(kSize) +
                                " colors, got " + std::to_string(colors.size()));
  }
  std::set<Rgb> seen;
  colors_.reserve(colors.size());
  for (const Rgb& c : colors) {
    if (!seen.insert(c).second) {
      throw std::invalid_argument("palette contains a duplicate color");
    }
    colors_.push_back({c, rgb_to_lab(c)});
  }
}

const Palette& Palette::nes55() {
  static const Palette palette(kNes55);
  return palette;
}

Palette Palette::parse(std::string_view text) {
  std::vector<Rgb> colors;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long index = -1, r = -1, g = -1, b = -1;
    std::string extra;
    if (!(fields >> index >> r >> g >> b) || (fields >> extra)) {
      throw std::runtime_error("palette line " + std::to_string(line_no) + ": expected `index R G B`");
    }
    if (index != static_cast<long>(colors.size())) {
      throw std::runtime_error("palette line " + std::to_string(line_no) + ": index out of order");
    }
    for (long v : {r, g, b}) {
      if (v < 0 || v > 255) {
        throw std::runtime_error("palette line " + std::to_string(line_no) + ": channel out of range");
      }
    }
    colors.push_back({static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                      static_cast<std::uint8_t>(b)});
  }
  try {
    return Palette(colors);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(e.what());
  }
}

Palette Palette::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open palette file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Palette::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < colors_.size(); ++i) {
    const Rgb& c = colors_[i].rgb;
    out += std::to_string(i) + ' ' + std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' +
           std::to_string(c.b) + '\n';
  }
  return out;
}

std::size_t Palette::nearest(Rgb rgb) const { return nearest_lab(colors_, rgb_to_lab(rgb)); }

std::size_t nearest_lab(std::span<const PaletteColor> colors, const Lab& lab) {
  if (colors.empty()) throw std::invalid_argument("nearest_lab: empty color list");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < colors.size(); ++i) {
    const double d = lab_distance2(lab, colors[i].lab);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

FrameStack quantize_frames(const RgbFrames& frames, const Palette& palette) {
  const std::size_t n = frames.frames * frames.height * frames.width;
  if (n == 0) throw std::invalid_argument("empty frame stack");
  if (frames.pixels.size() != n) throw std::invalid_argument("frame stack size does not match its shape");
  FrameStack out{frames.frames, frames.height, frames.width, {}};
  out.indices.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.indices[i] = static_cast<std::uint8_t>(palette.nearest(frames.pixels[i]));
  }
  return out;
}

RgbFrames frames_to_rgb(const FrameStack& frames, const Palette& palette) {
  RgbFrames out{frames.frames, frames.height, frames.width, {}};
  out.pixels.reserve(frames.indices.size());
  for (std::uint8_t idx : frames.indices) {
    if (idx >= palette.size()) throw std::invalid_argument("not a palette index");
    out.pixels.push_back(palette[idx].rgb);
  }
  return out;
}

}  // namespace pixelbytes
