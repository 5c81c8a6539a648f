#include "pixelbytes/fixtures.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace pixelbytes {

namespace {

constexpr std::array<const char*, 12> kNames = {"pika", "bulba", "squirt", "charm", "eevee", "onix",
                                                "geo",  "zubat", "oddish", "abra", "gastly", "jiggly"};
constexpr std::array<const char*, 6> kTypes = {"fire", "water", "grass", "rock", "ghost", "normal"};
constexpr std::array<const char*, 6> kMoves = {"tackle", "ember", "surf", "vine whip", "rock throw", "lick"};

constexpr std::uint8_t kWhite = 41;
constexpr std::uint8_t kBlack = 13;
constexpr std::array<std::uint8_t, 10> kFills = {20, 23, 15, 35, 31, 37, 21, 28, 19, 36};
constexpr std::array<std::uint8_t, 10> kShades = {6, 10, 16, 22, 18, 24, 7, 1, 5, 9};

// Outlined blob on white with a shaded lower right and one eye. The second
// frame is an idle pose: either a one-row bob or a blink.
FrameStack sprite(std::mt19937_64& rng) {
  const std::size_t palette = rng() % kFills.size();
  const int kind = static_cast<int>(rng() % 3);
  const bool bob = rng() % 2 == 0;
  auto inside = [kind](double x, double y) {
    switch (kind) {
      case 0:
        return x * x + y * y <= 10.5;
      case 1:
        return std::abs(x) <= 2.5 && std::abs(y) <= 2.5;
      default:
        return std::abs(x) + std::abs(y) <= 3.5;
    }
  };
  FrameStack f{2, 8, 8, std::vector<std::uint8_t>(2 * 8 * 8, kWhite)};
  for (std::size_t t = 0; t < 2; ++t) {
    const double dy = (t == 1 && bob) ? 1.0 : 0.0;
    for (std::size_t h = 0; h < 8; ++h) {
      for (std::size_t w = 0; w < 8; ++w) {
        const double y = static_cast<double>(h) - 3.5 - dy;
        const double x = static_cast<double>(w) - 3.5;
        if (!inside(x, y)) continue;
        const bool edge = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1);
        std::uint8_t v = x + y > 0.5 ? kShades[palette] : kFills[palette];
        if (edge) v = kBlack;
        const bool eye = std::abs(x - 0.5) < 0.1 && std::abs(y + 0.5) < 0.1;
        if (eye && (t == 0 || bob)) v = kBlack;
        f.indices[(t * 8 + h) * 8 + w] = v;
      }
    }
  }
  return f;
}

}  // namespace

std::vector<Record> synthetic_records(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Record> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = kNames[rng() % kNames.size()];
    const std::string type = kTypes[rng() % kTypes.size()];
    const std::string move = kMoves[rng() % kMoves.size()];
    Record r;
    r.text = name + " is a " + type + " type.\nit uses " + move + " in battle!\n";
    r.frames = sprite(rng);
    const double freq = 1.0 + static_cast<double>(rng() % 4);
    const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
    std::vector<double> tone(32);
    for (std::size_t n = 0; n < tone.size(); ++n) {
      tone[n] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(n) / 32.0 + phase);
    }
    r.audio = {tone};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace pixelbytes
