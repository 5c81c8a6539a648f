#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <set>

#include "pixelbytes/palette.hpp"

using namespace pixelbytes;

namespace {

// Exhaustive scan, written independently of Palette::nearest.
std::size_t brute_force_nearest(const Palette& p, Rgb rgb) {
  const Lab q = rgb_to_lab(rgb);
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const Lab& c = p[i].lab;
    const Lab& b = p[best].lab;
    const double di = (q.l - c.l) * (q.l - c.l) + (q.a - c.a) * (q.a - c.a) + (q.b - c.b) * (q.b - c.b);
    const double db = (q.l - b.l) * (q.l - b.l) + (q.a - b.a) * (q.a - b.a) + (q.b - b.b) * (q.b - b.b);
    if (di < db) best = i;
  }
  return best;
}

Rgb random_rgb(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  return {static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng)), static_cast<std::uint8_t>(d(rng))};
}

}  // namespace

TEST_SUITE("palette") {
  TEST_CASE("builtin palette has 55 distinct colors and matches the data file") {
    const Palette& p = Palette::nes55();
    CHECK(p.size() == 55);
    std::set<Rgb> seen;
    for (const auto& c : p.colors()) seen.insert(c.rgb);
    CHECK(seen.size() == 55);

    const Palette file = Palette::load(std::string(PIXELBYTES_DATA_DIR) + "/palette_nes55.txt");
    REQUIRE(file.size() == 55);
    for (std::size_t i = 0; i < 55; ++i) CHECK(file[i].rgb == p[i].rgb);
    CHECK(file.serialize() == p.serialize());
  }

  TEST_CASE("Lab conversion reference points") {
    const Lab white = rgb_to_lab({255, 255, 255});
    CHECK(white.l == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(std::abs(white.a) < 0.01);
    CHECK(std::abs(white.b) < 0.01);

    const Lab black = rgb_to_lab({0, 0, 0});
    CHECK(black.l == 0.0);
    CHECK(std::abs(black.a) < 1e-12);
    CHECK(std::abs(black.b) < 1e-12);

    // Frozen from scikit-image rgb2lab (D65, 2 degree observer).
    struct Case {
      Rgb rgb;
      double l, a, b;
    };
    const std::array<Case, 3> cases = {{{{255, 0, 0}, 53.24058794, 80.09230823, 67.20275104},
                                        {{0, 255, 0}, 87.73509949, -86.18302974, 83.17970318},
                                        {{0, 0, 255}, 32.29567257, 79.18559091, -107.85730021}}};
    for (const auto& c : cases) {
      const Lab lab = rgb_to_lab(c.rgb);
      CHECK(std::abs(lab.l - c.l) < 1e-3);
      CHECK(std::abs(lab.a - c.a) < 1e-3);
      CHECK(std::abs(lab.b - c.b) < 1e-3);
    }
  }

  TEST_CASE("palette members map to themselves") {
    const Palette& p = Palette::nes55();
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p.nearest(p[i].rgb) == i);
  }

  TEST_CASE("exact ties go to the lowest index") {
    std::vector<PaletteColor> colors(10);
    for (std::size_t i = 0; i < colors.size(); ++i) colors[i].lab = {90.0, 50.0 + static_cast<double>(i), 0.0};
    colors[3].lab = {10.0, 0.0, 0.0};
    colors[7].lab = {30.0, 0.0, 0.0};
    CHECK(nearest_lab(colors, {20.0, 0.0, 0.0}) == 3);
    colors[3].lab = {30.0, 0.0, 0.0};
    colors[7].lab = {10.0, 0.0, 0.0};
    CHECK(nearest_lab(colors, {20.0, 0.0, 0.0}) == 3);
  }

  TEST_CASE("nearest agrees with an exhaustive scan on 10000 random colors") {
    const Palette& p = Palette::nes55();
    std::mt19937_64 rng(11);
    for (int i = 0; i < 10000; ++i) {
      const Rgb c = random_rgb(rng);
      REQUIRE(p.nearest(c) == brute_force_nearest(p, c));
    }
  }

  TEST_CASE("quantize_frames") {
    const Palette& p = Palette::nes55();
    RgbFrames one{1, 1, 1, {p[17].rgb}};
    CHECK(quantize_frames(one, p).indices == std::vector<std::uint8_t>{17});

    RgbFrames uniform{2, 3, 4, std::vector<Rgb>(24, Rgb{200, 40, 90})};
    const FrameStack q = quantize_frames(uniform, p);
    CHECK(q.frames == 2);
    CHECK(q.height == 3);
    CHECK(q.width == 4);
    for (auto idx : q.indices) CHECK(idx == q.indices[0]);

    std::mt19937_64 rng(5);
    RgbFrames random{1, 2, 2, {}};
    for (int i = 0; i < 4; ++i) random.pixels.push_back(random_rgb(rng));
    const FrameStack rq = quantize_frames(random, p);
    for (int i = 0; i < 4; ++i) CHECK(rq.indices[i] == brute_force_nearest(p, random.pixels[i]));

    CHECK_THROWS_WITH_AS(quantize_frames(RgbFrames{}, p), "empty frame stack", std::invalid_argument);
  }

  TEST_CASE("quantization is idempotent through palette colors") {
    const Palette& p = Palette::nes55();
    std::mt19937_64 rng(3);
    RgbFrames frames{3, 4, 5, {}};
    for (int i = 0; i < 60; ++i) frames.pixels.push_back(random_rgb(rng));
    const FrameStack q = quantize_frames(frames, p);
    CHECK(quantize_frames(frames_to_rgb(q, p), p) == q);
    CHECK(quantize_frames(frames, p) == q);
  }

  TEST_CASE("palette parsing rejects malformed data") {
    const std::string good = Palette::nes55().serialize();
    CHECK(Palette::parse(good).serialize() == good);

    CHECK_THROWS_AS(Palette::parse("0 1 2\n"), std::runtime_error);
    std::string dup = good;
    const auto second = dup.find('\n') + 1;
    const auto third = dup.find('\n', second);
    dup.replace(second, third - second, "1 124 124 124");
    CHECK_THROWS_AS(Palette::parse(dup), std::runtime_error);
    CHECK_THROWS_AS(Palette::parse(good + "55 1 2 3\n"), std::runtime_error);
    CHECK_THROWS_AS(Palette::parse("0 300 0 0\n"), std::runtime_error);
  }
}
