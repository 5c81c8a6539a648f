#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pixelbytes/palette.hpp"

namespace pixelbytes {

using TokenId = std::uint16_t;

// Layout of the 151-token vocabulary:
//   0 pad | 1 line break | 2 modality switch | 69 text | 55 palette | 24 action
namespace vocab {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kLineBreak = 1;
inline constexpr TokenId kModalitySwitch = 2;
inline constexpr TokenId kTextBase = 3;
inline constexpr std::size_t kTextCount = 69;
inline constexpr TokenId kPaletteBase = kTextBase + kTextCount;
inline constexpr std::size_t kPaletteCount = Palette::kSize;
inline constexpr TokenId kActionBase = kPaletteBase + kPaletteCount;
inline constexpr std::size_t kActionCount = 24;
inline constexpr std::size_t kSize = kActionBase + kActionCount;
static_assert(kSize == 151);
}  // namespace vocab

enum class TokenClass { pad, line_break, modality_switch, text, palette, action, invalid };

TokenClass classify(TokenId id);

// Printable ASCII after lowercase folding; nullopt for anything else.
std::optional<TokenId> text_id(char c);
char text_char(TokenId id);

TokenId palette_id(std::size_t index);
std::size_t palette_index(TokenId id);

// Action bins: 24 uniform bins over [-1, 1], centers -1 + (2k+1)/24.
TokenId action_id(std::size_t bin);
std::size_t action_bin_of(TokenId id);
double action_center(std::size_t bin);
// Nearest bin center after clamping to [-1, 1]; exact midpoints go to the
// higher bin.
std::size_t action_bin(double value);
double dequantize_action(TokenId id);

enum class Modality : std::uint8_t { text = 0, image = 1, audio = 2 };

std::string_view modality_name(Modality m);

struct Segment {
  Modality modality = Modality::text;
  std::uint32_t start = 0;
  std::uint32_t length = 0;
  // Image geometry; zero for other modalities.
  std::uint16_t frames = 0;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  // Audio channel count (derived from the line-break layout); zero otherwise.
  std::uint16_t channels = 0;

  bool operator==(const Segment&) const = default;
};

struct TokenStream {
  std::vector<TokenId> tokens;
  std::vector<Segment> segments;

  bool operator==(const TokenStream&) const = default;
};

class MalformedStream : public std::runtime_error {
 public:
  MalformedStream(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Throws MalformedStream if any stream invariant is violated.
void validate(const TokenStream& stream);

struct TextEncoding {
  TokenStream stream;
  std::size_t dropped = 0;
};

TextEncoding encode_text(std::string_view text);
TokenStream encode_frames(const FrameStack& frames);
TokenStream encode_rgb_frames(const RgbFrames& frames, const Palette& palette);

using Signals = std::vector<std::vector<double>>;

// Each channel is centered, scaled by its max |value| and quantized.
TokenStream encode_audio(const Signals& channels);
// Quantizes values as they are (clamped to [-1, 1]); used for control traces
// and for re-encoding decoded audio.
TokenStream encode_signals(const Signals& channels);

struct Record {
  std::string text;
  std::optional<FrameStack> frames;
  Signals audio;

  bool operator==(const Record&) const = default;
};

enum class AudioScaling { normalize, raw };

// Segments appear in text, image, audio order; empty modalities are skipped.
TokenStream encode_record(const Record& record, AudioScaling scaling = AudioScaling::normalize);

// Inverse of encode_record up to its lossy steps. Audio comes back as bin
// centers, so decode(encode_record(decode(s), raw)) == decode(s).
Record decode(const TokenStream& stream);

// Joins streams with one modality-switch token between consecutive ones.
TokenStream concat(std::span<const TokenStream> parts);

}  // namespace pixelbytes
