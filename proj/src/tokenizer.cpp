#include "pixelbytes/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace pixelbytes {
namespace {

constexpr bool is_folded_printable(unsigned char c) {
  return c >= 0x20 && c <= 0x7E && !(c >= 'A' && c <= 'Z');
}

struct TextTables {
  std::array<std::int16_t, 256> byte_to_id{};
  std::array<char, vocab::kTextCount> id_to_byte{};

  constexpr TextTables() {
    for (auto& v : byte_to_id) v = -1;
    std::size_t next = 0;
    for (int c = 0x20; c <= 0x7E; ++c) {
      if (!is_folded_printable(static_cast<unsigned char>(c))) continue;
      byte_to_id[c] = static_cast<std::int16_t>(vocab::kTextBase + next);
      id_to_byte[next] = static_cast<char>(c);
      ++next;
    }
    for (int c = 'A'; c <= 'Z'; ++c) byte_to_id[c] = byte_to_id[c - 'A' + 'a'];
  }
};

constexpr TextTables kText{};

void check_u16(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint16_t>::max()) {
    throw std::invalid_argument(std::string(what) + " exceeds 65535");
  }
}

std::uint32_t to_u32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("stream too long");
  return static_cast<std::uint32_t>(v);
}

TokenStream quantize_channels(const Signals& channels, bool normalize) {
  if (channels.empty() || channels.front().empty()) throw std::invalid_argument("empty audio input");
  const std::size_t n = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != n) throw std::invalid_argument("audio channels differ in length");
  }
  check_u16(channels.size(), "channel count");

  std::vector<std::vector<TokenId>> ids(channels.size(), std::vector<TokenId>(n));
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& ch = channels[c];
    double mean = 0.0, scale = 1.0;
    if (normalize) {
      for (double v : ch) mean += v;
      mean /= static_cast<double>(n);
      double peak = 0.0;
      for (double v : ch) peak = std::max(peak, std::abs(v - mean));
      scale = peak > 0.0 ? 1.0 / peak : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      ids[c][i] = action_id(action_bin((ch[i] - mean) * scale));
    }
  }

  TokenStream out;
  const bool interleave = channels.size() > 1;
  out.tokens.reserve(interleave ? n * (channels.size() + 1) : n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels.size(); ++c) out.tokens.push_back(ids[c][i]);
    if (interleave) out.tokens.push_back(vocab::kLineBreak);
  }
  Segment seg;
  seg.modality = Modality::audio;
  seg.length = to_u32(out.tokens.size());
  seg.channels = static_cast<std::uint16_t>(channels.size());
  out.segments.push_back(seg);
  return out;
}

// Audio channel count implied by the line-break layout of a segment.
std::size_t audio_channels(std::span<const TokenId> tokens, std::size_t base_offset) {
  const auto brk = std::find(tokens.begin(), tokens.end(), vocab::kLineBreak);
  if (brk == tokens.end()) return 1;
  const std::size_t c = static_cast<std::size_t>(brk - tokens.begin());
  if (c < 2) throw MalformedStream("audio step with fewer than two channels", base_offset);
  if (tokens.size() % (c + 1) != 0) throw MalformedStream("ragged audio segment", base_offset);
  return c;
}

void validate_segment(const TokenStream& s, const Segment& seg) {
  const auto body = std::span(s.tokens).subspan(seg.start, seg.length);
  switch (seg.modality) {
    case Modality::text:
      for (std::size_t i = 0; i < body.size(); ++i) {
        const auto k = classify(body[i]);
        if (k != TokenClass::text && k != TokenClass::line_break) {
          throw MalformedStream("non-text token in text segment", seg.start + i);
        }
      }
      break;
    case Modality::image: {
      const std::size_t row = static_cast<std::size_t>(seg.width) + 1;
      if (seg.frames == 0 || seg.height == 0 || seg.width == 0 ||
          static_cast<std::size_t>(seg.frames) * seg.height * row != body.size()) {
        throw MalformedStream("image geometry does not match segment length", seg.start);
      }
      for (std::size_t i = 0; i < body.size(); ++i) {
        const bool row_end = (i % row) == row - 1;
        if (row_end ? body[i] != vocab::kLineBreak : classify(body[i]) != TokenClass::palette) {
          throw MalformedStream("malformed image row", seg.start + i);
        }
      }
      break;
    }
    case Modality::audio: {
      if (body.empty()) throw MalformedStream("empty audio segment", seg.start);
      const std::size_t c = audio_channels(body, seg.start);
      if (seg.channels != 0 && seg.channels != c) {
        throw MalformedStream("audio channel count mismatch", seg.start);
      }
      for (std::size_t i = 0; i < body.size(); ++i) {
        const bool row_end = c > 1 && (i % (c + 1)) == c;
        if (row_end ? body[i] != vocab::kLineBreak : classify(body[i]) != TokenClass::action) {
          throw MalformedStream("malformed audio step", seg.start + i);
        }
      }
      break;
    }
    default:
      throw MalformedStream("unknown modality", seg.start);
  }
}

}  // namespace

TokenClass classify(TokenId id) {
  if (id == vocab::kPad) return TokenClass::pad;
  if (id == vocab::kLineBreak) return TokenClass::line_break;
  if (id == vocab::kModalitySwitch) return TokenClass::modality_switch;
  if (id < vocab::kPaletteBase) return TokenClass::text;
  if (id < vocab::kActionBase) return TokenClass::palette;
  if (id < vocab::kSize) return TokenClass::action;
  return TokenClass::invalid;
}

std::optional<TokenId> text_id(char c) {
  const auto v = kText.byte_to_id[static_cast<unsigned char>(c)];
  if (v < 0) return std::nullopt;
  return static_cast<TokenId>(v);
}

char text_char(TokenId id) {
  if (classify(id) != TokenClass::text) throw std::invalid_argument("not a text token");
  return kText.id_to_byte[id - vocab::kTextBase];
}

TokenId palette_id(std::size_t index) {
  if (index >= vocab::kPaletteCount) throw std::invalid_argument("not a palette index");
  return static_cast<TokenId>(vocab::kPaletteBase + index);
}

std::size_t palette_index(TokenId id) {
  if (classify(id) != TokenClass::palette) throw std::invalid_argument("not a palette token");
  return id - vocab::kPaletteBase;
}

TokenId action_id(std::size_t bin) {
  if (bin >= vocab::kActionCount) throw std::invalid_argument("not an action bin");
  return static_cast<TokenId>(vocab::kActionBase + bin);
}

std::size_t action_bin_of(TokenId id) {
  if (classify(id) != TokenClass::action) throw std::invalid_argument("not an action token");
  return id - vocab::kActionBase;
}

double action_center(std::size_t bin) {
  return -1.0 + (2.0 * static_cast<double>(bin) + 1.0) / static_cast<double>(vocab::kActionCount);
}

std::size_t action_bin(double value) {
  if (std::isnan(value)) throw std::invalid_argument("NaN action value");
  const double v = std::clamp(value, -1.0, 1.0);
  const double half = static_cast<double>(vocab::kActionCount) / 2.0;
  auto k = static_cast<std::ptrdiff_t>(std::floor((v + 1.0) * half));
  // (v + 1) * 12 can round just below an exact bin edge.
  if (k + 1 < static_cast<std::ptrdiff_t>(vocab::kActionCount) && v >= -1.0 + static_cast<double>(k + 1) / half) ++k;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, vocab::kActionCount - 1));
}

double dequantize_action(TokenId id) { return action_center(action_bin_of(id)); }

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::image: return "image";
    case Modality::audio: return "audio";
  }
  return "unknown";
}

void validate(const TokenStream& s) {
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.tokens[i] >= vocab::kSize) throw MalformedStream("token id out of range", i);
  }
  if (s.segments.empty()) {
    if (!s.tokens.empty()) throw MalformedStream("tokens outside any segment", 0);
    return;
  }
  std::size_t expected = 0;
  for (std::size_t k = 0; k < s.segments.size(); ++k) {
    const Segment& seg = s.segments[k];
    if (k > 0) {
      if (expected >= s.tokens.size() || s.tokens[expected] != vocab::kModalitySwitch) {
        throw MalformedStream("missing modality switch between segments", expected);
      }
      ++expected;
    }
    if (seg.start != expected) throw MalformedStream("segment does not start where expected", seg.start);
    if (seg.length == 0) throw MalformedStream("empty segment", seg.start);
    if (static_cast<std::size_t>(seg.start) + seg.length > s.tokens.size()) {
      throw MalformedStream("segment runs past end of stream", seg.start);
    }
    validate_segment(s, seg);
    expected = static_cast<std::size_t>(seg.start) + seg.length;
  }
  if (expected != s.tokens.size()) throw MalformedStream("trailing tokens after last segment", expected);
}

TextEncoding encode_text(std::string_view text) {
  TextEncoding out;
  for (char c : text) {
    if (c == '\n') {
      out.stream.tokens.push_back(vocab::kLineBreak);
    } else if (auto id = text_id(c)) {
      out.stream.tokens.push_back(*id);
    } else {
      ++out.dropped;
    }
  }
  if (!out.stream.tokens.empty()) {
    Segment seg;
    seg.modality = Modality::text;
    seg.length = to_u32(out.stream.tokens.size());
    out.stream.segments.push_back(seg);
  }
  return out;
}

TokenStream encode_frames(const FrameStack& f) {
  if (f.frames == 0 || f.height == 0 || f.width == 0) throw std::invalid_argument("empty frame stack");
  if (f.indices.size() != f.frames * f.height * f.width) {
    throw std::invalid_argument("frame stack size does not match its shape");
  }
  check_u16(f.frames, "frame count");
  check_u16(f.height, "frame height");
  check_u16(f.width, "frame width");

  TokenStream out;
  out.tokens.reserve(f.frames * f.height * (f.width + 1));
  for (std::size_t t = 0; t < f.frames; ++t) {
    for (std::size_t h = 0; h < f.height; ++h) {
      for (std::size_t w = 0; w < f.width; ++w) out.tokens.push_back(palette_id(f.at(t, h, w)));
      out.tokens.push_back(vocab::kLineBreak);
    }
  }
  Segment seg;
  seg.modality = Modality::image;
  seg.length = to_u32(out.tokens.size());
  seg.frames = static_cast<std::uint16_t>(f.frames);
  seg.height = static_cast<std::uint16_t>(f.height);
  seg.width = static_cast<std::uint16_t>(f.width);
  out.segments.push_back(seg);
  return out;
}

TokenStream encode_rgb_frames(const RgbFrames& frames, const Palette& palette) {
  return encode_frames(quantize_frames(frames, palette));
}

TokenStream encode_audio(const Signals& channels) { return quantize_channels(channels, true); }

TokenStream encode_signals(const Signals& channels) { return quantize_channels(channels, false); }

TokenStream concat(std::span<const TokenStream> parts) {
  TokenStream out;
  for (const TokenStream& part : parts) {
    if (part.tokens.empty()) continue;
    if (!out.tokens.empty()) out.tokens.push_back(vocab::kModalitySwitch);
    const auto offset = to_u32(out.tokens.size());
    out.tokens.insert(out.tokens.end(), part.tokens.begin(), part.tokens.end());
    for (Segment seg : part.segments) {
      seg.start += offset;
      out.segments.push_back(seg);
    }
  }
  return out;
}

TokenStream encode_record(const Record& record, AudioScaling scaling) {
  std::vector<TokenStream> parts;
  if (!record.text.empty()) {
    auto text = encode_text(record.text);
    if (!text.stream.tokens.empty()) parts.push_back(std::move(text.stream));
  }
  if (record.frames) parts.push_back(encode_frames(*record.frames));
  if (!record.audio.empty()) {
    parts.push_back(scaling == AudioScaling::normalize ? encode_audio(record.audio)
                                                       : encode_signals(record.audio));
  }
  if (parts.empty()) throw std::invalid_argument("record has no modality to encode");
  return concat(parts);
}

Record decode(const TokenStream& stream) {
  validate(stream);
  Record out;
  bool seen[3] = {false, false, false};
  for (const Segment& seg : stream.segments) {
    auto& flag = seen[static_cast<int>(seg.modality)];
    if (flag) throw MalformedStream("repeated " + std::string(modality_name(seg.modality)) + " segment", seg.start);
    flag = true;
    const auto body = std::span(stream.tokens).subspan(seg.start, seg.length);
    switch (seg.modality) {
      case Modality::text:
        for (TokenId id : body) out.text += id == vocab::kLineBreak ? '\n' : text_char(id);
        break;
      case Modality::image: {
        FrameStack f{seg.frames, seg.height, seg.width, {}};
        f.indices.reserve(f.frames * f.height * f.width);
        for (TokenId id : body) {
          if (id != vocab::kLineBreak) f.indices.push_back(static_cast<std::uint8_t>(palette_index(id)));
        }
        out.frames = std::move(f);
        break;
      }
      case Modality::audio: {
        const std::size_t c = audio_channels(body, seg.start);
        out.audio.assign(c, {});
        std::size_t ch = 0;
        for (TokenId id : body) {
          if (id == vocab::kLineBreak) {
            ch = 0;
            continue;
          }
          out.audio[ch].push_back(dequantize_action(id));
          if (c > 1) ++ch;
        }
        break;
      }
    }
  }
  return out;
}

}  // namespace pixelbytes
