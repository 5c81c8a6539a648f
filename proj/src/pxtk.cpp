#include "pixelbytes/pxtk.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace pixelbytes {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'X', 'T', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("PXTK: unexpected end of file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return v;
}

}  // namespace

void write_pxtk(std::ostream& out, std::span<const TokenStream> records) {
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) throw std::invalid_argument("too many records");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(out, kPxtkVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  for (const TokenStream& rec : records) {
    validate(rec);
    if (rec.segments.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw std::invalid_argument("too many segments in record");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.tokens.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.segments.size()));
    for (const Segment& seg : rec.segments) {
      put<std::uint8_t>(out, static_cast<std::uint8_t>(seg.modality));
      put<std::uint32_t>(out, seg.start);
      put<std::uint32_t>(out, seg.length);
      if (seg.modality == Modality::image) {
        put<std::uint16_t>(out, seg.frames);
        put<std::uint16_t>(out, seg.height);
        put<std::uint16_t>(out, seg.width);
      }
    }
    for (TokenId id : rec.tokens) put<std::uint16_t>(out, id);
  }
  if (!out) throw std::runtime_error("PXTK: write failed");
}

std::vector<TokenStream> read_pxtk(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("PXTK: bad magic");
  if (const auto version = get<std::uint8_t>(in); version != kPxtkVersion) {
    throw std::runtime_error("PXTK: unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in);
  std::vector<TokenStream> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    TokenStream rec;
    const auto n_tokens = get<std::uint32_t>(in);
    const auto n_segments = get<std::uint8_t>(in);
    for (std::uint8_t s = 0; s < n_segments; ++s) {
      Segment seg;
      const auto modality = get<std::uint8_t>(in);
      if (modality > static_cast<std::uint8_t>(Modality::audio)) {
        throw std::runtime_error("PXTK: record " + std::to_string(r) + " has unknown modality");
      }
      seg.modality = static_cast<Modality>(modality);
      seg.start = get<std::uint32_t>(in);
      seg.length = get<std::uint32_t>(in);
      if (seg.modality == Modality::image) {
        seg.frames = get<std::uint16_t>(in);
        seg.height = get<std::uint16_t>(in);
        seg.width = get<std::uint16_t>(in);
      }
      rec.segments.push_back(seg);
    }
    rec.tokens.resize(n_tokens);
    for (auto& id : rec.tokens) id = get<std::uint16_t>(in);

    // Channel counts are not stored; recover them from the layout.
    for (Segment& seg : rec.segments) {
      if (seg.modality != Modality::audio) continue;
      if (static_cast<std::size_t>(seg.start) + seg.length > rec.tokens.size()) break;
      std::uint16_t c = 1;
      for (std::uint32_t i = 0; i < seg.length; ++i) {
        if (rec.tokens[seg.start + i] == vocab::kLineBreak) {
          c = static_cast<std::uint16_t>(i);
          break;
        }
      }
      seg.channels = c;
    }
    try {
      validate(rec);
    } catch (const MalformedStream& e) {
      throw std::runtime_error("PXTK: record " + std::to_string(r) + ": " + e.what());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_pxtk(const std::filesystem::path& path, std::span<const TokenStream> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_pxtk(out, records);
}

std::vector<TokenStream> load_pxtk(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_pxtk(in);
}

}  // namespace pixelbytes
