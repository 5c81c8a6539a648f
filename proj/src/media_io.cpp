#include "pixelbytes/media_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pixelbytes {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Next whitespace-separated PNM header field, skipping '#' comments.
std::string pnm_field(std::istream& in) {
  std::string field;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!field.empty()) break;
      continue;
    }
    field.push_back(c);
  }
  return field;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw std::runtime_error("bad " + what + ": '" + s + "'");
  }
  return std::stoul(s);
}

std::uint32_t le32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(p[i]);
  return v;
}

std::uint16_t le16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) | (static_cast<std::uint8_t>(p[1]) << 8));
}

void put32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put16(std::ostream& out, std::uint16_t v) {
  out.put(static_cast<char>(v & 0xff));
  out.put(static_cast<char>(v >> 8));
}

}  // namespace

FrameStack read_grid(const std::filesystem::path& path) {
  auto in = open_in(path);
  FrameStack f;
  if (!(in >> f.frames >> f.height >> f.width) || f.frames == 0 || f.height == 0 || f.width == 0) {
    throw std::runtime_error(path.string() + ": grid header must be three positive sizes");
  }
  f.indices.resize(f.frames * f.height * f.width);
  for (auto& v : f.indices) {
    int x;
    if (!(in >> x)) throw std::runtime_error(path.string() + ": too few grid values");
    if (x < 0 || x >= static_cast<int>(Palette::kSize)) {
      throw std::runtime_error(path.string() + ": palette index out of range: " + std::to_string(x));
    }
    v = static_cast<std::uint8_t>(x);
  }
  std::string extra;
  if (in >> extra) throw std::runtime_error(path.string() + ": trailing grid data");
  return f;
}

void write_grid(const std::filesystem::path& path, const FrameStack& frames) {
  auto out = open_out(path);
  out << frames.frames << ' ' << frames.height << ' ' << frames.width << '\n';
  for (std::size_t t = 0; t < frames.frames; ++t) {
    for (std::size_t h = 0; h < frames.height; ++h) {
      for (std::size_t w = 0; w < frames.width; ++w) {
        out << static_cast<int>(frames.at(t, h, w)) << (w + 1 == frames.width ? '\n' : ' ');
      }
    }
    if (t + 1 < frames.frames) out << '\n';
  }
}

RgbFrames read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string magic = pnm_field(in);
  if (magic != "P6" && magic != "P3") throw std::runtime_error(path.string() + ": not a P3/P6 pixmap");
  RgbFrames img;
  img.frames = 1;
  img.width = parse_size(pnm_field(in), "width");
  img.height = parse_size(pnm_field(in), "height");
  const std::size_t maxval = parse_size(pnm_field(in), "maxval");
  if (img.width == 0 || img.height == 0 || maxval != 255) {
    throw std::runtime_error(path.string() + ": only non-empty pixmaps with maxval 255 are supported");
  }
  img.pixels.resize(img.width * img.height);
  if (magic == "P6") {
    std::vector<char> raw(img.pixels.size() * 3);
    if (!in.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
      throw std::runtime_error(path.string() + ": truncated pixel data");
    }
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
      img.pixels[i] = {static_cast<std::uint8_t>(raw[3 * i]), static_cast<std::uint8_t>(raw[3 * i + 1]),
                       static_cast<std::uint8_t>(raw[3 * i + 2])};
    }
  } else {
    for (auto& p : img.pixels) {
      std::array<std::size_t, 3> c{};
      for (auto& v : c) {
        v = parse_size(pnm_field(in), "sample");
        if (v > 255) throw std::runtime_error(path.string() + ": sample above maxval");
      }
      p = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]), static_cast<std::uint8_t>(c[2])};
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbFrames& frames) {
  auto out = open_out(path);
  out << "P6\n" << frames.width << ' ' << frames.height * frames.frames << "\n255\n";
  for (const Rgb& p : frames.pixels) {
    out.put(static_cast<char>(p.r));
    out.put(static_cast<char>(p.g));
    out.put(static_cast<char>(p.b));
  }
}

WavData read_wav(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 || bytes.compare(8, 4, "WAVE") != 0) {
    throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw std::runtime_error(path.string() + ": truncated chunk " + id);
    if (id == "fmt ") {
      if (size < 16) throw std::runtime_error(path.string() + ": short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw std::runtime_error(path.string() + ": data chunk before fmt");
      if (format != 1 || (bits != 8 && bits != 16) || channels == 0) {
        throw std::runtime_error(path.string() + ": only 8/16-bit integer PCM is supported");
      }
      const std::size_t width = bits / 8;
      const std::size_t frames = size / (width * channels);
      WavData wav;
      wav.sample_rate = rate;
      wav.channels.assign(channels, std::vector<double>(frames));
      for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
          const char* p = bytes.data() + body + (i * channels + c) * width;
          wav.channels[c][i] = bits == 8 ? (static_cast<double>(static_cast<std::uint8_t>(*p)) - 128.0) / 128.0
                                         : static_cast<double>(static_cast<std::int16_t>(le16(p))) / 32768.0;
        }
      }
      return wav;
    }
    pos = body + size + (size % 2);
  }
  throw std::runtime_error(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const WavData& wav) {
  if (wav.channels.empty()) throw std::invalid_argument("write_wav: no channels");
  const std::size_t n = wav.channels.front().size();
  for (const auto& c : wav.channels) {
    if (c.size() != n) throw std::invalid_argument("write_wav: channels differ in length");
  }
  const auto channels = static_cast<std::uint16_t>(wav.channels.size());
  const auto data_size = static_cast<std::uint32_t>(n * channels * 2);
  auto out = open_out(path);
  out.write("RIFF", 4);
  put32(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  put32(out, 16);
  put16(out, 1);
  put16(out, channels);
  put32(out, wav.sample_rate);
  put32(out, wav.sample_rate * channels * 2);
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  out.write("data", 4);
  put32(out, data_size);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& c : wav.channels) {
      const double s = std::clamp(c[i], -1.0, 1.0) * 32767.0;
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(s))));
    }
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pixelbytes
