#include "pixelbytes/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "pixelbytes/seq_model.hpp"

namespace pixelbytes {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'X', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[i]) << (8 * i));
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, std::uint64_t seed,
                     const ParameterList& parameters) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put<std::uint8_t>(out, kVersion);
  const std::string text = config.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(out, seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(parameters.size()));
  for (const Parameter* p : parameters) {
    if (p->name.size() > std::numeric_limits<std::uint16_t>::max()) throw std::invalid_argument("parameter name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p->shape.size()));
    for (std::size_t d : p->shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  if (get<std::uint8_t>(in, path) != kVersion) throw std::runtime_error("checkpoint " + path.string() + ": bad version");

  Checkpoint ck;
  std::string text(get<std::uint32_t>(in, path), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  if (!in) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  ck.config = nlohmann::json::parse(text);
  ck.seed = get<std::uint64_t>(in, path);
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t a = 0; a < count; ++a) {
    NamedArray arr;
    arr.name.resize(get<std::uint16_t>(in, path));
    in.read(arr.name.data(), static_cast<std::streamsize>(arr.name.size()));
    const auto rank = get<std::uint8_t>(in, path);
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      arr.shape.push_back(get<std::uint32_t>(in, path));
      n *= arr.shape.back();
    }
    arr.values.resize(n);
    for (double& v : arr.values) v = std::bit_cast<double>(get<std::uint64_t>(in, path));
    ck.arrays.push_back(std::move(arr));
  }
  return ck;
}

void restore_parameters(const Checkpoint& checkpoint, const ParameterList& parameters) {
  for (Parameter* p : parameters) {
    const NamedArray* found = nullptr;
    for (const NamedArray& a : checkpoint.arrays) {
      if (a.name == p->name) found = &a;
    }
    if (!found) throw std::runtime_error("checkpoint has no array named " + p->name);
    if (found->shape != p->shape) throw std::runtime_error("shape mismatch for " + p->name);
    std::memcpy(p->value.data(), found->values.data(), found->values.size() * sizeof(double));
  }
}

SequenceModel load_model(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (!ck.config.contains("model")) throw std::runtime_error("checkpoint " + path.string() + " has no model config");
  SequenceModel model(ck.config.at("model").get<SeqModelConfig>(), ck.seed);
  restore_parameters(ck, model.parameters());
  return model;
}

}  // namespace pixelbytes
