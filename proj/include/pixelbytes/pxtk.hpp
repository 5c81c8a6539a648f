#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

// PXTK: binary container for tokenized corpora. All integers little-endian.
//
//   "PXTK" | u8 version (1) | u32 record count
//   per record:
//     u32 token count | u8 segment count
//     per segment: u8 modality | u32 start | u32 length | [u16 T, H, W if image]
//     token ids as u16
inline constexpr std::uint8_t kPxtkVersion = 1;

void write_pxtk(std::ostream& out, std::span<const TokenStream> records);
std::vector<TokenStream> read_pxtk(std::istream& in);

void save_pxtk(const std::filesystem::path& path, std::span<const TokenStream> records);
std::vector<TokenStream> load_pxtk(const std::filesystem::path& path);

}  // namespace pixelbytes
