#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

inline constexpr std::size_t kContextWidth = 6;

// Slot order is documented on create_sequence_data.
using ContextRow = std::array<TokenId, kContextWidth>;

// T x H x W array of token ids, row-major.
struct TokenGrid {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<TokenId> values;

  TokenId at(std::size_t t, std::size_t h, std::size_t w) const {
    return values[(t * height + h) * width + w];
  }
};

struct ContextArray {
  std::vector<ContextRow> contexts;
  std::vector<TokenId> targets;

  std::size_t size() const { return targets.size(); }
  bool operator==(const ContextArray&) const = default;
};

// Causal spatio-temporal contexts for every cell of X, in raster order.
// For the target at (t, h, w) the row holds
//   [X(t-1,h-1,w), X(t-1,h,w), X(t-1,h+1,w), X(t,h-1,w-1), X(t,h,w-1), prev]
// where reads outside the array give 0 and prev is the previous target in
// raster order (0 for the first cell).
ContextArray create_sequence_data(const TokenGrid& grid);

// A contiguous run of an item's tokens laid out as a T x H x W grid.
struct Block {
  std::size_t offset = 0;
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return frames * height * width; }
};

// Grid layout of a token stream: text is a single row, image segments keep
// their row/frame structure (line breaks included as the last column), and
// multichannel audio becomes one frame per time step. Each modality switch
// token is its own 1x1x1 block.
class ItemLayout {
 public:
  static ItemLayout from_stream(const TokenStream& stream);
  static ItemLayout single(std::size_t frames, std::size_t height, std::size_t width);

  std::span<const Block> blocks() const { return blocks_; }
  std::size_t size() const { return size_; }

  // Context row for position `pos` given the item's tokens; only
  // tokens[0, pos) are read.
  ContextRow context_for(std::size_t pos, std::span<const TokenId> tokens) const;

 private:
  std::vector<Block> blocks_;
  std::size_t size_ = 0;
};

// Context array of a whole item: per-block contexts with the previous-target
// column chained across block boundaries.
ContextArray build_item(const TokenStream& stream);

// First-generation 3x3 windows. Image tokens get their spatial neighbourhood
// (row-major, centre at index 4); other tokens get up to 8 preceding tokens
// right-aligned, the nearest at index 8.
using Window3x3 = std::array<TokenId, 9>;
std::vector<Window3x3> build_context_2d(const TokenStream& stream);

struct WindowSample {
  std::size_t item = 0;
  std::size_t start = 0;
  std::vector<ContextRow> contexts;
  std::vector<TokenId> targets;
  // Context row that follows each row inside the item (circularly).
  std::vector<ContextRow> next_contexts;
};

// Fixed-length windows over a list of items. Windows start at multiples of
// `stride` below the item length; rows past the end wrap to the item start.
class WindowedDataset {
 public:
  WindowedDataset(std::vector<ContextArray> items, std::size_t seq_len, std::size_t stride);

  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t stride() const { return stride_; }
  std::span<const ContextArray> items() const { return items_; }

  WindowSample operator[](std::size_t i) const;

 private:
  std::vector<ContextArray> items_;
  std::size_t seq_len_;
  std::size_t stride_;
  std::vector<std::pair<std::size_t, std::size_t>> index_;
};

// Temporal subsampling: audio samples and image frames whose index is a
// multiple of the factor are kept; text is untouched.
Record reduce_modalities(const Record& record, std::size_t audio_factor, std::size_t image_factor);

// Same on an encoded record (decode, reduce, re-encode without rescaling).
TokenStream reduce_modalities(const TokenStream& stream, std::size_t audio_factor,
                              std::size_t image_factor);

}  // namespace pixelbytes
