#include "pixelbytes/sequence_builder.hpp"

#include <algorithm>
#include <stdexcept>

namespace pixelbytes {

ContextArray create_sequence_data(const TokenGrid& x) {
  const std::size_t T = x.frames, H = x.height, W = x.width;
  if (T == 0 || H == 0 || W == 0) throw std::invalid_argument("create_sequence_data: empty grid");
  if (x.values.size() != T * H * W) throw std::invalid_argument("create_sequence_data: size/shape mismatch");

  // Zero padding: one frame in front, one row/column on each side.
  const std::size_t PT = T + 1, PH = H + 2, PW = W + 2;
  std::vector<TokenId> padded(PT * PH * PW, vocab::kPad);
  auto p = [&](std::size_t t, std::size_t h, std::size_t w) -> TokenId& {
    return padded[(t * PH + h) * PW + w];
  };
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) p(t + 1, h + 1, w + 1) = x.at(t, h, w);

  // Each slice is a T x H x W window of the padded array at a fixed offset.
  struct Offset {
    std::size_t t, h, w;
  };
  constexpr std::array<Offset, kContextWidth> kSlices = {{
      {0, 0, 1},  // previous frame, row above
      {0, 1, 1},  // previous frame, same row
      {0, 2, 1},  // previous frame, row below
      {1, 0, 0},  // row above, column left
      {1, 1, 0},  // same row, column left
      {1, 0, 1},  // row above (replaced by the previous target below)
  }};

  ContextArray out;
  out.contexts.resize(T * H * W);
  out.targets = x.values;
  for (std::size_t s = 0; s < kContextWidth; ++s) {
    const auto [ot, oh, ow] = kSlices[s];
    std::size_t i = 0;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) out.contexts[i++][s] = p(t + ot, h + oh, w + ow);
  }
  for (std::size_t i = 1; i < out.size(); ++i) out.contexts[i][kContextWidth - 1] = out.targets[i - 1];
  return out;
}

ItemLayout ItemLayout::single(std::size_t frames, std::size_t height, std::size_t width) {
  ItemLayout layout;
  layout.blocks_.push_back({0, frames, height, width});
  layout.size_ = frames * height * width;
  return layout;
}

ItemLayout ItemLayout::from_stream(const TokenStream& stream) {
  validate(stream);
  ItemLayout layout;
  for (std::size_t k = 0; k < stream.segments.size(); ++k) {
    const Segment& seg = stream.segments[k];
    if (k > 0) layout.blocks_.push_back({static_cast<std::size_t>(seg.start) - 1, 1, 1, 1});
    Block b{seg.start, 1, 1, seg.length};
    if (seg.modality == Modality::image) {
      b = {seg.start, seg.frames, seg.height, static_cast<std::size_t>(seg.width) + 1};
    } else if (seg.modality == Modality::audio) {
      std::size_t c = seg.channels;
      if (c == 0) {
        const auto body = std::span(stream.tokens).subspan(seg.start, seg.length);
        const auto brk = std::find(body.begin(), body.end(), vocab::kLineBreak);
        c = brk == body.end() ? 1 : static_cast<std::size_t>(brk - body.begin());
      }
      if (c > 1) b = {seg.start, seg.length / (c + 1), 1, c + 1};
      else b = {seg.start, seg.length, 1, 1};
    }
    layout.blocks_.push_back(b);
  }
  layout.size_ = stream.tokens.size();
  return layout;
}

ContextRow ItemLayout::context_for(std::size_t pos, std::span<const TokenId> tokens) const {
  if (pos >= size_) throw std::out_of_range("context_for: position past the item layout");
  const auto it = std::upper_bound(blocks_.begin(), blocks_.end(), pos,
                                   [](std::size_t p, const Block& b) { return p < b.offset; });
  const Block& b = *(it - 1);
  const std::size_t local = pos - b.offset;
  const auto t = static_cast<std::ptrdiff_t>(local / (b.height * b.width));
  const auto h = static_cast<std::ptrdiff_t>((local / b.width) % b.height);
  const auto w = static_cast<std::ptrdiff_t>(local % b.width);
  auto read = [&](std::ptrdiff_t tt, std::ptrdiff_t hh, std::ptrdiff_t ww) -> TokenId {
    if (tt < 0 || hh < 0 || ww < 0 || hh >= static_cast<std::ptrdiff_t>(b.height) ||
        ww >= static_cast<std::ptrdiff_t>(b.width)) {
      return vocab::kPad;
    }
    return tokens[b.offset + (static_cast<std::size_t>(tt) * b.height + static_cast<std::size_t>(hh)) * b.width +
                  static_cast<std::size_t>(ww)];
  };
  return {read(t - 1, h - 1, w), read(t - 1, h, w), read(t - 1, h + 1, w),
          read(t, h - 1, w - 1), read(t, h, w - 1), pos > 0 ? tokens[pos - 1] : vocab::kPad};
}

ContextArray build_item(const TokenStream& stream) {
  const ItemLayout layout = ItemLayout::from_stream(stream);
  ContextArray out;
  out.contexts.reserve(stream.tokens.size());
  out.targets.reserve(stream.tokens.size());
  for (const Block& b : layout.blocks()) {
    TokenGrid grid{b.frames, b.height, b.width,
                   {stream.tokens.begin() + static_cast<std::ptrdiff_t>(b.offset),
                    stream.tokens.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size())}};
    ContextArray part = create_sequence_data(grid);
    out.contexts.insert(out.contexts.end(), part.contexts.begin(), part.contexts.end());
    out.targets.insert(out.targets.end(), part.targets.begin(), part.targets.end());
  }
  for (std::size_t i = 1; i < out.size(); ++i) out.contexts[i][kContextWidth - 1] = out.targets[i - 1];
  return out;
}

std::vector<Window3x3> build_context_2d(const TokenStream& stream) {
  validate(stream);
  std::vector<Window3x3> out(stream.tokens.size(), Window3x3{});
  std::vector<bool> done(stream.tokens.size(), false);

  for (const Segment& seg : stream.segments) {
    if (seg.modality != Modality::image) continue;
    const auto H = static_cast<std::ptrdiff_t>(seg.height);
    const auto W = static_cast<std::ptrdiff_t>(seg.width) + 1;
    for (std::size_t local = 0; local < seg.length; ++local) {
      const auto t = static_cast<std::ptrdiff_t>(local) / (H * W);
      const auto h = (static_cast<std::ptrdiff_t>(local) / W) % H;
      const auto w = static_cast<std::ptrdiff_t>(local) % W;
      Window3x3& win = out[seg.start + local];
      for (std::ptrdiff_t dh = -1; dh <= 1; ++dh) {
        for (std::ptrdiff_t dw = -1; dw <= 1; ++dw) {
          const auto hh = h + dh, ww = w + dw;
          if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
          win[static_cast<std::size_t>((dh + 1) * 3 + (dw + 1))] =
              stream.tokens[seg.start + static_cast<std::size_t>((t * H + hh) * W + ww)];
        }
      }
      done[seg.start + local] = true;
    }
  }
  for (std::size_t i = 0; i < stream.tokens.size(); ++i) {
    if (done[i]) continue;
    const std::size_t n = std::min<std::size_t>(i, 8);
    for (std::size_t k = 1; k <= n; ++k) out[i][9 - k] = stream.tokens[i - k];
  }
  return out;
}

WindowedDataset::WindowedDataset(std::vector<ContextArray> items, std::size_t seq_len, std::size_t stride)
    : items_(std::move(items)), seq_len_(seq_len), stride_(stride) {
  if (seq_len_ == 0) throw std::invalid_argument("seq_len must be >= 1");
  if (stride_ == 0 || stride_ > seq_len_) throw std::invalid_argument("stride must be in [1, seq_len]");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].contexts.size() != items_[i].targets.size()) {
      throw std::invalid_argument("context/target length mismatch in item " + std::to_string(i));
    }
    for (std::size_t start = 0; start < items_[i].size(); start += stride_) index_.emplace_back(i, start);
  }
}

WindowSample WindowedDataset::operator[](std::size_t i) const {
  const auto [item, start] = index_.at(i);
  const ContextArray& src = items_[item];
  const std::size_t n = src.size();
  WindowSample out;
  out.item = item;
  out.start = start;
  out.contexts.reserve(seq_len_);
  out.targets.reserve(seq_len_);
  out.next_contexts.reserve(seq_len_);
  for (std::size_t k = 0; k < seq_len_; ++k) {
    const std::size_t row = (start + k) % n;
    out.contexts.push_back(src.contexts[row]);
    out.targets.push_back(src.targets[row]);
    out.next_contexts.push_back(src.contexts[(row + 1) % n]);
  }
  return out;
}

Record reduce_modalities(const Record& record, std::size_t audio_factor, std::size_t image_factor) {
  if (audio_factor == 0 || image_factor == 0) throw std::invalid_argument("reduction factor must be >= 1");
  Record out;
  out.text = record.text;
  if (record.frames) {
    const FrameStack& f = *record.frames;
    FrameStack r{0, f.height, f.width, {}};
    const std::size_t plane = f.height * f.width;
    for (std::size_t t = 0; t < f.frames; t += image_factor) {
      r.indices.insert(r.indices.end(), f.indices.begin() + static_cast<std::ptrdiff_t>(t * plane),
                       f.indices.begin() + static_cast<std::ptrdiff_t>((t + 1) * plane));
      ++r.frames;
    }
    out.frames = std::move(r);
  }
  out.audio.reserve(record.audio.size());
  for (const auto& ch : record.audio) {
    std::vector<double> kept;
    kept.reserve(ch.size() / audio_factor + 1);
    for (std::size_t i = 0; i < ch.size(); i += audio_factor) kept.push_back(ch[i]);
    out.audio.push_back(std::move(kept));
  }
  return out;
}

TokenStream reduce_modalities(const TokenStream& stream, std::size_t audio_factor, std::size_t image_factor) {
  if (audio_factor == 1 && image_factor == 1) return stream;
  return encode_record(reduce_modalities(decode(stream), audio_factor, image_factor), AudioScaling::raw);
}

}  // namespace pixelbytes
