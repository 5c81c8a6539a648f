#include "pixelbytes/pxby_embed.hpp"

#include <cmath>
#include <stdexcept>

namespace pixelbytes {
namespace {

constexpr int kK = 3;
constexpr int kCells = kK * kK;

}  // namespace

PxByEmbed::PxByEmbed(std::size_t vocab, std::size_t dim, Rng& rng)
    : vocab_(vocab),
      dim_(dim),
      internal_(pxby_internal_dim(dim)) {
  if (vocab == 0 || dim == 0) throw std::invalid_argument("PxByEmbed: vocab and dim must be positive");
  const auto V = static_cast<Eigen::Index>(vocab), D = static_cast<Eigen::Index>(dim),
             E = static_cast<Eigen::Index>(internal_);
  embedding = Parameter("pxby.embedding", {vocab, internal_}, V, E);
  patch = Parameter("pxby.patch", {internal_, internal_, kK, kK}, E, E * kCells);
  projection = Parameter("pxby.projection", {internal_ * kCells, dim}, E * kCells, D);
  gate = Parameter("pxby.gate", {1, 1, kK, kK}, 1, kCells);
  ln_gain = Parameter("pxby.ln_gain", {dim}, 1, D);
  ln_bias = Parameter("pxby.ln_bias", {dim}, 1, D);

  fill_uniform(embedding.value, 1.0 / std::sqrt(static_cast<double>(E)), rng);
  embedding.value.row(0).setZero();
  fill_uniform(patch.value, 1.0 / std::sqrt(static_cast<double>(E * kCells)), rng);
  fill_uniform(projection.value, 1.0 / std::sqrt(static_cast<double>(E * kCells)), rng);
  ln_gain.value.setOnes();
}

ParameterList PxByEmbed::parameters() { return {&embedding, &patch, &projection, &gate, &ln_gain, &ln_bias}; }

void PxByEmbed::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Mat PxByEmbed::forward(std::span<const Window3x3> windows) {
  const auto N = static_cast<Eigen::Index>(windows.size());
  const auto E = static_cast<Eigen::Index>(internal_);
  for (const Window3x3& w : windows) {
    for (TokenId id : w) {
      if (id >= vocab_) throw std::invalid_argument("PxByEmbed: token id " + std::to_string(id) + " >= vocab");
    }
  }
  ids_.assign(windows.begin(), windows.end());
  emb_.assign(static_cast<std::size_t>(N), Mat());
  cols_.assign(static_cast<std::size_t>(N), Mat());
  patch_out_.assign(static_cast<std::size_t>(N), Mat());
  flat_.resize(N, E * kCells);

  RowVec s(kCells);
  for (int p = 0; p < kCells; ++p) s(p) = sigmoid(gate.value(0, p));

  for (Eigen::Index n = 0; n < N; ++n) {
    const auto& win = ids_[static_cast<std::size_t>(n)];
    Mat emb(E, kCells);
    for (int p = 0; p < kCells; ++p) emb.col(p) = embedding.value.row(win[static_cast<std::size_t>(p)]).transpose();

    // im2col: column p holds the (channel, kernel offset) neighbourhood of cell p.
    Mat col = Mat::Zero(E * kCells, kCells);
    for (int i = 0; i < kK; ++i) {
      for (int j = 0; j < kK; ++j) {
        for (int ki = 0; ki < kK; ++ki) {
          for (int kj = 0; kj < kK; ++kj) {
            const int si = i + ki - 1, sj = j + kj - 1;
            if (si < 0 || si >= kK || sj < 0 || sj >= kK) continue;
            for (Eigen::Index c = 0; c < E; ++c) col(c * kCells + ki * kK + kj, i * kK + j) = emb(c, si * kK + sj);
          }
        }
      }
    }
    Mat patch_out = patch.value * col;

    // Row-major E x 9 block flattens to channel-major order.
    Mat combined(E, kCells);
    for (int p = 0; p < kCells; ++p) combined.col(p) = s(p) * emb.col(p) + (1.0 - s(p)) * patch_out.col(p);
    flat_.row(n) = Eigen::Map<const RowVec>(combined.data(), E * kCells);

    emb_[static_cast<std::size_t>(n)] = std::move(emb);
    cols_[static_cast<std::size_t>(n)] = std::move(col);
    patch_out_[static_cast<std::size_t>(n)] = std::move(patch_out);
  }

  projection_out_ = flat_ * projection.value;

  const auto D = static_cast<Eigen::Index>(dim_);
  normalized_.resize(N, D);
  inv_std_.resize(N);
  Mat out(N, D);
  for (Eigen::Index n = 0; n < N; ++n) {
    const double mean = projection_out_.row(n).mean();
    const double var = (projection_out_.row(n).array() - mean).square().mean();
    inv_std_(n) = 1.0 / std::sqrt(var + kLayerNormEps);
    normalized_.row(n) = (projection_out_.row(n).array() - mean) * inv_std_(n);
    out.row(n) = normalized_.row(n).cwiseProduct(ln_gain.value.row(0)) + ln_bias.value.row(0);
  }
  cached_ = true;
  return out;
}

void PxByEmbed::backward(const Mat& upstream) {
  if (!cached_) throw std::logic_error("PxByEmbed::backward called without a cached forward pass");
  const auto N = normalized_.rows();
  const auto D = static_cast<Eigen::Index>(dim_);
  const auto E = static_cast<Eigen::Index>(internal_);
  if (upstream.rows() != N || upstream.cols() != D) throw std::invalid_argument("PxByEmbed::backward: shape mismatch");

  ln_gain.grad.row(0) += upstream.cwiseProduct(normalized_).colwise().sum();
  ln_bias.grad.row(0) += upstream.colwise().sum();

  Mat dproj(N, D);
  for (Eigen::Index n = 0; n < N; ++n) {
    const RowVec dxhat = upstream.row(n).cwiseProduct(ln_gain.value.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(normalized_.row(n)).mean();
    dproj.row(n) = inv_std_(n) * (dxhat.array() - m1 - normalized_.row(n).array() * m2);
  }
  projection.grad += flat_.transpose() * dproj;
  const Mat dflat = dproj * projection.value.transpose();

  RowVec s(kCells);
  for (int p = 0; p < kCells; ++p) s(p) = sigmoid(gate.value(0, p));

  for (Eigen::Index n = 0; n < N; ++n) {
    const auto idx = static_cast<std::size_t>(n);
    const Mat& emb = emb_[idx];
    const Mat& patch_out = patch_out_[idx];
    Mat dcombined = Eigen::Map<const Mat>(dflat.row(n).data(), E, kCells);

    Mat demb(E, kCells), dpatch(E, kCells);
    for (int p = 0; p < kCells; ++p) {
      const double ds = dcombined.col(p).dot(emb.col(p) - patch_out.col(p));
      gate.grad(0, p) += ds * s(p) * (1.0 - s(p));
      demb.col(p) = s(p) * dcombined.col(p);
      dpatch.col(p) = (1.0 - s(p)) * dcombined.col(p);
    }
    patch.grad += dpatch * cols_[idx].transpose();
    const Mat dcol = patch.value.transpose() * dpatch;
    for (int i = 0; i < kK; ++i) {
      for (int j = 0; j < kK; ++j) {
        for (int ki = 0; ki < kK; ++ki) {
          for (int kj = 0; kj < kK; ++kj) {
            const int si = i + ki - 1, sj = j + kj - 1;
            if (si < 0 || si >= kK || sj < 0 || sj >= kK) continue;
            for (Eigen::Index c = 0; c < E; ++c) demb(c, si * kK + sj) += dcol(c * kCells + ki * kK + kj, i * kK + j);
          }
        }
      }
    }
    const auto& win = ids_[idx];
    for (int p = 0; p < kCells; ++p) {
      const TokenId id = win[static_cast<std::size_t>(p)];
      if (id == vocab::kPad) continue;
      embedding.grad.row(id) += demb.col(p).transpose();
    }
  }
}

}  // namespace pixelbytes
