#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "pixelbytes/parameter.hpp"
#include "pixelbytes/sequence_builder.hpp"

namespace pixelbytes {

// Internal channel count of the patch embedding for output width `dim`.
constexpr std::size_t pxby_internal_dim(std::size_t dim) { return dim / 9 > 9 ? dim / 9 : 9; }

// Patch embedding over 3x3 token windows: per-cell embedding, 3x3
// convolution (padding 1, no bias), sigmoid-gated mix of the two, projection
// to `dim` and layer normalisation.
class PxByEmbed {
 public:
  static constexpr double kLayerNormEps = 1e-5;

  PxByEmbed(std::size_t vocab, std::size_t dim, Rng& rng);

  std::size_t vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  std::size_t internal_dim() const { return internal_; }

  // windows: B*L windows; returns (B*L) x dim, row b*L + l.
  Mat forward(std::span<const Window3x3> windows);

  // Accumulates parameter gradients for the cached forward pass.
  void backward(const Mat& upstream);

  ParameterList parameters();
  void zero_grad();

  // Pre-normalisation projection of the last forward pass.
  const Mat& last_projection() const { return projection_out_; }

  Parameter embedding;   // vocab x E
  Parameter patch;       // E x (E*9): [out][in*9 + ki*3 + kj]
  Parameter projection;  // (E*9) x dim
  Parameter gate;        // 1 x 9 logits
  Parameter ln_gain;     // 1 x dim
  Parameter ln_bias;     // 1 x dim

 private:
  std::size_t vocab_;
  std::size_t dim_;
  std::size_t internal_;

  bool cached_ = false;
  std::vector<Window3x3> ids_;
  std::vector<Mat> emb_;    // per token, E x 9
  std::vector<Mat> cols_;   // per token, (E*9) x 9
  std::vector<Mat> patch_out_;
  Mat flat_;                // N x (E*9)
  Mat projection_out_;      // N x dim
  Mat normalized_;          // N x dim
  Eigen::VectorXd inv_std_;
};

}  // namespace pixelbytes
