#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pixelbytes/parameter.hpp"

namespace pixelbytes {

// One LSTM direction. Sequences are stored time-major: row t*batch + b.
// Gate order in the fused weights is (input, forget, cell, output).
class LstmLayer {
 public:
  LstmLayer(const std::string& name, std::size_t input, std::size_t hidden, bool reverse, Rng& rng);

  std::size_t input_size() const { return input_; }
  std::size_t hidden_size() const { return hidden_; }

  Mat forward(const Mat& x, std::size_t batch, std::size_t length);
  // Accumulates parameter gradients; returns d(loss)/d(x).
  Mat backward(const Mat& dh);

  ParameterList parameters() { return {&w_input, &w_hidden, &bias}; }

  Parameter w_input;   // input x 4H
  Parameter w_hidden;  // H x 4H
  Parameter bias;      // 1 x 4H

 private:
  std::size_t input_;
  std::size_t hidden_;
  bool reverse_;

  std::size_t batch_ = 0;
  std::size_t length_ = 0;
  Mat x_;
  Mat gates_;  // activated gates
  Mat cells_;
  Mat hidden_out_;
};

// Stack of LSTM layers, optionally bidirectional (every layer runs a
// reversed-time pass whose output is concatenated after the forward pass).
class Lstm {
 public:
  Lstm(std::size_t input, std::size_t hidden, std::size_t layers, bool bidirectional, Rng& rng);

  std::size_t output_size() const { return hidden_ * (bidirectional_ ? 2 : 1); }

  Mat forward(const Mat& x, std::size_t batch, std::size_t length);
  Mat backward(const Mat& dh);

  ParameterList parameters();

 private:
  std::size_t hidden_;
  bool bidirectional_;
  std::vector<LstmLayer> forward_layers_;
  std::vector<LstmLayer> backward_layers_;
};

}  // namespace pixelbytes
