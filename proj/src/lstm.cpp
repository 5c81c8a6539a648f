#include "pixelbytes/lstm.hpp"

#include <cmath>
#include <stdexcept>

namespace pixelbytes {

LstmLayer::LstmLayer(const std::string& name, std::size_t input, std::size_t hidden, bool reverse, Rng& rng)
    : w_input(name + ".w_input", {input, 4 * hidden}, static_cast<Eigen::Index>(input),
              static_cast<Eigen::Index>(4 * hidden)),
      w_hidden(name + ".w_hidden", {hidden, 4 * hidden}, static_cast<Eigen::Index>(hidden),
               static_cast<Eigen::Index>(4 * hidden)),
      bias(name + ".bias", {4 * hidden}, 1, static_cast<Eigen::Index>(4 * hidden)),
      input_(input),
      hidden_(hidden),
      reverse_(reverse) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(w_input.value, bound, rng);
  fill_uniform(w_hidden.value, bound, rng);
  fill_uniform(bias.value, bound, rng);
  const auto H = static_cast<Eigen::Index>(hidden);
  bias.value.middleCols(H, H).array() += 1.0;  // forget gate
}

Mat LstmLayer::forward(const Mat& x, std::size_t batch, std::size_t length) {
  const auto B = static_cast<Eigen::Index>(batch);
  const auto H = static_cast<Eigen::Index>(hidden_);
  if (x.rows() != B * static_cast<Eigen::Index>(length) || x.cols() != static_cast<Eigen::Index>(input_)) {
    throw std::invalid_argument("LstmLayer::forward: input shape mismatch");
  }
  batch_ = batch;
  length_ = length;
  x_ = x;
  gates_ = x * w_input.value;
  gates_.rowwise() += bias.value.row(0);
  cells_.resize(x.rows(), H);
  hidden_out_.resize(x.rows(), H);

  Mat h_prev = Mat::Zero(B, H), c_prev = Mat::Zero(B, H);
  for (std::size_t step = 0; step < length; ++step) {
    const auto t = static_cast<Eigen::Index>(reverse_ ? length - 1 - step : step);
    auto g = gates_.middleRows(t * B, B);
    g.noalias() += h_prev * w_hidden.value;
    g.leftCols(2 * H) = g.leftCols(2 * H).unaryExpr([](double v) { return sigmoid(v); });
    g.middleCols(2 * H, H) = g.middleCols(2 * H, H).array().tanh();
    g.rightCols(H) = g.rightCols(H).unaryExpr([](double v) { return sigmoid(v); });

    auto c = cells_.middleRows(t * B, B);
    c = g.middleCols(H, H).cwiseProduct(c_prev) + g.leftCols(H).cwiseProduct(g.middleCols(2 * H, H));
    auto h = hidden_out_.middleRows(t * B, B);
    h = g.rightCols(H).cwiseProduct(c.array().tanh().matrix());
    h_prev = h;
    c_prev = c;
  }
  return hidden_out_;
}

Mat LstmLayer::backward(const Mat& dh) {
  const auto B = static_cast<Eigen::Index>(batch_);
  const auto H = static_cast<Eigen::Index>(hidden_);
  if (dh.rows() != hidden_out_.rows() || dh.cols() != H) throw std::invalid_argument("LstmLayer::backward: shape mismatch");

  Mat dgates(dh.rows(), 4 * H);
  Mat dh_next = Mat::Zero(B, H), dc_next = Mat::Zero(B, H);
  for (std::size_t step = 0; step < length_; ++step) {
    // Walk the recurrence backwards in processing order.
    const std::size_t pos = length_ - 1 - step;
    const auto t = static_cast<Eigen::Index>(reverse_ ? length_ - 1 - pos : pos);
    const bool first = pos == 0;
    const auto t_prev = static_cast<Eigen::Index>(reverse_ ? t + 1 : t - 1);

    const auto g = gates_.middleRows(t * B, B);
    const auto i = g.leftCols(H).array();
    const auto f = g.middleCols(H, H).array();
    const auto cand = g.middleCols(2 * H, H).array();
    const auto o = g.rightCols(H).array();
    const Eigen::ArrayXXd tc = cells_.middleRows(t * B, B).array().tanh();

    const Eigen::ArrayXXd dht = (dh.middleRows(t * B, B) + dh_next).array();
    const Eigen::ArrayXXd dc = dht * o * (1.0 - tc.square()) + dc_next.array();
    Eigen::ArrayXXd c_prev = Eigen::ArrayXXd::Zero(B, H);
    if (!first) c_prev = cells_.middleRows(t_prev * B, B).array();

    auto dg = dgates.middleRows(t * B, B);
    dg.leftCols(H) = (dc * cand * i * (1.0 - i)).matrix();
    dg.middleCols(H, H) = (dc * c_prev * f * (1.0 - f)).matrix();
    dg.middleCols(2 * H, H) = (dc * i * (1.0 - cand.square())).matrix();
    dg.rightCols(H) = (dht * tc * o * (1.0 - o)).matrix();

    if (!first) w_hidden.grad.noalias() += hidden_out_.middleRows(t_prev * B, B).transpose() * dg;
    dh_next.noalias() = dg * w_hidden.value.transpose();
    dc_next = (dc * f).matrix();
  }
  w_input.grad.noalias() += x_.transpose() * dgates;
  bias.grad.row(0) += dgates.colwise().sum();
  return dgates * w_input.value.transpose();
}

Lstm::Lstm(std::size_t input, std::size_t hidden, std::size_t layers, bool bidirectional, Rng& rng)
    : hidden_(hidden), bidirectional_(bidirectional) {
  if (hidden == 0 || layers == 0) throw std::invalid_argument("Lstm: hidden size and layer count must be positive");
  std::size_t in = input;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string prefix = "lstm.l" + std::to_string(l);
    forward_layers_.emplace_back(prefix + ".fwd", in, hidden, false, rng);
    if (bidirectional) backward_layers_.emplace_back(prefix + ".bwd", in, hidden, true, rng);
    in = output_size();
  }
}

ParameterList Lstm::parameters() {
  ParameterList out;
  for (std::size_t l = 0; l < forward_layers_.size(); ++l) {
    for (Parameter* p : forward_layers_[l].parameters()) out.push_back(p);
    if (bidirectional_) {
      for (Parameter* p : backward_layers_[l].parameters()) out.push_back(p);
    }
  }
  return out;
}

Mat Lstm::forward(const Mat& x, std::size_t batch, std::size_t length) {
  Mat h = x;
  for (std::size_t l = 0; l < forward_layers_.size(); ++l) {
    Mat fwd = forward_layers_[l].forward(h, batch, length);
    if (!bidirectional_) {
      h = std::move(fwd);
      continue;
    }
    Mat bwd = backward_layers_[l].forward(h, batch, length);
    h.resize(fwd.rows(), fwd.cols() + bwd.cols());
    h << fwd, bwd;
  }
  return h;
}

Mat Lstm::backward(const Mat& dh) {
  Mat d = dh;
  const auto H = static_cast<Eigen::Index>(hidden_);
  for (std::size_t k = forward_layers_.size(); k-- > 0;) {
    if (!bidirectional_) {
      d = forward_layers_[k].backward(d);
      continue;
    }
    Mat dx = forward_layers_[k].backward(d.leftCols(H));
    dx += backward_layers_[k].backward(d.rightCols(H));
    d = std::move(dx);
  }
  return d;
}

}  // namespace pixelbytes
