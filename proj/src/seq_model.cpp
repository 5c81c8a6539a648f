#include "pixelbytes/seq_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pixelbytes {
namespace {

constexpr auto kSlots = static_cast<Eigen::Index>(kContextWidth);

KeepMask default_keep_mask(std::size_t batch, std::size_t length, Rng& rng) {
  KeepMask keep(batch * length * kContextWidth, 0);
  const std::size_t clean = (3 * length + 3) / 4;
  std::vector<std::size_t> order(length);
  for (std::size_t b = 0; b < batch; ++b) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = 0; k < clean; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, length - 1);
      std::swap(order[k], order[pick(rng)]);
      const std::size_t l = order[k];
      std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>((b * length + l) * kContextWidth), kContextWidth, 1);
    }
  }
  return keep;
}

}  // namespace

std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::predictive: return "predictive";
    case Mode::autoregressive: return "autoregressive";
    case Mode::diffusion: return "diffusion";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "predictive") return Mode::predictive;
  if (name == "autoregressive") return Mode::autoregressive;
  if (name == "diffusion") return Mode::diffusion;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

void SeqModelConfig::validate() const {
  if (vocab < 2) throw std::invalid_argument("vocab must be >= 2");
  if (embed_dim == 0 || embed_dim % kContextWidth != 0) {
    throw std::invalid_argument("embed_dim must be a positive multiple of 6");
  }
  if (hidden == 0 || layers == 0) throw std::invalid_argument("hidden and layers must be positive");
  if (mode == Mode::diffusion && diffusion_steps == 0) throw std::invalid_argument("diffusion_steps must be >= 1");
}

void to_json(nlohmann::json& j, const SeqModelConfig& c) {
  j = nlohmann::json{{"mode", mode_name(c.mode)},     {"vocab", c.vocab},
                     {"embed_dim", c.embed_dim},      {"hidden", c.hidden},
                     {"layers", c.layers},            {"bidirectional", c.bidirectional},
                     {"diffusion_steps", c.diffusion_steps}};
}

void from_json(const nlohmann::json& j, SeqModelConfig& c) {
  SeqModelConfig d;
  c.mode = parse_mode(j.value("mode", std::string(mode_name(d.mode))));
  c.vocab = j.value("vocab", d.vocab);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.hidden = j.value("hidden", d.hidden);
  c.layers = j.value("layers", d.layers);
  c.bidirectional = j.value("bidirectional", d.bidirectional);
  c.diffusion_steps = j.value("diffusion_steps", d.diffusion_steps);
}

namespace {
const SeqModelConfig& validated(const SeqModelConfig& config) {
  config.validate();
  return config;
}
}  // namespace

SequenceModel::SequenceModel(const SeqModelConfig& config, std::uint64_t seed)
    : SequenceModel(validated(config), Rng(seed)) {}

SequenceModel::SequenceModel(const SeqModelConfig& config, Rng&& rng)
    : embedding("embed.table", {config.vocab, config.position_dim()}, static_cast<Eigen::Index>(config.vocab),
                static_cast<Eigen::Index>(config.position_dim())),
      lstm(config.embed_dim, config.hidden, config.layers, config.bidirectional, rng),
      head_weight("head.weight", {config.hidden * (config.bidirectional ? 2 : 1), config.output_width()},
                  static_cast<Eigen::Index>(config.hidden * (config.bidirectional ? 2 : 1)),
                  static_cast<Eigen::Index>(config.output_width())),
      head_bias("head.bias", {config.output_width()}, 1, static_cast<Eigen::Index>(config.output_width())),
      config_(config) {
  fill_uniform(embedding.value, 1.0, rng);
  embedding.value.row(0).setZero();
  const double bound = 1.0 / std::sqrt(static_cast<double>(head_weight.value.rows()));
  fill_uniform(head_weight.value, bound, rng);
  fill_uniform(head_bias.value, bound, rng);
}

ParameterList SequenceModel::parameters() {
  ParameterList out{&embedding};
  for (Parameter* p : lstm.parameters()) out.push_back(p);
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

void SequenceModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

std::size_t SequenceModel::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Mat SequenceModel::embed_contexts(std::span<const ContextRow> contexts) const {
  const auto E = static_cast<Eigen::Index>(config_.position_dim());
  Mat out(static_cast<Eigen::Index>(contexts.size()), E * kSlots);
  for (std::size_t n = 0; n < contexts.size(); ++n) {
    for (std::size_t k = 0; k < kContextWidth; ++k) {
      const TokenId id = contexts[n][k];
      if (id >= config_.vocab) throw std::invalid_argument("token id " + std::to_string(id) + " >= vocab");
      out.block(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k) * E, 1, E) = embedding.value.row(id);
    }
  }
  return out;
}

Mat SequenceModel::last_lstm_input() const {
  if (!cached_) throw std::logic_error("no forward pass cached");
  Mat out(lstm_in_.rows(), lstm_in_.cols());
  for (std::size_t b = 0; b < batch_; ++b)
    for (std::size_t t = 0; t < length_; ++t)
      out.row(static_cast<Eigen::Index>(b * length_ + t)) = lstm_in_.row(static_cast<Eigen::Index>(t * batch_ + b));
  return out;
}

ForwardOutput SequenceModel::forward(std::span<const ContextRow> contexts, std::size_t batch, std::size_t length,
                                     Rng& rng, const NoiseControl& noise, std::optional<std::size_t> position) {
  if (batch == 0 || length == 0 || contexts.size() != batch * length) {
    throw std::invalid_argument("forward: expected batch*length context rows");
  }
  if (position && *position >= length) throw std::invalid_argument("forward: position out of range");
  const Mat embedded = embed_contexts(contexts);

  batch_ = batch;
  length_ = length;
  position_ = position;
  contexts_.assign(contexts.begin(), contexts.end());
  const auto B = static_cast<Eigen::Index>(batch);
  const auto D = embedded.cols();
  lstm_in_.resize(embedded.rows(), D);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < length; ++t)
      lstm_in_.row(static_cast<Eigen::Index>(t * batch + b)) = embedded.row(static_cast<Eigen::Index>(b * length + t));

  ForwardOutput out;
  alpha_ = 1.0;
  keep_.clear();
  if (config_.mode == Mode::diffusion) {
    const int n_d = static_cast<int>(config_.diffusion_steps);
    int step = 0;
    if (noise.step) {
      step = *noise.step;
      if (step < 0 || step > n_d) throw std::invalid_argument("diffusion step outside [0, n_d]");
    } else {
      step = std::uniform_int_distribution<int>(1, n_d)(rng);
    }
    if (noise.keep) {
      if (noise.keep->size() != batch * length * kContextWidth) throw std::invalid_argument("keep mask shape mismatch");
      keep_ = *noise.keep;
    } else {
      keep_ = default_keep_mask(batch, length, rng);
    }
    alpha_ = 1.0 - static_cast<double>(step) / static_cast<double>(n_d);
    const auto E = static_cast<Eigen::Index>(config_.position_dim());
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < length; ++t) {
        const auto row = static_cast<Eigen::Index>(t * batch + b);
        for (std::size_t k = 0; k < kContextWidth; ++k) {
          if (keep_[(b * length + t) * kContextWidth + k]) continue;
          auto block = lstm_in_.block(row, static_cast<Eigen::Index>(k) * E, 1, E);
          for (Eigen::Index e = 0; e < E; ++e) block(0, e) = (1.0 - alpha_) * gauss(rng) + alpha_ * block(0, e);
        }
      }
    }
    out.step = step;
    out.keep = keep_;
  }

  lstm_out_ = lstm.forward(lstm_in_, batch, length);

  if (position) {
    out.logits = lstm_out_.middleRows(static_cast<Eigen::Index>(*position) * B, B) * head_weight.value;
    out.logits.rowwise() += head_bias.value.row(0);
  } else {
    Mat tm = lstm_out_ * head_weight.value;
    tm.rowwise() += head_bias.value.row(0);
    out.logits.resize(tm.rows(), tm.cols());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < length; ++t)
        out.logits.row(static_cast<Eigen::Index>(b * length + t)) = tm.row(static_cast<Eigen::Index>(t * batch + b));
  }
  cached_ = true;
  return out;
}

Mat SequenceModel::logits_at(std::size_t position) const {
  if (!cached_) throw std::logic_error("SequenceModel::logits_at called without a forward pass");
  if (position >= length_) throw std::invalid_argument("logits_at: position out of range");
  const auto B = static_cast<Eigen::Index>(batch_);
  Mat logits = lstm_out_.middleRows(static_cast<Eigen::Index>(position) * B, B) * head_weight.value;
  logits.rowwise() += head_bias.value.row(0);
  return logits;
}

void SequenceModel::backward(const Mat& dlogits) {
  if (!cached_) throw std::logic_error("SequenceModel::backward called without a cached forward pass");
  const auto B = static_cast<Eigen::Index>(batch_);
  Mat dh = Mat::Zero(lstm_out_.rows(), lstm_out_.cols());
  if (position_) {
    if (dlogits.rows() != B || dlogits.cols() != head_weight.value.cols()) {
      throw std::invalid_argument("backward: gradient shape mismatch");
    }
    const auto rows = lstm_out_.middleRows(static_cast<Eigen::Index>(*position_) * B, B);
    head_weight.grad.noalias() += rows.transpose() * dlogits;
    head_bias.grad.row(0) += dlogits.colwise().sum();
    dh.middleRows(static_cast<Eigen::Index>(*position_) * B, B) = dlogits * head_weight.value.transpose();
  } else {
    if (dlogits.rows() != lstm_out_.rows() || dlogits.cols() != head_weight.value.cols()) {
      throw std::invalid_argument("backward: gradient shape mismatch");
    }
    Mat tm(dlogits.rows(), dlogits.cols());
    for (std::size_t b = 0; b < batch_; ++b)
      for (std::size_t t = 0; t < length_; ++t)
        tm.row(static_cast<Eigen::Index>(t * batch_ + b)) = dlogits.row(static_cast<Eigen::Index>(b * length_ + t));
    head_weight.grad.noalias() += lstm_out_.transpose() * tm;
    head_bias.grad.row(0) += tm.colwise().sum();
    dh.noalias() = tm * head_weight.value.transpose();
  }

  const Mat dx = lstm.backward(dh);
  const auto E = static_cast<Eigen::Index>(config_.position_dim());
  for (std::size_t b = 0; b < batch_; ++b) {
    for (std::size_t t = 0; t < length_; ++t) {
      const auto row = static_cast<Eigen::Index>(t * batch_ + b);
      const std::size_t n = b * length_ + t;
      for (std::size_t k = 0; k < kContextWidth; ++k) {
        const TokenId id = contexts_[n][k];
        if (id == vocab::kPad) continue;
        const double scale = (!keep_.empty() && !keep_[n * kContextWidth + k]) ? alpha_ : 1.0;
        embedding.grad.row(id) += scale * dx.block(row, static_cast<Eigen::Index>(k) * E, 1, E);
      }
    }
  }
}

Mat softmax_blocks(const Mat& logits, std::size_t vocab, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  const auto V = static_cast<Eigen::Index>(vocab);
  if (logits.cols() % V != 0) throw std::invalid_argument("softmax_blocks: width is not a multiple of vocab");
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c0 = 0; c0 < logits.cols(); c0 += V) {
      const auto z = logits.block(r, c0, 1, V).array() / temperature;
      const double m = z.maxCoeff();
      auto e = out.block(r, c0, 1, V);
      e = (z - m).exp().matrix();
      e /= e.sum();
    }
  }
  return out;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  return last_positive;
}

GenerationResult generate(SequenceModel& model, std::span<const ContextRow> seed, const GenerationOptions& options,
                          Rng& rng) {
  if (options.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
  GenerationResult result;
  result.contexts.assign(seed.begin(), seed.end());
  if (options.max_len == 0 || seed.empty()) return result;

  const SeqModelConfig& cfg = model.config();
  const std::size_t window = seed.size();
  const auto V = static_cast<Eigen::Index>(cfg.vocab);

  auto sample_row = [&](const Mat& logits_row) {
    const Mat p = softmax_blocks(logits_row, cfg.vocab, options.temperature);
    ContextRow row{};
    for (std::size_t k = 0; k < kContextWidth; ++k) {
      row[k] = static_cast<TokenId>(sample_categorical(
          std::span<const double>(p.data() + static_cast<Eigen::Index>(k) * V, static_cast<std::size_t>(V)), rng));
    }
    return row;
  };

  if (cfg.mode == Mode::diffusion) {
    KeepMask keep = options.keep.value_or(KeepMask(window * kContextWidth, 0));
    if (keep.size() != window * kContextWidth) throw std::invalid_argument("generate: keep mask shape mismatch");
    for (std::size_t j = 0; j < options.max_len; ++j) {
      std::vector<std::size_t> open;
      for (std::size_t l = 0; l < window; ++l) {
        for (std::size_t k = 0; k < kContextWidth; ++k) {
          if (!keep[l * kContextWidth + k]) {
            open.push_back(l);
            break;
          }
        }
      }
      if (open.empty()) break;
      const std::size_t ps = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
      NoiseControl noise{static_cast<int>(cfg.diffusion_steps), keep};
      const ForwardOutput out = model.forward(result.contexts, 1, window, rng, noise, ps);
      const ContextRow row = sample_row(out.logits);
      for (std::size_t k = 0; k < kContextWidth; ++k) {
        auto& flag = keep[ps * kContextWidth + k];
        if (flag) continue;
        result.contexts[ps][k] = row[k];
        result.tokens.push_back(row[k]);
        flag = 1;
      }
    }
    return result;
  }

  std::vector<TokenId> history = options.history;
  for (std::size_t j = 0; j < options.max_len; ++j) {
    const ForwardOutput out = model.forward(result.contexts, 1, result.contexts.size(), rng, {},
                                            result.contexts.size() - 1);
    ContextRow next{};
    if (cfg.mode == Mode::predictive) {
      const Mat p = softmax_blocks(out.logits, cfg.vocab, options.temperature);
      const auto token = static_cast<TokenId>(
          sample_categorical(std::span<const double>(p.data(), static_cast<std::size_t>(V)), rng));
      result.tokens.push_back(token);
      history.push_back(token);
      if (options.next_context) {
        next = options.next_context(history);
      } else {
        next = {vocab::kPad, vocab::kPad, vocab::kPad, vocab::kPad, token, token};
      }
    } else {
      next = sample_row(out.logits);
      result.tokens.push_back(next[kContextWidth - 1]);
      history.push_back(next[kContextWidth - 1]);
    }
    result.contexts.push_back(next);
    if (result.contexts.size() > window) result.contexts.erase(result.contexts.begin());
  }
  return result;
}

}  // namespace pixelbytes
