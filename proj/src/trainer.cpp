#include "pixelbytes/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pixelbytes/checkpoint.hpp"

namespace pixelbytes {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || seq_len == 0 || grad_accum_steps == 0) {
    throw std::invalid_argument("epochs, batch_size, seq_len and grad_accum_steps must be positive");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (effective_stride() > seq_len) throw std::invalid_argument("stride must not exceed seq_len");
  if (audio_reduction == 0 || image_reduction == 0) throw std::invalid_argument("reduction factors must be >= 1");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seq_len", c.seq_len},
                     {"stride", c.effective_stride()},
                     {"learning_rate", c.learning_rate},
                     {"grad_accum_steps", c.grad_accum_steps},
                     {"audio_reduction", c.audio_reduction},
                     {"image_reduction", c.image_reduction},
                     {"seed", c.seed},
                     {"class_weighting", c.class_weighting}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seq_len = j.value("seq_len", d.seq_len);
  c.stride = j.value("stride", d.stride);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.grad_accum_steps = j.value("grad_accum_steps", d.grad_accum_steps);
  c.audio_reduction = j.value("audio_reduction", d.audio_reduction);
  c.image_reduction = j.value("image_reduction", d.image_reduction);
  c.seed = j.value("seed", d.seed);
  c.class_weighting = j.value("class_weighting", d.class_weighting);
}

std::vector<double> class_weights(std::span<const double> frequencies) {
  double total = 0.0;
  for (double f : frequencies) {
    if (f < 0.0 || !std::isfinite(f)) throw std::invalid_argument("frequencies must be finite and non-negative");
    total += f;
  }
  if (total <= 0.0) throw std::invalid_argument("class_weights: all frequencies are zero");
  std::vector<double> w(frequencies.size(), 0.0);
  const double root_total = std::sqrt(total);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (frequencies[i] > 0.0) w[i] = root_total / std::sqrt(frequencies[i]);
  }
  return w;
}

std::vector<double> context_frequencies(std::span<const ContextArray> items, std::size_t vocab) {
  std::vector<double> f(vocab, 0.0);
  for (const ContextArray& item : items) {
    for (const ContextRow& row : item.contexts) {
      for (TokenId id : row) {
        if (id < vocab) f[id] += 1.0;
      }
    }
  }
  return f;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const ParameterList& parameters) {
  if (m_.empty()) {
    for (const Parameter* p : parameters) {
      m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (m_.size() != parameters.size()) throw std::logic_error("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < parameters.size(); ++i) {
    Parameter& p = *parameters[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

LossStats cross_entropy(const Mat& logits, std::span<const TokenId> targets, std::size_t vocab,
                        std::span<const std::uint8_t> include, std::span<const double> weights, Mat* dlogits) {
  const auto V = static_cast<Eigen::Index>(vocab);
  if (logits.cols() % V != 0) throw std::invalid_argument("cross_entropy: width is not a multiple of vocab");
  const Eigen::Index slots = logits.cols() / V;
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() * slots) {
    throw std::invalid_argument("cross_entropy: target count mismatch");
  }
  if (!include.empty() && include.size() != targets.size()) throw std::invalid_argument("cross_entropy: mask size mismatch");
  if (!weights.empty() && weights.size() != vocab) throw std::invalid_argument("cross_entropy: weight size mismatch");
  if (dlogits) *dlogits = Mat::Zero(logits.rows(), logits.cols());

  LossStats stats;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index s = 0; s < slots; ++s) {
      const auto idx = static_cast<std::size_t>(r * slots + s);
      const TokenId y = targets[idx];
      if (y == vocab::kPad || (!include.empty() && !include[idx])) continue;
      if (y >= vocab) throw std::invalid_argument("cross_entropy: target out of range");
      const double w = weights.empty() ? 1.0 : weights[y];
      const auto z = logits.row(r).segment(s * V, V);
      Eigen::Index arg = 0;
      const double m = z.maxCoeff(&arg);
      const double lse = m + std::log((z.array() - m).exp().sum());
      stats.loss_sum += w * (lse - z(y));
      stats.weight_sum += w;
      stats.correct += static_cast<std::size_t>(arg == static_cast<Eigen::Index>(y));
      stats.count += 1;
      if (dlogits) {
        auto g = dlogits->row(r).segment(s * V, V);
        g = w * (z.array() - lse).exp().matrix();
        g(y) -= w;
      }
    }
  }
  return stats;
}

namespace {

struct Batch {
  std::vector<ContextRow> contexts;
  std::vector<TokenId> targets;
  std::size_t size = 0;
};

Batch make_batch(const WindowedDataset& data, std::span<const std::size_t> order, Mode mode) {
  Batch b;
  b.size = order.size();
  for (std::size_t idx : order) {
    WindowSample w = data[idx];
    b.contexts.insert(b.contexts.end(), w.contexts.begin(), w.contexts.end());
    switch (mode) {
      case Mode::predictive:
        b.targets.insert(b.targets.end(), w.targets.begin(), w.targets.end());
        break;
      case Mode::autoregressive:
        for (const ContextRow& row : w.next_contexts) b.targets.insert(b.targets.end(), row.begin(), row.end());
        break;
      case Mode::diffusion:
        for (const ContextRow& row : w.contexts) b.targets.insert(b.targets.end(), row.begin(), row.end());
        break;
    }
  }
  return b;
}

}  // namespace

EpochResult process_epoch(SequenceModel& model, const WindowedDataset& data, const TrainConfig& config, Rng& rng,
                          Adam* optimizer, std::span<const double> weights) {
  if (data.empty()) throw std::invalid_argument("process_epoch: empty data");
  const Mode mode = model.config().mode;
  const std::size_t L = data.seq_len();
  const std::size_t V = model.config().vocab;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (optimizer) std::shuffle(order.begin(), order.end(), rng);

  const ParameterList params = model.parameters();
  LossStats total, group;
  std::size_t in_group = 0;
  auto apply_step = [&] {
    if (in_group == 0) return;
    if (group.weight_sum > 0.0) {
      for (Parameter* p : params) p->grad /= group.weight_sum;
      optimizer->step(params);
    }
    model.zero_grad();
    group = {};
    in_group = 0;
  };
  if (optimizer) model.zero_grad();

  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    const Batch batch = make_batch(data, std::span(order).subspan(begin, end - begin), mode);
    const ForwardOutput out = model.forward(batch.contexts, batch.size, L, rng);

    std::vector<std::uint8_t> include;
    if (mode == Mode::diffusion) {
      include.resize(out.keep.size());
      for (std::size_t i = 0; i < include.size(); ++i) include[i] = out.keep[i] ? 0 : 1;
    }
    Mat dlogits;
    const LossStats stats = cross_entropy(out.logits, batch.targets, V, include, weights, optimizer ? &dlogits : nullptr);
    total += stats;
    if (optimizer) {
      model.backward(dlogits);
      group += stats;
      if (++in_group == config.grad_accum_steps) apply_step();
    }
  }
  if (optimizer) apply_step();
  return {total.loss(), total.accuracy()};
}

std::size_t best_epoch(std::span<const EpochMetrics> metrics) {
  if (metrics.empty()) return 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    if (metrics[i].val_loss < metrics[best].val_loss) best = i;
  }
  return metrics[best].epoch;
}

TrainResult train_model(SequenceModel& model, const WindowedDataset& train, const WindowedDataset& val,
                        const TrainConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());

  const std::filesystem::path csv_path = out_dir / "metrics.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
  csv << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";

  std::vector<double> weights;
  if (model.config().mode == Mode::diffusion && config.class_weighting) {
    weights = class_weights(context_frequencies(train.items(), model.config().vocab));
  }

  nlohmann::json echo;
  echo["model"] = model.config();
  echo["train"] = config;

  Rng rng(config.seed);
  Adam optimizer(config.learning_rate);
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const EpochResult tr = process_epoch(model, train, config, rng, &optimizer, weights);
    Rng val_rng(config.seed ^ (0x9E3779B97F4A7C15ULL * epoch));
    const EpochResult va = process_epoch(model, val, config, val_rng, nullptr, weights);
    const EpochMetrics m{epoch, tr.loss, tr.accuracy, va.loss, va.accuracy};
    result.metrics.push_back(m);

    std::ostringstream row;
    row << std::setprecision(17) << m.epoch << ',' << m.train_loss << ',' << m.train_accuracy << ',' << m.val_loss
        << ',' << m.val_accuracy << '\n';
    csv << row.str();
    csv.flush();
    if (!csv) throw std::runtime_error("write failed for " + csv_path.string());

    if (best_epoch(result.metrics) == epoch) {
      echo["epoch"] = epoch;
      save_checkpoint(out_dir / "best.ckpt", echo, config.seed, model.parameters());
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace pixelbytes
