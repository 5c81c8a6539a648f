#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "pixelbytes/parameter.hpp"
#include "pixelbytes/seq_model.hpp"
#include "pixelbytes/sequence_builder.hpp"

namespace pixelbytes {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::size_t seq_len = 64;
  std::size_t stride = 0;  // 0 = seq_len
  double learning_rate = 1e-3;
  std::size_t grad_accum_steps = 1;
  std::size_t audio_reduction = 1;
  std::size_t image_reduction = 1;
  std::uint64_t seed = 0;
  // Token-frequency loss weights; applied in diffusion mode unless disabled.
  bool class_weighting = true;

  std::size_t effective_stride() const { return stride == 0 ? seq_len : stride; }
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

// w_i = sqrt(sum_j f_j) / sqrt(f_i); zero for tokens that never occur.
std::vector<double> class_weights(std::span<const double> frequencies);

// Occurrence counts of every token over the context slots of the items.
std::vector<double> context_frequencies(std::span<const ContextArray> items, std::size_t vocab);

// Adaptive moment estimation (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(const ParameterList& parameters);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, v_;
};

struct LossStats {
  double loss_sum = 0.0;
  double weight_sum = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;

  LossStats& operator+=(const LossStats& o) {
    loss_sum += o.loss_sum;
    weight_sum += o.weight_sum;
    correct += o.correct;
    count += o.count;
    return *this;
  }
  double loss() const { return weight_sum > 0.0 ? loss_sum / weight_sum : 0.0; }
  double accuracy() const { return count > 0 ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

// Weighted cross-entropy over rows of `slots` blocks of `vocab` logits.
// targets has rows*slots entries. Pad targets and entries with include == 0
// are skipped. If `dlogits` is non-null it receives the gradient of
// loss_sum (not normalised).
LossStats cross_entropy(const Mat& logits, std::span<const TokenId> targets, std::size_t vocab,
                        std::span<const std::uint8_t> include, std::span<const double> weights, Mat* dlogits);

struct EpochResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// One pass over `data`. With an optimizer, windows are shuffled with `rng`
// and parameters are updated every grad_accum_steps batches using the
// gradient of the mean weighted loss over those batches.
EpochResult process_epoch(SequenceModel& model, const WindowedDataset& data, const TrainConfig& config, Rng& rng,
                          Adam* optimizer, std::span<const double> weights = {});

// Index (1-based epoch) of the first minimum validation loss.
std::size_t best_epoch(std::span<const EpochMetrics> metrics);

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;
};

// Alternates training and validation epochs, writes metrics.csv and keeps
// best.ckpt (lowest validation loss) under out_dir.
TrainResult train_model(SequenceModel& model, const WindowedDataset& train, const WindowedDataset& val,
                        const TrainConfig& config, const std::filesystem::path& out_dir);

}  // namespace pixelbytes
