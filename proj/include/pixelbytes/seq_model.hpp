#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pixelbytes/lstm.hpp"
#include "pixelbytes/parameter.hpp"
#include "pixelbytes/sequence_builder.hpp"

namespace pixelbytes {

enum class Mode { predictive, autoregressive, diffusion };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);

struct SeqModelConfig {
  Mode mode = Mode::autoregressive;
  std::size_t vocab = vocab::kSize;
  std::size_t embed_dim = 48;  // total over the six context positions
  std::size_t hidden = 64;
  std::size_t layers = 1;
  bool bidirectional = false;
  std::size_t diffusion_steps = 10;

  std::size_t position_dim() const { return embed_dim / kContextWidth; }
  // V for predictive mode, 6V otherwise.
  std::size_t output_width() const { return mode == Mode::predictive ? vocab : kContextWidth * vocab; }
  void validate() const;
};

void to_json(nlohmann::json& j, const SeqModelConfig& c);
void from_json(const nlohmann::json& j, SeqModelConfig& c);

// Keep mask for diffusion noising: one flag per (batch, position, slot),
// 1 = clean embedding, 0 = blended with noise.
using KeepMask = std::vector<std::uint8_t>;

struct NoiseControl {
  std::optional<int> step;
  std::optional<KeepMask> keep;
};

struct ForwardOutput {
  // Rows are b*L + l (or one row per batch item when a single position was
  // requested); columns are V, or 6 blocks of V in slot order.
  Mat logits;
  int step = -1;
  KeepMask keep;
};

// Six-slot context embedding, LSTM stack and linear output head.
class SequenceModel {
 public:
  SequenceModel(const SeqModelConfig& config, std::uint64_t seed);

  const SeqModelConfig& config() const { return config_; }

  // contexts: batch*length rows, batch-major. In diffusion mode a missing
  // step is drawn uniformly from [1, n_d] and a missing mask keeps
  // ceil(3L/4) random positions of every sequence clean. When `position`
  // is set only that time step's logits are computed.
  ForwardOutput forward(std::span<const ContextRow> contexts, std::size_t batch, std::size_t length, Rng& rng,
                        const NoiseControl& noise = {}, std::optional<std::size_t> position = std::nullopt);

  // Logits of one time step of the last forward pass, one row per batch
  // item. Lets inference read a few positions without the full head.
  Mat logits_at(std::size_t position) const;

  // Accumulates gradients for the cached forward pass.
  void backward(const Mat& dlogits);

  // Concatenated slot embeddings, (batch*length) x D, batch-major.
  Mat embed_contexts(std::span<const ContextRow> contexts) const;

  // The (clean or noised) embeddings fed to the LSTM in the last forward
  // pass, batch-major.
  Mat last_lstm_input() const;

  ParameterList parameters();
  void zero_grad();
  std::size_t parameter_count();

  Parameter embedding;  // V x D/6, row 0 fixed at zero
  Lstm lstm;
  Parameter head_weight;  // (hidden*dirs) x out
  Parameter head_bias;    // 1 x out

 private:
  SequenceModel(const SeqModelConfig& config, Rng&& rng);

  SeqModelConfig config_;

  bool cached_ = false;
  std::size_t batch_ = 0;
  std::size_t length_ = 0;
  std::optional<std::size_t> position_;
  std::vector<ContextRow> contexts_;
  double alpha_ = 1.0;
  KeepMask keep_;
  Mat lstm_in_;   // time-major
  Mat lstm_out_;  // time-major
};

// Row-wise softmax of logits / temperature over blocks of `vocab` columns.
Mat softmax_blocks(const Mat& logits, std::size_t vocab, double temperature = 1.0);

// Inverse-CDF draw from a probability vector.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

struct GenerationResult {
  std::vector<ContextRow> contexts;  // final context window(s), batch-major
  std::vector<TokenId> tokens;       // generated tokens, in generation order
};

// Builds the context row for the next generated token from the tokens
// generated so far (including the seed's tokens).
using NextContextFn = std::function<ContextRow(std::span<const TokenId> history)>;

struct GenerationOptions {
  double temperature = 1.0;
  std::size_t max_len = 0;
  // Predictive mode: tokens preceding the generated ones (the seed's targets).
  std::vector<TokenId> history;
  // Predictive mode; defaults to a single-row layout [0,0,0,0,prev,prev].
  NextContextFn next_context;
  // Diffusion mode: slots to fill are 0; defaults to every slot of the seed.
  std::optional<KeepMask> keep;
};

// Sampling loop for a single sequence (batch 1).
//  predictive:     sample the next token from the last step, append its
//                  context row and slide the window.
//  autoregressive: sample all six slots of the next row from the last step
//                  and append it; the emitted token is the last slot.
//  diffusion:      repeatedly pick an unfilled position, sample its row and
//                  write the samples into the unfilled slots.
GenerationResult generate(SequenceModel& model, std::span<const ContextRow> seed, const GenerationOptions& options,
                          Rng& rng);

}  // namespace pixelbytes
