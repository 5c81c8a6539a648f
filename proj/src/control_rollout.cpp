#include "pixelbytes/control_rollout.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "pixelbytes/sequence_builder.hpp"

namespace pixelbytes {

namespace {

constexpr std::size_t kRowWidth = 4;  // setpoint, action, output, break

void append_step(std::vector<TokenId>& tokens, double r, TokenId action, double y) {
  tokens.push_back(action_id(action_bin(r)));
  tokens.push_back(action);
  tokens.push_back(action_id(action_bin(y)));
  tokens.push_back(vocab::kLineBreak);
}

}  // namespace

ControlTrace diffusion_control_rollout(SequenceModel& model, const StateSpaceSystem& plant, double setpoint,
                                       const ControlTrace& history, const DiffusionControlOptions& options, Rng& rng) {
  if (model.config().mode != Mode::diffusion) throw std::invalid_argument("diffusion_control_rollout: model is not in diffusion mode");
  if (history.size() == 0 || history.states.size() != history.size()) {
    throw std::invalid_argument("diffusion_control_rollout: history must be a non-empty trace with states");
  }
  if (options.repeats == 0 || options.window < (options.lookahead + 2) * kRowWidth) {
    throw std::invalid_argument("diffusion_control_rollout: repeats must be positive and window must hold the lookahead");
  }
  plant.check_shapes();

  ControlTrace trace = history;
  trace.controller = Controller::diffusion;
  std::vector<TokenId> tokens;
  tokens.reserve((history.size() + options.horizon) * kRowWidth);
  for (std::size_t k = 0; k < history.size(); ++k) {
    append_step(tokens, history.setpoint[k], action_id(action_bin(history.input[k])), history.output[k]);
  }

  const std::size_t V = model.config().vocab;
  const int n_d = static_cast<int>(model.config().diffusion_steps);
  Eigen::VectorXd x = rk4_step(plant, history.states.back(), Eigen::VectorXd::Constant(1, history.input.back()), history.dt);
  double previous_u = history.input.back();
  const TokenId expected = action_id(action_bin(setpoint));

  for (std::size_t step = 0; step < options.horizon; ++step) {
    const double y = (plant.C * x)(0);
    // Unknown actions are pad placeholders; every slot reading one is noised.
    std::vector<TokenId> seq = tokens;
    const std::size_t base = seq.size();
    append_step(seq, setpoint, vocab::kPad, y);
    for (std::size_t j = 0; j < options.lookahead; ++j) {
      seq.push_back(expected);
      seq.push_back(vocab::kPad);
      seq.push_back(expected);
      seq.push_back(vocab::kLineBreak);
    }
    const ItemLayout layout = ItemLayout::single(seq.size() / kRowWidth, 1, kRowWidth);
    const std::size_t L = std::min(options.window, seq.size());
    const std::size_t first = seq.size() - L;

    std::vector<ContextRow> window(L);
    KeepMask keep(L * kContextWidth, 1);
    for (std::size_t i = 0; i < L; ++i) {
      window[i] = layout.context_for(first + i, seq);
      // Slot 1 reads the previous step's token, slots 4 and 5 the left one.
      const std::size_t pos = first + i;
      auto unknown = [&](std::size_t p) { return p >= base && p % kRowWidth == 1; };
      if (pos >= kRowWidth && unknown(pos - kRowWidth)) keep[i * kContextWidth + 1] = 0;
      if (pos % kRowWidth != 0 && unknown(pos - 1)) {
        keep[i * kContextWidth + 4] = 0;
        keep[i * kContextWidth + 5] = 0;
      }
    }
    // Rows and slots that hold the current action: the output row (slots 4
    // and 5) and, with a lookahead, the next action row (slot 1).
    const std::size_t output_row = base + 2 - first;
    std::vector<std::pair<std::size_t, std::size_t>> reads{{output_row, 4}, {output_row, 5}};
    if (options.lookahead > 0) reads.emplace_back(output_row + kRowWidth - 1, 1);

    const std::size_t N = options.repeats;
    std::vector<ContextRow> batch;
    KeepMask batch_keep;
    batch.reserve(N * L);
    batch_keep.reserve(N * L * kContextWidth);
    for (std::size_t b = 0; b < N; ++b) {
      batch.insert(batch.end(), window.begin(), window.end());
      batch_keep.insert(batch_keep.end(), keep.begin(), keep.end());
    }
    model.forward(batch, N, L, rng, NoiseControl{n_d, batch_keep}, output_row);
    std::map<std::size_t, Mat> probs;
    for (const auto& read : reads) {
      if (!probs.contains(read.first)) probs[read.first] = softmax_blocks(model.logits_at(read.first), V, options.temperature);
    }

    double sum = 0.0;
    std::size_t count = 0;
    std::vector<double> p(V);
    for (std::size_t b = 0; b < N; ++b) {
      for (const auto& [row, slot] : reads) {
        const Mat& pr = probs.at(row);
        for (std::size_t v = 0; v < V; ++v) p[v] = pr(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(slot * V + v));
        const auto id = static_cast<TokenId>(sample_categorical(p, rng));
        if (classify(id) == TokenClass::action) {
          sum += action_center(action_bin_of(id));
          ++count;
        }
      }
    }
    const double u = count > 0 ? std::clamp(sum / static_cast<double>(count), options.u_min, options.u_max) : previous_u;
    append_step(tokens, setpoint, action_id(action_bin(u)), y);
    trace.push(setpoint, u, y, x);
    x = rk4_step(plant, x, Eigen::VectorXd::Constant(1, u), trace.dt);
    previous_u = u;
  }
  return trace;
}

void ControlDemoConfig::validate() const {
  if (warmup_steps == 0 || repetitions == 0 || repeats == 0 || tail == 0) {
    throw std::invalid_argument("control demo: warmup_steps, repetitions, repeats and tail must be positive");
  }
  if (window < (lookahead + 2) * kRowWidth) throw std::invalid_argument("control demo: window too short for the lookahead");
  if (!(dt > 0.0) || !(temperature > 0.0)) throw std::invalid_argument("control demo: dt and temperature must be positive");
  if (bang_bang_delay.min < 0 || bang_bang_delay.min > bang_bang_delay.max) {
    throw std::invalid_argument("control demo: invalid bang_bang_delay range");
  }
  if (noise_standard_deviation.min < 0.0 || noise_standard_deviation.min > noise_standard_deviation.max) {
    throw std::invalid_argument("control demo: invalid noise_standard_deviation range");
  }
}

void to_json(nlohmann::json& j, const ControlDemoConfig& c) {
  j = nlohmann::json{
      {"setpoint", c.setpoint},
      {"warmup_steps", c.warmup_steps},
      {"horizon", c.horizon},
      {"repetitions", c.repetitions},
      {"repeats", c.repeats},
      {"window", c.window},
      {"lookahead", c.lookahead},
      {"tail", c.tail},
      {"temperature", c.temperature},
      {"dt", c.dt},
      {"bang_bang_delay", nlohmann::json::array({c.bang_bang_delay.min, c.bang_bang_delay.max})},
      {"noise_standard_deviation",
       nlohmann::json::array({c.noise_standard_deviation.min, c.noise_standard_deviation.max})}};
}

void from_json(const nlohmann::json& j, ControlDemoConfig& c) {
  c = ControlDemoConfig{};
  c.setpoint = j.value("setpoint", c.setpoint);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.horizon = j.value("horizon", c.horizon);
  c.repetitions = j.value("repetitions", c.repetitions);
  c.repeats = j.value("repeats", c.repeats);
  c.window = j.value("window", c.window);
  c.lookahead = j.value("lookahead", c.lookahead);
  c.tail = j.value("tail", c.tail);
  c.temperature = j.value("temperature", c.temperature);
  c.dt = j.value("dt", c.dt);
  if (j.contains("bang_bang_delay")) {
    c.bang_bang_delay = {j.at("bang_bang_delay").at(0).get<int>(), j.at("bang_bang_delay").at(1).get<int>()};
  }
  if (j.contains("noise_standard_deviation")) {
    c.noise_standard_deviation = {j.at("noise_standard_deviation").at(0).get<double>(),
                                  j.at("noise_standard_deviation").at(1).get<double>()};
  }
}

StateSpaceSystem first_order_plant() {
  StateSpaceSystem sys;
  sys.A = Eigen::MatrixXd::Constant(1, 1, -1.0);
  sys.B = Eigen::MatrixXd::Constant(1, 1, 1.0);
  sys.C = Eigen::MatrixXd::Constant(1, 1, 1.0);
  sys.D = Eigen::MatrixXd::Zero(1, 1);
  return sys;
}

ControlDemoRun run_control_demo(SequenceModel& model, const ControlDemoConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::uint64_t noise_seed = rng();
  const std::uint64_t sample_seed = rng();
  BangBangOptions bb;
  bb.delay = std::uniform_int_distribution<int>(config.bang_bang_delay.min, config.bang_bang_delay.max)(rng);
  bb.noise_sigma = std::uniform_real_distribution<double>(config.noise_standard_deviation.min,
                                                          config.noise_standard_deviation.max)(rng);

  const StateSpaceSystem plant = first_order_plant();
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  const std::size_t total = config.warmup_steps + config.horizon;

  // The warmup is the prefix of the full bang-bang run: the controller's
  // noise stream is consumed identically up to warmup_steps.
  Rng noise_rng(noise_seed);
  ControlDemoRun run;
  run.seed = seed;
  run.bang_bang = bang_bang_rollout(plant, x0, config.setpoint, bb, config.dt, total, noise_rng);

  ControlTrace warmup = run.bang_bang;
  warmup.times.resize(config.warmup_steps);
  warmup.setpoint.resize(config.warmup_steps);
  warmup.input.resize(config.warmup_steps);
  warmup.output.resize(config.warmup_steps);
  warmup.states.resize(config.warmup_steps);

  DiffusionControlOptions opts;
  opts.horizon = config.horizon;
  opts.repeats = config.repeats;
  opts.window = config.window;
  opts.lookahead = config.lookahead;
  opts.temperature = config.temperature;
  Rng sample_rng(sample_seed);
  run.diffusion = diffusion_control_rollout(model, plant, config.setpoint, warmup, opts, sample_rng);

  const std::size_t tail = std::min(config.tail, run.diffusion.size());
  double err = 0.0;
  for (std::size_t k = run.diffusion.size() - tail; k < run.diffusion.size(); ++k) {
    err += std::abs(run.diffusion.output[k] - config.setpoint);
  }
  run.terminal_error = err / static_cast<double>(tail);
  run.chatter_amplitude = chatter_amplitude(run.bang_bang.output, config.tail);
  return run;
}

}  // namespace pixelbytes
