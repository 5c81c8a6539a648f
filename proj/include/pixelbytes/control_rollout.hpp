#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pixelbytes/control.hpp"
#include "pixelbytes/seq_model.hpp"

namespace pixelbytes {

struct DiffusionControlOptions {
  std::size_t horizon = 125;
  std::size_t repeats = 16;  // N_repeat
  std::size_t window = 64;   // context rows fed to the model
  // Future steps appended with the setpoint as their expected output.
  std::size_t lookahead = 2;
  double temperature = 1.0;
  double u_min = -1.0;
  double u_max = 1.0;
};

// Continues `history` (the warmup trace, which also fixes dt and the
// starting state) for options.horizon steps. Each step lays out the
// current sample as (setpoint, action, output, break) tokens with the
// action unknown, followed by `lookahead` steps whose output is the
// setpoint. Every context slot that reads an unknown action is noised at
// the last diffusion step; the rest stay clean. The current action is
// sampled from the slots that hold it in options.repeats independently
// noised copies, and the mean of the sampled values is applied.
ControlTrace diffusion_control_rollout(SequenceModel& model, const StateSpaceSystem& plant, double setpoint,
                                       const ControlTrace& history, const DiffusionControlOptions& options, Rng& rng);

struct ControlDemoConfig {
  double setpoint = 0.5;
  std::size_t warmup_steps = 126;
  std::size_t horizon = 125;
  std::size_t repetitions = 100;
  std::size_t repeats = 16;
  std::size_t window = 64;
  std::size_t lookahead = 2;
  std::size_t tail = 25;  // samples used for the terminal statistics
  double temperature = 1.0;
  double dt = 0.05;
  IntRange bang_bang_delay{0, 5};
  Range noise_standard_deviation{0.0, 0.1};

  void validate() const;
};

void to_json(nlohmann::json& j, const ControlDemoConfig& c);
void from_json(const nlohmann::json& j, ControlDemoConfig& c);

struct ControlDemoRun {
  std::uint64_t seed = 0;
  ControlTrace diffusion;  // warmup followed by generated steps
  ControlTrace bang_bang;  // same warmup, bang-bang continued
  double terminal_error = 0.0;     // mean |y - r| over the diffusion tail
  double chatter_amplitude = 0.0;  // (max - min) / 2 of the bang-bang tail
  bool diffusion_better() const { return terminal_error < chatter_amplitude; }
};

// Plant 1/(s+1) started at rest.
StateSpaceSystem first_order_plant();

ControlDemoRun run_control_demo(SequenceModel& model, const ControlDemoConfig& config, std::uint64_t seed);

}  // namespace pixelbytes
