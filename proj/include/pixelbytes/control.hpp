#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pixelbytes/parameter.hpp"
#include "pixelbytes/tokenizer.hpp"

namespace pixelbytes {

// Continuous-time LTI system x' = Ax + Bu, y = Cx + Du.
struct StateSpaceSystem {
  Eigen::MatrixXd A, B, C, D;

  std::size_t order() const { return static_cast<std::size_t>(A.rows()); }
  // Throws std::invalid_argument on inconsistent shapes.
  void check_shapes() const;
};

// Rank from singular values with tolerance max(rows, cols) * sigma_max * 1e-12.
std::size_t matrix_rank(const Eigen::MatrixXd& m);

bool is_stable(const StateSpaceSystem& sys);
bool is_controllable(const StateSpaceSystem& sys);
bool is_observable(const StateSpaceSystem& sys);

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct IntRange {
  int min = 0;
  int max = 0;
};

struct ControlConfig {
  IntRange system_order{1, 5};
  Range eigenvalues_of_A{-5.0, -0.1};
  Range elements_of_B{-1.0, 1.0};
  Range elements_of_C{0.0, 1.0};
  Range initial_conditions{-1.0, 1.0};
  Range setpoints{-1.0, 1.0};
  IntRange bang_bang_delay{0, 5};
  Range noise_standard_deviation{0.0, 0.1};

  double dt = 0.05;
  std::size_t steps = 100;
  double u_min = -1.0;
  double u_max = 1.0;
  double r_weight = 0.1;  // R = r_weight * I, Q = C^T C
  std::size_t num_traces = 100;
  double lqr_fraction = 0.5;
  bool saturate = true;  // clip LQR inputs to [u_min, u_max]

  void validate() const;
};

void to_json(nlohmann::json& j, const ControlConfig& c);
void from_json(const nlohmann::json& j, ControlConfig& c);

// Single-input single-output system with the configured order range;
// resampled until stable, controllable and observable.
StateSpaceSystem sample_system(Rng& rng, const ControlConfig& config);
StateSpaceSystem sample_system(Rng& rng, const ControlConfig& config, std::size_t order);

struct LqrSolution {
  Eigen::MatrixXd P, K, Q, R;
};

// ||A'P + PA - PBR^-1B'P + Q||_F
double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

// Solves A'X + XA = -M (Kronecker form).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M);

// Newton-Kleinman iteration from a stabilizing gain (zero for stable A,
// otherwise from the stable invariant subspace of the Hamiltonian).
LqrSolution solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                       const Eigen::MatrixXd& R);

// Q = C'C, R = r_weight * I.
LqrSolution lqr_design(const StateSpaceSystem& sys, double r_weight);

// Equilibrium (x_ss, u_ss) with y = r.
std::pair<Eigen::VectorXd, Eigen::VectorXd> steady_state(const StateSpaceSystem& sys, double r);

// One RK4 step of x' = Ax + Bu with u held constant.
Eigen::VectorXd rk4_step(const StateSpaceSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt);

enum class Controller { lqr, bang_bang, diffusion };
std::string_view controller_name(Controller c);

// Sample k: time k*dt, output y_k = C x_k + D u_k and the input u_k applied
// over [k*dt, (k+1)*dt).
struct ControlTrace {
  double dt = 0.05;
  std::vector<double> times;
  std::vector<double> setpoint;
  std::vector<double> input;
  std::vector<double> output;
  std::vector<Eigen::VectorXd> states;
  Controller controller = Controller::lqr;
  int delay = 0;
  double noise_sigma = 0.0;

  std::size_t size() const { return times.size(); }
  void push(double r, double u, double y, const Eigen::VectorXd& x);
};

ControlTrace lqr_rollout(const StateSpaceSystem& sys, const LqrSolution& lqr, const Eigen::VectorXd& x0, double r,
                         double dt, std::size_t steps, std::optional<Range> saturation = std::nullopt);

struct BangBangOptions {
  double u_min = -1.0;
  double u_max = 1.0;
  int delay = 0;
  double noise_sigma = 0.0;
};

// u_k = u_max if e_{k-d} > 0, u_min if < 0, previous input if 0, with
// e_k = r - y_k + noise and e_{k-d} = e_0 for k < d.
ControlTrace bang_bang_rollout(const StateSpaceSystem& sys, const Eigen::VectorXd& x0, double r,
                               const BangBangOptions& options, double dt, std::size_t steps, Rng& rng);

// Bang-bang law with state: feed measurements one at a time.
class BangBangController {
 public:
  explicit BangBangController(const BangBangOptions& options);
  double step(double r, double y, Rng& rng);

 private:
  BangBangOptions options_;
  std::vector<double> errors_;
  double previous_;
};

// Riemann sum of x'Qx + u'Ru over the trace.
double quadratic_cost(const ControlTrace& trace, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

// (max - min) / 2 of the output over the last `tail` samples.
double chatter_amplitude(std::span<const double> output, std::size_t tail);

// Second-order low-pass K w^2 / (s^2 + 2 zeta w s + w^2), bilinear transform.
std::vector<double> gameboy_filter(std::span<const double> samples, double gain, double omega_n, double zeta,
                                   double sample_rate);

// Three-channel action-token record: setpoint, input, output per step.
TokenStream encode_trace(const ControlTrace& trace);

struct ControlDataset {
  std::vector<ControlTrace> traces;
  std::vector<TokenStream> records;
};

ControlDataset build_control_dataset(const ControlConfig& config, Rng& rng);

// Header t,setpoint,output,action,controller; one line per sample.
void write_trace_csv(std::ostream& os, std::span<const ControlTrace> traces);

}  // namespace pixelbytes
