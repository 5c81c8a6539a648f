#include "pixelbytes/control.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace pixelbytes {

void StateSpaceSystem::check_shapes() const {
  const auto n = A.rows();
  if (n == 0 || A.cols() != n) throw std::invalid_argument("A must be square and non-empty");
  if (B.rows() != n || C.cols() != n || D.rows() != C.rows() || D.cols() != B.cols()) {
    throw std::invalid_argument("inconsistent state-space dimensions");
  }
}

std::size_t matrix_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s(0) : 0.0;
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) * smax * 1e-12;
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  return rank;
}

bool is_stable(const StateSpaceSystem& sys) {
  sys.check_shapes();
  Eigen::EigenSolver<Eigen::MatrixXd> es(sys.A, false);
  for (const auto& l : es.eigenvalues()) {
    if (!(l.real() < 0.0)) return false;
  }
  return true;
}

bool is_controllable(const StateSpaceSystem& sys) {
  sys.check_shapes();
  const auto n = sys.A.rows();
  const auto m = sys.B.cols();
  Eigen::MatrixXd ctrb(n, n * m);
  Eigen::MatrixXd block = sys.B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = block;
    block = sys.A * block;
  }
  return matrix_rank(ctrb) == static_cast<std::size_t>(n);
}

bool is_observable(const StateSpaceSystem& sys) {
  sys.check_shapes();
  const auto n = sys.A.rows();
  const auto p = sys.C.rows();
  Eigen::MatrixXd obsv(n * p, n);
  Eigen::MatrixXd block = sys.C;
  for (Eigen::Index k = 0; k < n; ++k) {
    obsv.middleRows(k * p, p) = block;
    block = block * sys.A;
  }
  return matrix_rank(obsv) == static_cast<std::size_t>(n);
}

void ControlConfig::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  check(system_order.min >= 1 && system_order.max <= 5 && system_order.min <= system_order.max,
        "system_order must lie in 1..5");
  check(eigenvalues_of_A.min <= eigenvalues_of_A.max && eigenvalues_of_A.max < 0.0,
        "eigenvalues_of_A must be a negative range");
  check(elements_of_B.min <= elements_of_B.max, "elements_of_B range is empty");
  check(elements_of_C.min <= elements_of_C.max, "elements_of_C range is empty");
  check(initial_conditions.min <= initial_conditions.max, "initial_conditions range is empty");
  check(setpoints.min <= setpoints.max, "setpoints range is empty");
  check(bang_bang_delay.min >= 0 && bang_bang_delay.min <= bang_bang_delay.max, "bang_bang_delay range is invalid");
  check(noise_standard_deviation.min >= 0.0 && noise_standard_deviation.min <= noise_standard_deviation.max,
        "noise_standard_deviation range is invalid");
  check(dt > 0.0, "dt must be positive");
  check(u_min < u_max, "u_min must be below u_max");
  check(r_weight > 0.0, "r_weight must be positive");
  check(lqr_fraction >= 0.0 && lqr_fraction <= 1.0, "lqr_fraction must lie in [0, 1]");
}

namespace {

nlohmann::json range_json(double lo, double hi) { return nlohmann::json::array({lo, hi}); }

template <typename T>
void read_range(const nlohmann::json& j, const char* key, T& lo, T& hi) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) throw std::invalid_argument(std::string(key) + " must be [min, max]");
  lo = v[0].get<T>();
  hi = v[1].get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const ControlConfig& c) {
  j = nlohmann::json{{"system_order", nlohmann::json::array({c.system_order.min, c.system_order.max})},
                     {"eigenvalues_of_A", range_json(c.eigenvalues_of_A.min, c.eigenvalues_of_A.max)},
                     {"elements_of_B", range_json(c.elements_of_B.min, c.elements_of_B.max)},
                     {"elements_of_C", range_json(c.elements_of_C.min, c.elements_of_C.max)},
                     {"initial_conditions", range_json(c.initial_conditions.min, c.initial_conditions.max)},
                     {"setpoints", range_json(c.setpoints.min, c.setpoints.max)},
                     {"bang_bang_delay", nlohmann::json::array({c.bang_bang_delay.min, c.bang_bang_delay.max})},
                     {"noise_standard_deviation",
                      range_json(c.noise_standard_deviation.min, c.noise_standard_deviation.max)},
                     {"dt", c.dt},
                     {"steps", c.steps},
                     {"u_min", c.u_min},
                     {"u_max", c.u_max},
                     {"r_weight", c.r_weight},
                     {"num_traces", c.num_traces},
                     {"lqr_fraction", c.lqr_fraction},
                     {"saturate", c.saturate}};
}

void from_json(const nlohmann::json& j, ControlConfig& c) {
  c = ControlConfig{};
  read_range(j, "system_order", c.system_order.min, c.system_order.max);
  read_range(j, "eigenvalues_of_A", c.eigenvalues_of_A.min, c.eigenvalues_of_A.max);
  read_range(j, "elements_of_B", c.elements_of_B.min, c.elements_of_B.max);
  read_range(j, "elements_of_C", c.elements_of_C.min, c.elements_of_C.max);
  read_range(j, "initial_conditions", c.initial_conditions.min, c.initial_conditions.max);
  read_range(j, "setpoints", c.setpoints.min, c.setpoints.max);
  read_range(j, "bang_bang_delay", c.bang_bang_delay.min, c.bang_bang_delay.max);
  read_range(j, "noise_standard_deviation", c.noise_standard_deviation.min, c.noise_standard_deviation.max);
  c.dt = j.value("dt", c.dt);
  c.steps = j.value("steps", c.steps);
  c.u_min = j.value("u_min", c.u_min);
  c.u_max = j.value("u_max", c.u_max);
  c.r_weight = j.value("r_weight", c.r_weight);
  c.num_traces = j.value("num_traces", c.num_traces);
  c.lqr_fraction = j.value("lqr_fraction", c.lqr_fraction);
  c.saturate = j.value("saturate", c.saturate);
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

}  // namespace

StateSpaceSystem sample_system(Rng& rng, const ControlConfig& config) {
  config.validate();
  const int order = uniform_int(rng, config.system_order.min, config.system_order.max);
  return sample_system(rng, config, static_cast<std::size_t>(order));
}

StateSpaceSystem sample_system(Rng& rng, const ControlConfig& config, std::size_t order) {
  if (order < 1 || order > 5) throw std::invalid_argument("system order must lie in 1..5");
  const auto n = static_cast<Eigen::Index>(order);
  constexpr int kMaxTries = 100;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    Eigen::MatrixXd S(n, n);
    do {
      for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = uniform(rng, -1.0, 1.0);
    } while (condition_number(S) > 100.0);
    Eigen::VectorXd lambda(n);
    for (Eigen::Index i = 0; i < n; ++i) lambda(i) = uniform(rng, config.eigenvalues_of_A.min, config.eigenvalues_of_A.max);

    StateSpaceSystem sys;
    sys.A = S * lambda.asDiagonal() * S.inverse();
    sys.B.resize(n, 1);
    sys.C.resize(1, n);
    for (Eigen::Index i = 0; i < n; ++i) sys.B(i, 0) = uniform(rng, config.elements_of_B.min, config.elements_of_B.max);
    for (Eigen::Index i = 0; i < n; ++i) sys.C(0, i) = uniform(rng, config.elements_of_C.min, config.elements_of_C.max);
    sys.D = Eigen::MatrixXd::Zero(1, 1);
    if (is_stable(sys) && is_controllable(sys) && is_observable(sys)) return sys;
  }
  throw std::runtime_error("sample_system: 100 consecutive candidates failed the Kalman conditions");
}

double care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                     const Eigen::MatrixXd& R, const Eigen::MatrixXd& P) {
  const Eigen::MatrixXd Rinv_Bt = R.ldlt().solve(B.transpose());
  return (A.transpose() * P + P * A - P * B * Rinv_Bt * P + Q).norm();
}

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& M) {
  const auto n = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  // Column-major vec: vec(A'X) = (I kron A') vec X, vec(XA) = (A' kron I) vec X.
  Eigen::MatrixXd K(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) = I(i, j) * A.transpose() + A(j, i) * I;
    }
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(M).data(), n * n);
  Eigen::VectorXd x = K.fullPivLu().solve(rhs);
  Eigen::MatrixXd X = Eigen::Map<Eigen::MatrixXd>(x.data(), n, n);
  return 0.5 * (X + X.transpose());
}

namespace {

bool hurwitz(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  for (const auto& l : es.eigenvalues()) {
    if (!(l.real() < 0.0)) return false;
  }
  return true;
}

// Stabilizing CARE solution from the stable invariant subspace of the
// Hamiltonian matrix.
Eigen::MatrixXd hamiltonian_solution(const Eigen::MatrixXd& A, const Eigen::MatrixXd& G, const Eigen::MatrixXd& Q) {
  const auto n = A.rows();
  Eigen::MatrixXd H(2 * n, 2 * n);
  H << A, -G, -Q, -A.transpose();
  Eigen::ComplexEigenSolver<Eigen::MatrixXd> es(H);
  Eigen::MatrixXcd basis(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 2 * n && k < n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) basis.col(k++) = es.eigenvectors().col(i);
  }
  if (k != n) throw std::runtime_error("solve_care: Hamiltonian has eigenvalues on the imaginary axis");
  const Eigen::MatrixXcd X1 = basis.topRows(n);
  const Eigen::MatrixXcd X2 = basis.bottomRows(n);
  const Eigen::MatrixXd P = (X2 * X1.inverse()).real();
  return 0.5 * (P + P.transpose());
}

}  // namespace

LqrSolution solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                       const Eigen::MatrixXd& R) {
  const auto n = A.rows();
  const auto m = B.cols();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m) {
    throw std::invalid_argument("solve_care: inconsistent dimensions");
  }
  const auto Rfac = R.ldlt();
  if (Rfac.info() != Eigen::Success || !Rfac.isPositive() || (Rfac.vectorD().array() <= 0.0).any()) {
    throw std::invalid_argument("solve_care: R must be positive definite");
  }
  const Eigen::MatrixXd Rinv_Bt = Rfac.solve(B.transpose());

  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, n);
  if (!hurwitz(A)) K = Rinv_Bt * hamiltonian_solution(A, B * Rinv_Bt, Q);

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  constexpr int kMaxIterations = 100;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Eigen::MatrixXd Acl = A - B * K;
    const Eigen::MatrixXd next = solve_lyapunov(Acl, Q + K.transpose() * R * K);
    const double change = (next - P).norm();
    P = next;
    K = Rinv_Bt * P;
    if (change <= 1e-14 * (1.0 + P.norm())) break;
  }
  const double residual = care_residual(A, B, Q, R, P);
  if (!(residual <= 1e-8 * (1.0 + P.norm())) || !hurwitz(A - B * K)) {
    throw std::runtime_error("solve_care: iteration did not converge (residual " + std::to_string(residual) + ")");
  }
  return {P, K, Q, R};
}

LqrSolution lqr_design(const StateSpaceSystem& sys, double r_weight) {
  sys.check_shapes();
  const Eigen::MatrixXd Q = sys.C.transpose() * sys.C;
  const Eigen::MatrixXd R = r_weight * Eigen::MatrixXd::Identity(sys.B.cols(), sys.B.cols());
  return solve_care(sys.A, sys.B, Q, R);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> steady_state(const StateSpaceSystem& sys, double r) {
  sys.check_shapes();
  const auto n = sys.A.rows();
  const auto m = sys.B.cols();
  const auto p = sys.C.rows();
  Eigen::MatrixXd M(n + p, n + m);
  M << sys.A, sys.B, sys.C, sys.D;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  rhs.tail(p).setConstant(r);
  const Eigen::VectorXd z = M.completeOrthogonalDecomposition().solve(rhs);
  return {z.head(n), z.tail(m)};
}

Eigen::VectorXd rk4_step(const StateSpaceSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double dt) {
  const Eigen::VectorXd bu = sys.B * u;
  auto f = [&](const Eigen::VectorXd& s) -> Eigen::VectorXd { return sys.A * s + bu; };
  const Eigen::VectorXd k1 = f(x);
  const Eigen::VectorXd k2 = f(x + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = f(x + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

std::string_view controller_name(Controller c) {
  switch (c) {
    case Controller::lqr:
      return "lqr";
    case Controller::bang_bang:
      return "bang_bang";
    case Controller::diffusion:
      return "diffusion";
  }
  return "unknown";
}

void ControlTrace::push(double r, double u, double y, const Eigen::VectorXd& x) {
  times.push_back(static_cast<double>(times.size()) * dt);
  setpoint.push_back(r);
  input.push_back(u);
  output.push_back(y);
  states.push_back(x);
}

namespace {

double output_of(const StateSpaceSystem& sys, const Eigen::VectorXd& x, double u) {
  return (sys.C * x)(0) + sys.D(0, 0) * u;
}

}  // namespace

ControlTrace lqr_rollout(const StateSpaceSystem& sys, const LqrSolution& lqr, const Eigen::VectorXd& x0, double r,
                         double dt, std::size_t steps, std::optional<Range> saturation) {
  sys.check_shapes();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (sys.B.cols() != 1 || sys.C.rows() != 1) throw std::invalid_argument("lqr_rollout expects a SISO system");
  const auto [x_ss, u_ss] = steady_state(sys, r);
  ControlTrace trace;
  trace.dt = dt;
  trace.controller = Controller::lqr;
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    double u = u_ss(0) - (lqr.K * (x - x_ss))(0);
    if (saturation) u = std::clamp(u, saturation->min, saturation->max);
    trace.push(r, u, output_of(sys, x, u), x);
    x = rk4_step(sys, x, Eigen::VectorXd::Constant(1, u), dt);
  }
  return trace;
}

BangBangController::BangBangController(const BangBangOptions& options)
    : options_(options), previous_(options.u_min) {
  if (!(options.u_min < options.u_max)) throw std::invalid_argument("u_min must be below u_max");
  if (options.delay < 0) throw std::invalid_argument("delay must be non-negative");
  if (options.noise_sigma < 0.0) throw std::invalid_argument("noise_sigma must be non-negative");
}

double BangBangController::step(double r, double y, Rng& rng) {
  double noise = 0.0;
  if (options_.noise_sigma > 0.0) noise = std::normal_distribution<double>(0.0, options_.noise_sigma)(rng);
  errors_.push_back(r - y + noise);
  const std::size_t k = errors_.size() - 1;
  const auto d = static_cast<std::size_t>(options_.delay);
  const double e = k >= d ? errors_[k - d] : errors_[0];
  if (e > 0.0) {
    previous_ = options_.u_max;
  } else if (e < 0.0) {
    previous_ = options_.u_min;
  }
  return previous_;
}

ControlTrace bang_bang_rollout(const StateSpaceSystem& sys, const Eigen::VectorXd& x0, double r,
                               const BangBangOptions& options, double dt, std::size_t steps, Rng& rng) {
  sys.check_shapes();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (sys.B.cols() != 1 || sys.C.rows() != 1) throw std::invalid_argument("bang_bang_rollout expects a SISO system");
  BangBangController controller(options);
  ControlTrace trace;
  trace.dt = dt;
  trace.controller = Controller::bang_bang;
  trace.delay = options.delay;
  trace.noise_sigma = options.noise_sigma;
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    // D = 0 for sampled systems, so the measurement does not depend on u_k.
    const double y = output_of(sys, x, 0.0);
    const double u = controller.step(r, y, rng);
    trace.push(r, u, output_of(sys, x, u), x);
    x = rk4_step(sys, x, Eigen::VectorXd::Constant(1, u), dt);
  }
  return trace;
}

double quadratic_cost(const ControlTrace& trace, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  double J = 0.0;
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const Eigen::VectorXd& x = trace.states[k];
    const double u = trace.input[k];
    J += trace.dt * (x.dot(Q * x) + R(0, 0) * u * u);
  }
  return J;
}

double chatter_amplitude(std::span<const double> output, std::size_t tail) {
  if (output.empty()) return 0.0;
  const auto window = output.last(std::min(tail, output.size()));
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  return 0.5 * (*hi - *lo);
}

std::vector<double> gameboy_filter(std::span<const double> samples, double gain, double omega_n, double zeta,
                                   double sample_rate) {
  if (!(sample_rate > 0.0) || !(omega_n > 0.0) || !(zeta > 0.0)) {
    throw std::invalid_argument("gameboy_filter: sample_rate, omega_n and zeta must be positive");
  }
  const double c = 2.0 * sample_rate;
  const double w2 = omega_n * omega_n;
  const double a0 = c * c + 2.0 * zeta * omega_n * c + w2;
  const double a1 = -2.0 * c * c + 2.0 * w2;
  const double a2 = c * c - 2.0 * zeta * omega_n * c + w2;
  const double b0 = gain * w2;
  const double b1 = 2.0 * gain * w2;
  const double b2 = gain * w2;

  std::vector<double> out(samples.size());
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double x0 = samples[n];
    const double y0 = (b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
    out[n] = y0;
    x2 = x1;
    x1 = x0;
    y2 = y1;
    y1 = y0;
  }
  return out;
}

TokenStream encode_trace(const ControlTrace& trace) {
  if (trace.size() == 0) throw std::invalid_argument("encode_trace: empty trace");
  return encode_signals({trace.setpoint, trace.input, trace.output});
}

ControlDataset build_control_dataset(const ControlConfig& config, Rng& rng) {
  config.validate();
  ControlDataset out;
  std::vector<std::uint64_t> seeds(config.num_traces);
  for (auto& s : seeds) s = rng();
  for (std::size_t i = 0; i < config.num_traces; ++i) {
    Rng trace_rng(seeds[i]);
    const StateSpaceSystem sys = sample_system(trace_rng, config);
    Eigen::VectorXd x0(sys.order());
    for (Eigen::Index k = 0; k < x0.size(); ++k) {
      x0(k) = uniform(trace_rng, config.initial_conditions.min, config.initial_conditions.max);
    }
    const double r = uniform(trace_rng, config.setpoints.min, config.setpoints.max);
    ControlTrace trace;
    if (uniform(trace_rng, 0.0, 1.0) < config.lqr_fraction) {
      const LqrSolution lqr = lqr_design(sys, config.r_weight);
      std::optional<Range> sat;
      if (config.saturate) sat = Range{config.u_min, config.u_max};
      trace = lqr_rollout(sys, lqr, x0, r, config.dt, config.steps, sat);
    } else {
      BangBangOptions bb;
      bb.u_min = config.u_min;
      bb.u_max = config.u_max;
      bb.delay = uniform_int(trace_rng, config.bang_bang_delay.min, config.bang_bang_delay.max);
      bb.noise_sigma = uniform(trace_rng, config.noise_standard_deviation.min, config.noise_standard_deviation.max);
      trace = bang_bang_rollout(sys, x0, r, bb, config.dt, config.steps, trace_rng);
    }
    if (trace.size() > 0) out.records.push_back(encode_trace(trace));
    out.traces.push_back(std::move(trace));
  }
  return out;
}

void write_trace_csv(std::ostream& os, std::span<const ControlTrace> traces) {
  os << "t,setpoint,output,action,controller\n";
  os << std::setprecision(17);
  for (const ControlTrace& trace : traces) {
    for (std::size_t k = 0; k < trace.size(); ++k) {
      os << trace.times[k] << ',' << trace.setpoint[k] << ',' << trace.output[k] << ',' << trace.input[k] << ','
         << controller_name(trace.controller) << '\n';
    }
  }
}

}  // namespace pixelbytes
