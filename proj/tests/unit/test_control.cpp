#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "pixelbytes/control.hpp"
#include "pixelbytes/control_rollout.hpp"

using namespace pixelbytes;

namespace {

StateSpaceSystem scalar(double a, double b, double c) {
  StateSpaceSystem s;
  s.A = Eigen::MatrixXd::Constant(1, 1, a);
  s.B = Eigen::MatrixXd::Constant(1, 1, b);
  s.C = Eigen::MatrixXd::Constant(1, 1, c);
  s.D = Eigen::MatrixXd::Zero(1, 1);
  return s;
}

Eigen::MatrixXd m1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

bool closed_loop_stable(const StateSpaceSystem& sys, const LqrSolution& lqr) {
  const Eigen::MatrixXd acl = sys.A - sys.B * lqr.K;
  return (acl.eigenvalues().real().array() < 0.0).all();
}

}  // namespace

TEST_SUITE("control") {
  TEST_CASE("Kalman conditions on hand-built systems") {
    StateSpaceSystem di;
    di.A = Eigen::MatrixXd{{0, 1}, {0, 0}};
    di.B = Eigen::MatrixXd{{0}, {1}};
    di.C = Eigen::MatrixXd{{1, 0}};
    di.D = Eigen::MatrixXd::Zero(1, 1);
    CHECK(is_controllable(di));
    CHECK(is_observable(di));
    CHECK_FALSE(is_stable(di));

    StateSpaceSystem un = di;
    un.A = -Eigen::MatrixXd::Identity(2, 2);
    un.B = Eigen::MatrixXd{{1}, {0}};
    CHECK_FALSE(is_controllable(un));
    CHECK(is_stable(un));

    CHECK_FALSE(is_controllable(scalar(-1, 0, 1)));
    CHECK_FALSE(is_observable(scalar(-1, 1, 0)));
    CHECK_FALSE(is_stable(scalar(0.1, 1, 1)));
    const auto ok = scalar(-1, 1, 1);
    CHECK((is_stable(ok) && is_controllable(ok) && is_observable(ok)));

    StateSpaceSystem bad = ok;
    bad.B = Eigen::MatrixXd::Zero(2, 1);
    CHECK_THROWS(bad.check_shapes());
  }

  TEST_CASE("sampled systems satisfy all three conditions") {
    ControlConfig cfg;
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
      const auto sys = sample_system(rng, cfg);
      REQUIRE(is_stable(sys));
      REQUIRE(is_controllable(sys));
      REQUIRE(is_observable(sys));
      const auto eig = sys.A.eigenvalues();
      for (Eigen::Index k = 0; k < eig.size(); ++k) {
        CHECK(eig(k).real() <= -0.1 + 1e-6);
        CHECK(eig(k).real() >= -5.0 - 1e-6);
      }
      CHECK((sys.C.array() >= 0.0).all());
    }
    ControlConfig zero_b = cfg;
    zero_b.elements_of_B = {0.0, 0.0};
    CHECK_THROWS(sample_system(rng, zero_b));
  }

  TEST_CASE("scalar CARE matches the closed form") {
    const auto sol = solve_care(m1(-1), m1(1), m1(1), m1(1));
    CHECK(std::abs(sol.P(0, 0) - (std::sqrt(2.0) - 1.0)) <= 1e-9);
    CHECK(std::abs(sol.K(0, 0) - sol.P(0, 0)) <= 1e-12);

    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int i = 0; i < 100; ++i) {
      const double a = -u(gen) + 0.05 * (gen() % 2 ? 40.0 : 0.0);  // some unstable plants
      const double b = (gen() % 2 ? 1.0 : -1.0) * u(gen), q = u(gen), r = u(gen);
      const double expected = (a * r + std::sqrt(a * a * r * r + q * r * b * b)) / (b * b);
      const auto s = solve_care(m1(a), m1(b), m1(q), m1(r));
      CHECK(std::abs(s.P(0, 0) - expected) <= 1e-9 * std::max(1.0, expected));
    }
  }

  TEST_CASE("CARE residual and closed-loop stability on random systems") {
    ControlConfig cfg;
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
      const auto sys = sample_system(rng, cfg);
      const auto lqr = lqr_design(sys, cfg.r_weight);
      CHECK(care_residual(sys.A, sys.B, lqr.Q, lqr.R, lqr.P) <= 1e-8 * (1.0 + lqr.P.norm()));
      CHECK((lqr.P - lqr.P.transpose()).norm() <= 1e-10 * (1.0 + lqr.P.norm()));
      CHECK(lqr.P.selfadjointView<Eigen::Upper>().eigenvalues().minCoeff() >= -1e-9);
      CHECK(closed_loop_stable(sys, lqr));
    }
    // unstable open loop still gets a stabilising gain
    StateSpaceSystem un;
    un.A = Eigen::MatrixXd{{1, 2}, {0, 0.5}};
    un.B = Eigen::MatrixXd{{0}, {1}};
    un.C = Eigen::MatrixXd{{1, 0}};
    un.D = Eigen::MatrixXd::Zero(1, 1);
    const auto l = lqr_design(un, 0.1);
    CHECK(closed_loop_stable(un, l));
    CHECK(care_residual(un.A, un.B, l.Q, l.R, l.P) <= 1e-8 * (1.0 + l.P.norm()));
  }

  TEST_CASE("zero state weight on a stable plant gives zero gain") {
    const auto s = solve_care(Eigen::MatrixXd{{-1, 0.5}, {0, -2}}, Eigen::MatrixXd{{1}, {1}},
                              Eigen::MatrixXd::Zero(2, 2), m1(1));
    CHECK(s.P.norm() <= 1e-12);
    CHECK(s.K.norm() <= 1e-12);
    CHECK_THROWS(solve_care(m1(-1), m1(1), m1(1), m1(0)));
  }

  TEST_CASE("Lyapunov solver") {
    const Eigen::MatrixXd A{{-1, 2}, {0, -3}};
    const Eigen::MatrixXd M{{1, 0}, {0, 2}};
    const auto X = solve_lyapunov(A, M);
    CHECK((A.transpose() * X + X * A + M).norm() <= 1e-12);
  }

  TEST_CASE("RK4 accuracy") {
    const auto sys = scalar(-1.3, 0.0, 1.0);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.0);
    const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
    for (int i = 0; i < 100; ++i) x = rk4_step(sys, x, u, 0.01);
    CHECK(std::abs(x(0) - std::exp(-1.3)) / std::exp(-1.3) <= 1e-6);
  }

  TEST_CASE("LQR rollouts") {
    const auto sys = scalar(-1, 1, 1);
    const auto lqr = lqr_design(sys, 0.1);
    const auto eq = lqr_rollout(sys, lqr, Eigen::VectorXd::Zero(1), 0.0, 0.05, 50);
    for (std::size_t k = 0; k < eq.size(); ++k) {
      CHECK(eq.input[k] == 0.0);
      CHECK(eq.output[k] == 0.0);
    }

    const auto decay = lqr_rollout(sys, lqr, Eigen::VectorXd::Constant(1, 1.0), 0.0, 0.05, 100);
    for (std::size_t k = 1; k < decay.size(); ++k) CHECK(decay.output[k] < decay.output[k - 1]);
    Rng rng(1);
    const auto bb = bang_bang_rollout(sys, Eigen::VectorXd::Constant(1, 1.0), 0.0, BangBangOptions{}, 0.05, 100, rng);
    CHECK(quadratic_cost(decay, lqr.Q, lqr.R) <= quadratic_cost(bb, lqr.Q, lqr.R));

    ControlConfig cfg;
    Rng srng(3);
    for (int i = 0; i < 20; ++i) {
      const auto s = sample_system(srng, cfg);
      const auto l = lqr_design(s, cfg.r_weight);
      const Eigen::MatrixXd acl = s.A - s.B * l.K;
      const double slowest = acl.eigenvalues().real().cwiseAbs().minCoeff();
      const double dt = 0.05;
      const auto steps = static_cast<std::size_t>(std::ceil(10.0 / slowest / dt)) + 1;
      const double r = 0.3;
      const auto tr = lqr_rollout(s, l, Eigen::VectorXd::Zero(s.order()), r, dt, steps);
      CHECK(std::abs(tr.output.back() - r) <= 1e-2);
    }
  }

  TEST_CASE("saturated LQR stays within limits") {
    const auto sys = scalar(-0.5, 0.2, 1.0);
    const auto lqr = lqr_design(sys, 0.1);
    const auto tr = lqr_rollout(sys, lqr, Eigen::VectorXd::Constant(1, -1.0), 1.0, 0.05, 100, Range{-1.0, 1.0});
    for (double u : tr.input) {
      CHECK(u >= -1.0);
      CHECK(u <= 1.0);
    }
  }

  TEST_CASE("bang-bang law") {
    const auto sys = scalar(-1, 1, 1);
    Rng rng(2);
    const auto up = bang_bang_rollout(sys, Eigen::VectorXd::Zero(1), 5.0, BangBangOptions{}, 0.05, 60, rng);
    for (double u : up.input) CHECK(u == 1.0);

    const auto tr = bang_bang_rollout(sys, Eigen::VectorXd::Zero(1), 0.5, BangBangOptions{}, 0.05, 200, rng);
    std::size_t first = 0;
    while (tr.output[first] < 0.5) ++first;
    int alternations = 0;
    for (std::size_t k = first + 1; k < tr.size(); ++k) {
      CHECK(std::abs(tr.output[k] - 0.5) < 0.1);
      if (tr.input[k] != tr.input[k - 1]) ++alternations;
    }
    CHECK(alternations > 20);

    BangBangController hold(BangBangOptions{});
    CHECK(hold.step(0.5, 0.5, rng) == -1.0);
    CHECK(hold.step(0.5, 0.0, rng) == 1.0);
    CHECK(hold.step(0.5, 0.5, rng) == 1.0);

    BangBangOptions delayed;
    delayed.delay = 2;
    BangBangController d(delayed);
    CHECK(d.step(0.0, -1.0, rng) == 1.0);
    CHECK(d.step(0.0, 1.0, rng) == 1.0);
    CHECK(d.step(0.0, 1.0, rng) == 1.0);
    CHECK(d.step(0.0, 1.0, rng) == -1.0);
  }

  TEST_CASE("delay does not reduce chatter") {
    const auto sys = scalar(-1, 1, 1);
    Rng rng(3);
    BangBangOptions slow;
    slow.delay = 5;
    const auto a = bang_bang_rollout(sys, Eigen::VectorXd::Zero(1), 0.5, BangBangOptions{}, 0.05, 200, rng);
    const auto b = bang_bang_rollout(sys, Eigen::VectorXd::Zero(1), 0.5, slow, 0.05, 200, rng);
    CHECK(chatter_amplitude(b.output, 50) >= chatter_amplitude(a.output, 50));
    const std::vector<double> v{0.0, 1.0, 3.0, -1.0};
    CHECK(chatter_amplitude(v, 2) == 2.0);
    CHECK(chatter_amplitude(v, 10) == 2.0);
  }

  TEST_CASE("Game Boy filter") {
    const double fs = 8000.0, wn = 2.0 * std::numbers::pi * 500.0;
    const std::vector<double> dc(4000, 0.7);
    const auto y = gameboy_filter(dc, 2.0, wn, 0.7, fs);
    CHECK(std::abs(y.back() - 1.4) <= 1e-3);

    std::vector<double> sine(16000);
    for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = std::sin(wn * static_cast<double>(i) / fs);
    const auto s = gameboy_filter(sine, 1.0, wn, 0.5, fs);
    double peak = 0.0;
    for (std::size_t i = sine.size() / 2; i < sine.size(); ++i) peak = std::max(peak, std::abs(s[i]));
    CHECK(std::abs(peak - 1.0) <= 0.02);

    std::vector<double> impulse(20000, 0.0);
    impulse[0] = 1.0;
    const auto h = gameboy_filter(impulse, 1.0, wn, 0.2, fs);
    double energy = 0.0, late = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      energy += h[i] * h[i];
      if (i > h.size() / 2) late += h[i] * h[i];
    }
    CHECK(std::isfinite(energy));
    CHECK(late <= 1e-12 * energy);
    CHECK_THROWS(gameboy_filter(dc, 1.0, wn, 0.0, fs));
    CHECK_THROWS(gameboy_filter(dc, 1.0, wn, 0.5, 0.0));
  }

  TEST_CASE("control dataset encoding") {
    ControlConfig cfg;
    cfg.num_traces = 0;
    Rng rng(4);
    CHECK(build_control_dataset(cfg, rng).records.empty());

    cfg.num_traces = 12;
    cfg.steps = 30;
    const auto ds = build_control_dataset(cfg, rng);
    REQUIRE(ds.records.size() == 12);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& rec = ds.records[i];
      CHECK_NOTHROW(validate(rec));
      CHECK(rec.tokens.size() == 4 * cfg.steps);
      for (TokenId t : rec.tokens) {
        const auto c = classify(t);
        CHECK((c == TokenClass::action || t == vocab::kLineBreak || t == vocab::kModalitySwitch));
      }
      const auto& tr = ds.traces[i];
      const Record back = decode(rec);
      REQUIRE(back.audio.size() == 3);
      const std::vector<double>* src[] = {&tr.setpoint, &tr.input, &tr.output};
      for (int c = 0; c < 3; ++c) {
        for (std::size_t k = 0; k < tr.size(); ++k) {
          CHECK(std::abs(back.audio[c][k] - std::clamp((*src[c])[k], -1.0, 1.0)) <= 1.0 / 24.0 + 1e-12);
        }
      }
    }
    for (double fraction : {0.0, 1.0}) {
      ControlConfig only = cfg;
      only.lqr_fraction = fraction;
      for (const auto& tr : build_control_dataset(only, rng).traces) {
        CHECK(tr.controller == (fraction == 1.0 ? Controller::lqr : Controller::bang_bang));
      }
    }

    Rng again(4);
    build_control_dataset(ControlConfig{.num_traces = 0}, again);
    ControlConfig cfg2 = cfg;
    const auto ds2 = build_control_dataset(cfg2, again);
    CHECK(ds2.records == ds.records);

    std::ostringstream csv;
    write_trace_csv(csv, ds.traces);
    CHECK(csv.str().rfind("t,setpoint,output,action,controller\n", 0) == 0);
  }

  TEST_CASE("config validation and JSON names") {
    ControlConfig cfg;
    nlohmann::json j = cfg;
    CHECK(j.at("eigenvalues_of_A") == nlohmann::json::array({-5.0, -0.1}));
    CHECK(j.at("bang_bang_delay") == nlohmann::json::array({0, 5}));
    CHECK(j.get<ControlConfig>().num_traces == cfg.num_traces);
    ControlConfig bad = cfg;
    bad.eigenvalues_of_A = {-1.0, 0.5};
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.u_min = 1.0;
    CHECK_THROWS(bad.validate());
  }
}

TEST_SUITE("control_rollout") {
  TEST_CASE("rollout requires a diffusion model") {
    SeqModelConfig mc;
    mc.mode = Mode::predictive;
    mc.embed_dim = 12;
    mc.hidden = 4;
    SequenceModel model(mc, 1);
    Rng rng(1);
    BangBangOptions bb;
    const auto hist = bang_bang_rollout(first_order_plant(), Eigen::VectorXd::Zero(1), 0.5, bb, 0.05, 10, rng);
    CHECK_THROWS(diffusion_control_rollout(model, first_order_plant(), 0.5, hist, DiffusionControlOptions{}, rng));
  }

  TEST_CASE("single repeat runs and seeded runs replay exactly") {
    SeqModelConfig mc;
    mc.mode = Mode::diffusion;
    mc.embed_dim = 12;
    mc.hidden = 6;
    mc.bidirectional = true;
    SequenceModel model(mc, 2);
    ControlDemoConfig cfg;
    cfg.warmup_steps = 20;
    cfg.horizon = 10;
    cfg.repeats = 1;
    cfg.window = 32;
    cfg.tail = 5;
    const auto a = run_control_demo(model, cfg, 7);
    const auto b = run_control_demo(model, cfg, 7);
    REQUIRE(a.diffusion.size() == 30);
    CHECK(a.diffusion.input == b.diffusion.input);
    CHECK(a.diffusion.output == b.diffusion.output);
    CHECK(a.terminal_error == b.terminal_error);
    for (std::size_t k = 0; k < 20; ++k) CHECK(a.diffusion.input[k] == a.bang_bang.input[k]);
    for (std::size_t k = 20; k < 30; ++k) {
      CHECK(a.diffusion.input[k] >= -1.0);
      CHECK(a.diffusion.input[k] <= 1.0);
    }
  }
}
