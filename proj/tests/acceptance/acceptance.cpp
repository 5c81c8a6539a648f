// Acceptance runner: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "pixelbytes/checkpoint.hpp"
#include "pixelbytes/control.hpp"
#include "pixelbytes/control_rollout.hpp"
#include "pixelbytes/fixtures.hpp"
#include "pixelbytes/media_io.hpp"
#include "pixelbytes/metrics.hpp"
#include "pixelbytes/pxby_embed.hpp"
#include "pixelbytes/sequence_builder.hpp"
#include "pixelbytes/trainer.hpp"

namespace fs = std::filesystem;
using namespace pixelbytes;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path work;
  std::string cli;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// 1. tokenizer round trip and vocabulary partition

Record random_record(std::mt19937_64& rng) {
  Record r;
  const std::string alphabet = " abcdefghijklmnopqrstuvwxyz0123456789.,!?'-\n";
  const std::size_t text_len = 1 + rng() % 40;
  for (std::size_t i = 0; i < text_len; ++i) r.text.push_back(alphabet[rng() % alphabet.size()]);
  if (rng() % 4 != 0) {
    FrameStack f{1 + rng() % 3, 1 + rng() % 6, 1 + rng() % 6, {}};
    f.indices.resize(f.frames * f.height * f.width);
    for (auto& v : f.indices) v = static_cast<std::uint8_t>(rng() % Palette::kSize);
    r.frames = f;
  }
  if (rng() % 4 != 0) {
    const std::size_t channels = 1 + rng() % 2, n = 1 + rng() % 30;
    r.audio.assign(channels, std::vector<double>(n));
    for (auto& ch : r.audio)
      for (double& v : ch) v = action_center(rng() % vocab::kActionCount);
  }
  return r;
}

Outcome criterion1(Context&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  std::size_t failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const Record r = random_record(rng);
    const TokenStream s = encode_record(r, AudioScaling::raw);
    validate(s);
    if (!(decode(s) == r)) ++failures;
  }
  std::map<TokenClass, std::size_t> counts;
  for (std::size_t id = 0; id < vocab::kSize; ++id) ++counts[classify(static_cast<TokenId>(id))];
  const bool partition = counts[TokenClass::pad] == 1 && counts[TokenClass::line_break] == 1 &&
                         counts[TokenClass::modality_switch] == 1 && counts[TokenClass::text] == 69 &&
                         counts[TokenClass::palette] == 55 && counts[TokenClass::action] == 24 &&
                         counts[TokenClass::invalid] == 0 && classify(vocab::kSize) == TokenClass::invalid;
  const double secs = seconds_since(t0);
  return {failures == 0 && partition && secs < 10.0,
          "round-trip failures " + std::to_string(failures) + "/1000, partition " + (partition ? "ok" : "broken") +
              ", " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. sequence builder against a neighbour-lookup oracle

Outcome criterion2(Context&) {
  std::mt19937_64 rng(2);
  std::size_t mismatches = 0, prev_identity = 0;
  for (int trial = 0; trial < 200; ++trial) {
    TokenGrid g{1 + rng() % 5, 1 + rng() % 5, 1 + rng() % 5, {}};
    g.values.resize(g.frames * g.height * g.width);
    for (auto& v : g.values) v = static_cast<TokenId>(1 + rng() % 150);
    const ContextArray got = create_sequence_data(g);

    auto at = [&](long t, long h, long w) -> TokenId {
      if (t < 0 || h < 0 || w < 0 || t >= long(g.frames) || h >= long(g.height) || w >= long(g.width)) return 0;
      return g.values[(std::size_t(t) * g.height + std::size_t(h)) * g.width + std::size_t(w)];
    };
    std::size_t i = 0;
    bool ok = got.size() == g.values.size();
    for (long t = 0; ok && t < long(g.frames); ++t)
      for (long h = 0; h < long(g.height); ++h)
        for (long w = 0; w < long(g.width); ++w, ++i) {
          const TokenId prev = i == 0 ? at(t, h - 1, w) : g.values[i - 1];
          const ContextRow want{at(t - 1, h - 1, w), at(t - 1, h, w), at(t - 1, h + 1, w),
                                at(t, h - 1, w - 1), at(t, h, w - 1), prev};
          if (got.contexts[i] != want || got.targets[i] != at(t, h, w)) ok = false;
          if (i > 0 && got.contexts[i][5] != got.targets[i - 1]) ++prev_identity;
        }
    if (!ok) ++mismatches;
  }
  return {mismatches == 0 && prev_identity == 0, "mismatching arrays " + std::to_string(mismatches) +
                                                     "/200, prev-column violations " + std::to_string(prev_identity)};
}

// ---------------------------------------------------------------------------
// 3. gradient checks

Outcome criterion3(Context&) {
  const auto t0 = Clock::now();
  double worst_embed = 0.0, worst_model = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    PxByEmbed emb(10, 18, rng);
    std::mt19937_64 gen(seed + 100);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (Parameter* p : {&emb.gate, &emb.ln_gain, &emb.ln_bias})
      for (auto& v : p->value.reshaped()) v += u(gen);
    std::vector<Window3x3> windows(6);
    for (auto& w : windows)
      for (auto& id : w) id = static_cast<TokenId>(gen() % 10);
    Mat up(6, 18);
    for (auto& v : up.reshaped()) v = 2.0 * u(gen);
    emb.zero_grad();
    emb.forward(windows);
    emb.backward(up);
    auto loss = [&] { return (emb.forward(windows).array() * up.array()).sum(); };
    for (const auto& r : gradcheck::check(emb.parameters(), loss, {"pxby.embedding"}))
      worst_embed = std::max(worst_embed, r.rel_error);
  }

  const Mode modes[] = {Mode::predictive, Mode::autoregressive, Mode::autoregressive, Mode::diffusion, Mode::diffusion};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SeqModelConfig c;
    c.mode = modes[seed - 1];
    c.vocab = 11;
    c.embed_dim = 12;
    c.hidden = 5;
    c.layers = seed % 2 == 0 ? 2 : 1;
    c.bidirectional = seed >= 3;
    c.diffusion_steps = 4;
    SequenceModel m(c, seed);
    std::mt19937_64 gen(seed * 31);
    std::vector<ContextRow> ctx(6);
    for (auto& row : ctx)
      for (auto& id : row) id = static_cast<TokenId>(gen() % 11);
    Mat up(6, static_cast<Eigen::Index>(c.output_width()));
    for (auto& v : up.reshaped()) v = std::uniform_real_distribution<double>(-1, 1)(gen);
    NoiseControl noise;
    if (c.mode == Mode::diffusion) {
      KeepMask keep(36);
      for (auto& k : keep) k = static_cast<std::uint8_t>(gen() % 2);
      noise = NoiseControl{2, keep};
    }
    auto loss = [&] {
      Rng rng(99);
      return (m.forward(ctx, 2, 3, rng, noise).logits.array() * up.array()).sum();
    };
    m.zero_grad();
    loss();
    m.backward(up);
    for (const auto& r : gradcheck::check(m.parameters(), loss, {"embed.table"}))
      worst_model = std::max(worst_model, r.rel_error);
  }
  const double secs = seconds_since(t0);
  return {worst_embed <= 1e-4 && worst_model <= 1e-4 && secs < 60.0,
          "worst relative error embed " + fmt(worst_embed, 3) + ", model " + fmt(worst_model, 3) + " over 5 seeds each, " +
              fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 4. internal embedding width

Outcome criterion4(Context&) {
  const std::size_t a = pxby_internal_dim(18), b = pxby_internal_dim(81), c = pxby_internal_dim(162);
  Rng rng(4);
  const bool layer = PxByEmbed(151, 162, rng).internal_dim() == 18;
  return {a == 9 && b == 9 && c == 18 && layer,
          "E_int(18, 81, 162) = (" + std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) + ")"};
}

// ---------------------------------------------------------------------------
// 5. Riccati solver

Outcome criterion5(Context&) {
  const auto one = [](double v) { return Eigen::MatrixXd::Constant(1, 1, v); };
  const LqrSolution s = solve_care(one(-1), one(1), one(1), one(1));
  const double scalar_err = std::abs(s.P(0, 0) - (std::sqrt(2.0) - 1.0));
  ControlConfig cfg;
  Rng rng(5);
  double worst = 0.0;
  std::size_t unstable = 0;
  for (int i = 0; i < 100; ++i) {
    const StateSpaceSystem sys = sample_system(rng, cfg);
    const LqrSolution l = lqr_design(sys, cfg.r_weight);
    worst = std::max(worst, care_residual(sys.A, sys.B, l.Q, l.R, l.P) / (1.0 + l.P.norm()));
    const Eigen::MatrixXd acl = sys.A - sys.B * l.K;
    if ((acl.eigenvalues().real().array() >= 0.0).any()) ++unstable;
  }
  return {scalar_err <= 1e-9 && worst <= 1e-8 && unstable == 0,
          "|P - (sqrt2 - 1)| = " + fmt(scalar_err, 3) + ", worst scaled residual " + fmt(worst, 3) +
              ", unstable closed loops " + std::to_string(unstable) + "/100"};
}

// ---------------------------------------------------------------------------
// 6. Kalman gate

Outcome criterion6(Context&) {
  ControlConfig cfg;
  Rng rng(6);
  std::size_t rejected = 0;
  for (int i = 0; i < 1000; ++i) {
    const StateSpaceSystem sys = sample_system(rng, cfg);
    if (!is_stable(sys) || !is_controllable(sys) || !is_observable(sys)) ++rejected;
  }
  StateSpaceSystem no_input;
  no_input.A = Eigen::MatrixXd{{-1, 0}, {0, -2}};
  no_input.B = Eigen::MatrixXd::Zero(2, 1);
  no_input.C = Eigen::MatrixXd{{1, 1}};
  no_input.D = Eigen::MatrixXd::Zero(1, 1);
  StateSpaceSystem blind = no_input;
  blind.B = Eigen::MatrixXd{{1}, {1}};
  blind.C = Eigen::MatrixXd::Zero(1, 2);
  const bool counterexamples = !is_controllable(no_input) && is_observable(no_input) && is_controllable(blind) &&
                               !is_observable(blind);
  ControlConfig zero_b = cfg;
  zero_b.elements_of_B = {0.0, 0.0};
  bool sampler_rejects = false;
  try {
    sample_system(rng, zero_b);
  } catch (const std::exception&) {
    sampler_rejects = true;
  }
  return {rejected == 0 && counterexamples && sampler_rejects,
          "sampled systems failing a condition " + std::to_string(rejected) + "/1000, counterexamples " +
              (counterexamples && sampler_rejects ? "rejected" : "accepted")};
}

// ---------------------------------------------------------------------------
// 7. autoregressive versus predictive on the synthetic corpus

constexpr std::size_t kFixtureRecords = 220;
constexpr std::uint64_t kFixtureSeed = 7;

Outcome criterion7(Context& ctx) {
  const auto records = synthetic_records(kFixtureRecords, kFixtureSeed);
  std::vector<ContextArray> train_items, val_items;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TokenStream s = encode_record(records[i]);
    tokens += s.tokens.size();
    (i % 10 == 0 ? val_items : train_items).push_back(build_item(s));
  }
  TrainConfig tc;
  tc.epochs = 30;
  tc.seq_len = 64;
  tc.batch_size = 4;
  tc.learning_rate = 0.005;
  const WindowedDataset train(train_items, tc.seq_len, tc.effective_stride());
  const WindowedDataset val(val_items, tc.seq_len, tc.seq_len);

  std::size_t wins = 0;
  double slowest = 0.0;
  std::ostringstream detail;
  detail << tokens << " tokens;";
  for (std::uint64_t seed : {1, 2, 3}) {
    EpochMetrics last[2];
    int k = 0;
    for (Mode mode : {Mode::predictive, Mode::autoregressive}) {
      SeqModelConfig mc;
      mc.mode = mode;
      mc.embed_dim = 48;
      mc.hidden = 64;
      tc.seed = seed;
      SequenceModel model(mc, seed);
      const auto t0 = Clock::now();
      const TrainResult r = train_model(model, train, val, tc,
                                        ctx.work / ("c7_" + std::string(mode_name(mode)) + "_" + std::to_string(seed)));
      slowest = std::max(slowest, seconds_since(t0));
      last[k++] = r.metrics.back();
    }
    const bool win = last[1].val_accuracy > last[0].val_accuracy && last[1].val_loss < last[0].val_loss;
    wins += win;
    detail << " seed " << seed << ": acc " << fmt(last[1].val_accuracy) << " vs " << fmt(last[0].val_accuracy)
           << ", loss " << fmt(last[1].val_loss) << " vs " << fmt(last[0].val_loss) << (win ? " (ar)" : " (pred)")
           << ";";
  }
  detail << " slowest run " << fmt(slowest, 4) << " s";
  return {wins >= 2 && slowest < 20 * 60.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. diffusion noising invariants and training on the control corpus

const json kControlExperiment = json::parse(R"({
  "control": {"system_order": [1, 1], "num_traces": 300, "steps": 100},
  "train": {"epochs": 30, "batch_size": 32, "seq_len": 64, "stride": 32, "learning_rate": 0.002, "seed": 3},
  "model": {"mode": "diffusion", "embed_dim": 48, "hidden": 48, "layers": 1, "bidirectional": true,
            "diffusion_steps": 1},
  "corpus_seed": 1
})");

fs::path control_checkpoint(const Context& ctx) { return ctx.work / "c8_control" / "final.ckpt"; }

// Trains the control model and returns its metrics.
std::vector<EpochMetrics> train_control_model(const Context& ctx) {
  const ControlConfig cc = kControlExperiment.at("control").get<ControlConfig>();
  const TrainConfig tc = kControlExperiment.at("train").get<TrainConfig>();
  const SeqModelConfig mc = kControlExperiment.at("model").get<SeqModelConfig>();
  Rng rng(kControlExperiment.at("corpus_seed").get<std::uint64_t>());
  const ControlDataset ds = build_control_dataset(cc, rng);
  std::vector<ContextArray> train_items, val_items;
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    (i % 10 == 0 ? val_items : train_items).push_back(build_item(ds.records[i]));
  const WindowedDataset train(train_items, tc.seq_len, tc.effective_stride());
  const WindowedDataset val(val_items, tc.seq_len, tc.seq_len);
  SequenceModel model(mc, tc.seed);
  const fs::path dir = control_checkpoint(ctx).parent_path();
  const TrainResult r = train_model(model, train, val, tc, dir);
  save_checkpoint(control_checkpoint(ctx), json{{"model", mc}, {"train", tc}, {"epoch", tc.epochs}}, tc.seed,
                  model.parameters());
  return r.metrics;
}

Outcome criterion8(Context& ctx) {
  SeqModelConfig mc;
  mc.mode = Mode::diffusion;
  mc.embed_dim = 12;
  mc.hidden = 4;
  mc.diffusion_steps = 10;
  SequenceModel m(mc, 8);
  std::mt19937_64 gen(8);
  const std::size_t B = 2, L = 7;
  std::vector<ContextRow> rows(B * L);
  for (auto& r : rows)
    for (auto& id : r) id = static_cast<TokenId>(gen() % 151);
  KeepMask keep(B * L * kContextWidth);
  for (auto& k : keep) k = static_cast<std::uint8_t>(gen() % 2);
  const Mat clean = m.embed_contexts(rows);
  const auto E = static_cast<Eigen::Index>(mc.position_dim());
  bool kept_exact = true, identity = true, pure_noise = true;
  for (int t = 0; t <= 10; ++t) {
    Rng rng(100 + t);
    m.forward(rows, B, L, rng, NoiseControl{t, keep});
    const Mat in = m.last_lstm_input();
    for (std::size_t n = 0; n < B * L; ++n)
      for (std::size_t k = 0; k < kContextWidth; ++k) {
        const auto a = in.block(Eigen::Index(n), Eigen::Index(k) * E, 1, E);
        const auto c = clean.block(Eigen::Index(n), Eigen::Index(k) * E, 1, E);
        if (keep[n * kContextWidth + k] && a != c) kept_exact = false;
        if (t == 0 && a != c) identity = false;
      }
  }
  {
    // alpha(n_d) = 0: a fully noised input ignores the tokens.
    std::vector<ContextRow> other(rows.size());
    for (auto& r : other)
      for (auto& id : r) id = static_cast<TokenId>(gen() % 151);
    const KeepMask none(B * L * kContextWidth, 0);
    Rng r1(5), r2(5);
    m.forward(rows, B, L, r1, NoiseControl{10, none});
    const Mat a = m.last_lstm_input();
    m.forward(other, B, L, r2, NoiseControl{10, none});
    pure_noise = a == m.last_lstm_input();
  }

  const auto metrics = train_control_model(ctx);
  const double first = metrics.front().train_loss, last = metrics.back().train_loss;
  const double drop = 1.0 - last / first;
  return {kept_exact && identity && pure_noise && metrics.size() == 30 && drop >= 0.5,
          std::string("kept slots bit-exact ") + (kept_exact ? "yes" : "no") + ", alpha(0) identity " +
              (identity ? "yes" : "no") + ", alpha(n_d) pure noise " + (pure_noise ? "yes" : "no") +
              "; train loss " + fmt(first) + " -> " + fmt(last) + " over " + std::to_string(metrics.size()) +
              " epochs (" + fmt(100.0 * drop, 3) + "% decrease)"};
}

// ---------------------------------------------------------------------------
// 9. setpoint following on 1/(s+1)

Outcome criterion9(Context& ctx) {
  if (!fs::exists(control_checkpoint(ctx))) train_control_model(ctx);
  SequenceModel model = load_model(control_checkpoint(ctx));
  ControlDemoConfig dc;
  const auto t0 = Clock::now();
  std::size_t wins = 0;
  std::vector<double> errors, chatter;
  for (std::uint64_t i = 0; i < dc.repetitions; ++i) {
    const ControlDemoRun run = run_control_demo(model, dc, 1000 + i);
    wins += run.diffusion_better();
    errors.push_back(run.terminal_error);
    chatter.push_back(run.chatter_amplitude);
  }
  const double secs = seconds_since(t0);
  return {wins >= 80 && secs < 15 * 60.0,
          "diffusion better in " + std::to_string(wins) + "/" + std::to_string(dc.repetitions) +
              " runs; terminal |y - r| " + format_summary(summarize(errors)) + ", bang-bang chatter " +
              format_summary(summarize(chatter)) + "; " + fmt(secs, 4) + " s"};
}

// ---------------------------------------------------------------------------
// 10. metrics

int run_cli(const Context& ctx, const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + ctx.cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion10(Context& ctx) {
  std::size_t failures = 0;
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    std::vector<TokenId> a(1 + rng() % 20), b(1 + rng() % 20);
    for (auto& t : a) t = static_cast<TokenId>(3 + rng() % 6);
    for (auto& t : b) t = static_cast<TokenId>(3 + rng() % 6);
    if (hamming(a, a) != 0.0 || std::abs(cosine(a, a) - 1.0) > 1e-12 || std::abs(bleu(a, a) - 1.0) > 1e-12) ++failures;
    if (hamming(a, b) != hamming(b, a) || std::abs(cosine(a, b) - cosine(b, a)) > 1e-12) ++failures;
  }
  if (bleu(std::vector<TokenId>{9, 10}, std::vector<TokenId>{3, 4, 5}) != 0.0) ++failures;

  std::ifstream in(PIXELBYTES_TEST_DATA_DIR "/bleu_reference.json");
  const json ref = json::parse(in);
  double worst = 0.0;
  for (const auto& c : ref.at("cases")) {
    const auto cand = c.at("candidate").get<std::vector<TokenId>>();
    const auto r = c.at("reference").get<std::vector<TokenId>>();
    worst = std::max(worst, std::abs(bleu(cand, r) - c.at("bleu").get<double>()));
  }

  const fs::path dir = ctx.work / "c10";
  fs::create_directories(dir);
  std::ofstream(dir / "gen.tokens") << "3 4 5 6\n7 8 9\n";
  std::ofstream(dir / "ref.tokens") << "3 4 5 7\n7 8 9\n";
  fs::remove_all(dir / "out");
  const int rc = run_cli(ctx, "eval \"" + (dir / "gen.tokens").string() + "\" \"" + (dir / "ref.tokens").string() +
                                  "\" --out \"" + (dir / "out").string() + "\"",
                         dir / "eval.log");
  const std::string out = slurp(dir / "eval.log");
  const std::regex line(R"(^(hamming|cosine|bleu) -?\d+\.\d{3} ± \d+\.\d{3}$)");
  std::size_t formatted = 0;
  std::istringstream lines(out);
  for (std::string l; std::getline(lines, l);) formatted += std::regex_match(l, line);
  return {failures == 0 && worst <= 1e-9 && rc == 0 && formatted == 3,
          "identity failures " + std::to_string(failures) + ", worst BLEU deviation " + fmt(worst, 3) +
              " on " + std::to_string(ref.at("cases").size()) + " reference pairs, eval lines in mean ± std form " +
              std::to_string(formatted) + "/3"};
}

// ---------------------------------------------------------------------------
// 11. class weights

Outcome criterion11(Context&) {
  const auto w = class_weights(std::vector<double>{4.0, 1.0});
  const bool worked = std::abs(w[0] - 1.1180) <= 1e-4 && std::abs(w[1] - 2.2361) <= 1e-4;
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> f(2 + rng() % 30);
    for (double& v : f) v = std::uniform_real_distribution<double>(0.01, 1e4)(rng);
    const auto ww = class_weights(f);
    for (std::size_t i = 0; i < f.size(); ++i)
      for (std::size_t j = 0; j < f.size(); ++j)
        worst = std::max(worst, std::abs(ww[i] / ww[j] / std::sqrt(f[j] / f[i]) - 1.0));
  }
  return {worked && worst <= 1e-12,
          "f = [4, 1] -> [" + fmt(w[0], 5) + ", " + fmt(w[1], 5) + "], worst ratio-law deviation " + fmt(worst, 3)};
}

// ---------------------------------------------------------------------------
// 12. determinism of every CLI subcommand

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<std::string> files;
  for (const fs::path& root : {a, b})
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), root).string());
  for (const auto& f : files) {
    if (!fs::exists(a / f) || !fs::exists(b / f)) {
      why = f + " missing in one run";
      return false;
    }
    if (slurp(a / f) != slurp(b / f)) {
      why = f + " differs";
      return false;
    }
  }
  return true;
}

Outcome criterion12(Context& ctx) {
  const fs::path dir = ctx.work / "c12";
  fs::remove_all(dir);
  fs::create_directories(dir / "media");
  const auto records = synthetic_records(12, 12);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const fs::path stem = dir / "media" / ("item" + std::to_string(i));
    std::ofstream(fs::path(stem).replace_extension(".txt")) << records[i].text;
    write_grid(fs::path(stem).replace_extension(".grid"), *records[i].frames);
    write_wav(fs::path(stem).replace_extension(".wav"), WavData{8000, records[i].audio});
  }
  std::ofstream(dir / "control.json") << R"({"control": {"system_order": [1, 1], "num_traces": 12, "steps": 40}})";
  std::ofstream(dir / "train.json")
      << R"({"model": {"mode": "autoregressive", "embed_dim": 12, "hidden": 8}, "train": {"epochs": 2, "seq_len": 16, "batch_size": 4}, "val_every": 4})";
  std::ofstream(dir / "train_diffusion.json")
      << R"({"model": {"mode": "diffusion", "embed_dim": 12, "hidden": 8, "bidirectional": true, "diffusion_steps": 1}, "train": {"epochs": 1, "seq_len": 32, "batch_size": 4}, "val_every": 4})";
  std::ofstream(dir / "demo.json") << R"({"demo": {"repetitions": 2, "warmup_steps": 20, "horizon": 10, "repeats": 4, "window": 32}})";

  const std::string d = dir.string();
  struct Step {
    std::string name, args;
  };
  // {run} is replaced by the per-repetition output root.
  const std::vector<Step> steps = {
      {"tokenize", "tokenize " + d + "/media --out {run}/tokenize"},
      {"detokenize", "detokenize {run}/tokenize/corpus.pxtk --out {run}/detokenize"},
      {"build-seq", "build-seq {run}/tokenize/corpus.pxtk --seq-len 16 --out {run}/build-seq"},
      {"gen-control", "gen-control --seed 3 --config " + d + "/control.json --out {run}/gen-control"},
      {"train", "train {run}/tokenize/corpus.pxtk --seed 4 --config " + d + "/train.json --out {run}/train"},
      {"generate", "generate {run}/tokenize/corpus.pxtk --checkpoint {run}/train/best.ckpt --seed 5 --prompt-len 8 "
                   "--max-len 12 --out {run}/generate"},
      {"eval", "eval {run}/generate/generated.tokens {run}/generate/reference.tokens --out {run}/eval"},
      {"train (diffusion)", "train {run}/gen-control/control.pxtk --seed 6 --config " + d +
                                "/train_diffusion.json --out {run}/train-diffusion"},
      {"control-demo", "control-demo --checkpoint {run}/train-diffusion/best.ckpt --seed 7 --config " + d +
                           "/demo.json --out {run}/control-demo"},
  };
  for (int rep : {1, 2}) {
    // Both repetitions use the same paths so recorded arguments match.
    const std::string root = d + "/run";
    const fs::path log = dir / ("log_" + std::to_string(rep) + ".txt");
    for (const Step& s : steps) {
      std::string args = s.args;
      for (std::size_t p; (p = args.find("{run}")) != std::string::npos;) args.replace(p, 5, root);
      if (run_cli(ctx, args, log) != 0) return {false, s.name + " failed: " + slurp(log)};
    }
    fs::rename(root, dir / ("run" + std::to_string(rep)));
  }
  std::size_t identical = 0;
  std::string why;
  const std::vector<std::string> outs = {"tokenize", "detokenize", "build-seq", "gen-control", "train",
                                         "generate", "eval", "train-diffusion", "control-demo"};
  for (const auto& o : outs) {
    if (!same_tree(dir / "run1" / o, dir / "run2" / o, why)) return {false, o + ": " + why};
    ++identical;
  }
  return {identical == outs.size(), std::to_string(identical) + "/" + std::to_string(outs.size()) +
                                        " subcommand outputs bit-identical across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  Context ctx;
  std::string work = "acceptance_work";
  app.add_option("--only", only, "Criteria to run (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--cli", ctx.cli, "Path to the pixelbytes executable")->required();
  CLI11_PARSE(app, argc, argv);
  ctx.work = fs::absolute(work);
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria = {
      {"tokenizer round trip and vocabulary partition", criterion1},
      {"sequence builder matches the neighbour oracle", criterion2},
      {"gradient checks", criterion3},
      {"internal embedding width", criterion4},
      {"scalar CARE and random-system residuals", criterion5},
      {"Kalman gate", criterion6},
      {"autoregressive beats predictive on the fixture corpus", criterion7},
      {"diffusion invariants and training-loss decrease", criterion8},
      {"diffusion setpoint following beats bang-bang chatter", criterion9},
      {"metrics identities, BLEU reference and eval format", criterion10},
      {"class weight ratio law", criterion11},
      {"CLI determinism", criterion12},
  };
  if (only.empty())
    for (int i = 1; i <= 12; ++i) only.push_back(i);

  bool all = true;
  for (int n : only) {
    const auto& [name, fn] = criteria[static_cast<std::size_t>(n - 1)];
    Outcome o;
    try {
      o = fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
