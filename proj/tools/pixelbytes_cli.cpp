#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pixelbytes/checkpoint.hpp"
#include "pixelbytes/control.hpp"
#include "pixelbytes/control_rollout.hpp"
#include "pixelbytes/media_io.hpp"
#include "pixelbytes/metrics.hpp"
#include "pixelbytes/pxtk.hpp"
#include "pixelbytes/sequence_builder.hpp"
#include "pixelbytes/trainer.hpp"

namespace fs = std::filesystem;
using namespace pixelbytes;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out = "out";
};

// Marks an output directory as owned by this process.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".pixelbytes.lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw std::runtime_error("output directory is in use (remove " + path_.string() + " if stale)");
    ::close(fd);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

json load_config(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  std::ifstream in(g.config_path);
  if (!in) throw std::runtime_error("cannot open config " + g.config_path);
  return json::parse(in);
}

// The named section of the config, or the whole document if it has none.
json section(const json& config, const std::string& name) {
  if (config.contains(name)) return config.at(name);
  return config;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_run_config(const fs::path& out, const std::string& command, const Globals& g, const json& config,
                      const json& args) {
  write_json(out / "run_config.json", json{{"command", command}, {"seed", g.seed}, {"config", config}, {"args", args}});
}

std::vector<TokenStream> load_corpus(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("corpus not found: " + path);
  return load_pxtk(path);
}

struct ModalityCounts {
  std::size_t text = 0, image = 0, audio = 0, separators = 0;
};

ModalityCounts count_tokens(const std::vector<TokenStream>& corpus) {
  ModalityCounts c;
  for (const auto& s : corpus) {
    std::size_t covered = 0;
    for (const auto& seg : s.segments) {
      covered += seg.length;
      switch (seg.modality) {
        case Modality::text: c.text += seg.length; break;
        case Modality::image: c.image += seg.length; break;
        case Modality::audio: c.audio += seg.length; break;
      }
    }
    c.separators += s.tokens.size() - covered;
  }
  return c;
}

void print_counts(const std::vector<TokenStream>& corpus) {
  const ModalityCounts c = count_tokens(corpus);
  std::cout << "records " << corpus.size() << "\n"
            << "text " << c.text << "\n"
            << "image " << c.image << "\n"
            << "audio " << c.audio << "\n"
            << "separators " << c.separators << "\n"
            << "total " << (c.text + c.image + c.audio + c.separators) << "\n";
}

// ---- tokenize -------------------------------------------------------------

const std::vector<std::string> kInputExtensions = {".txt", ".grid", ".ppm", ".wav"};

std::map<std::string, std::vector<fs::path>> group_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
    } else if (fs::is_regular_file(in)) {
      files.push_back(in);
    } else {
      throw std::runtime_error("input not found: " + in);
    }
  }
  std::map<std::string, std::vector<fs::path>> groups;
  for (const auto& f : files) {
    const std::string ext = f.extension().string();
    if (std::find(kInputExtensions.begin(), kInputExtensions.end(), ext) == kInputExtensions.end()) continue;
    groups[(f.parent_path() / f.stem()).string()].push_back(f);
  }
  for (auto& [stem, list] : groups) std::sort(list.begin(), list.end());
  return groups;
}

Record read_record(const std::string& stem, const std::vector<fs::path>& files, const Palette& palette) {
  Record r;
  for (const auto& f : files) {
    const std::string ext = f.extension().string();
    if (ext == ".txt") {
      r.text = read_text_file(f);
    } else if (ext == ".grid" || ext == ".ppm") {
      if (r.frames) throw std::runtime_error(stem + ": more than one image file");
      r.frames = ext == ".grid" ? read_grid(f) : quantize_frames(read_ppm(f), palette);
    } else if (ext == ".wav") {
      r.audio = read_wav(f).channels;
    }
  }
  return r;
}

int cmd_tokenize(const Globals& g, const std::vector<std::string>& inputs, std::size_t audio_reduction,
                 std::size_t image_reduction) {
  const fs::path out = g.out;
  OutputLock lock(out);
  const json config = load_config(g);
  const Palette palette =
      config.contains("palette") ? Palette::load(config.at("palette").get<std::string>()) : Palette::nes55();

  const auto groups = group_inputs(inputs);
  if (groups.empty()) throw std::runtime_error("no .txt/.grid/.ppm/.wav inputs found");
  std::vector<TokenStream> corpus;
  json manifest = json::array();
  std::size_t dropped = 0;
  for (const auto& [stem, files] : groups) {
    Record r = read_record(stem, files, palette);
    r = reduce_modalities(r, audio_reduction, image_reduction);
    dropped += encode_text(r.text).dropped;
    corpus.push_back(encode_record(r));
    manifest.push_back(fs::path(stem).filename().string());
  }
  save_pxtk(out / "corpus.pxtk", corpus);
  write_json(out / "manifest.json", manifest);
  write_run_config(out, "tokenize", g, config,
                   json{{"inputs", inputs}, {"audio_reduction", audio_reduction}, {"image_reduction", image_reduction}});
  print_counts(corpus);
  if (dropped > 0) std::cout << "dropped_characters " << dropped << "\n";
  return 0;
}

// ---- detokenize -----------------------------------------------------------

int cmd_detokenize(const Globals& g, const std::string& corpus_path, std::uint32_t sample_rate) {
  const auto corpus = load_corpus(corpus_path);
  const fs::path out = g.out;
  OutputLock lock(out);
  const Palette& palette = Palette::nes55();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::ostringstream name;
    name << std::setw(6) << std::setfill('0') << i;
    const fs::path stem = out / name.str();
    const Record r = decode(corpus[i]);
    if (!r.text.empty()) {
      std::ofstream(fs::path(stem.string() + ".txt"), std::ios::binary) << r.text;
    }
    if (r.frames) {
      write_grid(stem.string() + ".grid", *r.frames);
      write_ppm(stem.string() + ".ppm", frames_to_rgb(*r.frames, palette));
    }
    if (!r.audio.empty()) write_wav(stem.string() + ".wav", WavData{sample_rate, r.audio});
  }
  write_run_config(out, "detokenize", g, load_config(g), json{{"corpus", corpus_path}, {"sample_rate", sample_rate}});
  std::cout << "records " << corpus.size() << "\n";
  return 0;
}

// ---- build-seq ------------------------------------------------------------

int cmd_build_seq(const Globals& g, const std::string& corpus_path, std::size_t seq_len, std::size_t stride) {
  const auto corpus = load_corpus(corpus_path);
  const fs::path out = g.out;
  OutputLock lock(out);
  std::vector<ContextArray> items;
  std::ofstream csv(out / "sequences.csv");
  csv << "record,position,c0,c1,c2,c3,c4,c5,target\n";
  std::size_t rows = 0;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    ContextArray item = build_item(corpus[r]);
    for (std::size_t i = 0; i < item.size(); ++i) {
      csv << r << ',' << i;
      for (TokenId t : item.contexts[i]) csv << ',' << t;
      csv << ',' << item.targets[i] << '\n';
    }
    rows += item.size();
    items.push_back(std::move(item));
  }
  const WindowedDataset windows(std::move(items), seq_len, stride == 0 ? seq_len : stride);
  write_run_config(out, "build-seq", g, load_config(g),
                   json{{"corpus", corpus_path}, {"seq_len", seq_len}, {"stride", stride}});
  std::cout << "records " << corpus.size() << "\nrows " << rows << "\nwindows " << windows.size() << "\n";
  return 0;
}

// ---- gen-control ----------------------------------------------------------

int cmd_gen_control(const Globals& g) {
  const json config = load_config(g);
  const ControlConfig cc = section(config, "control").get<ControlConfig>();
  cc.validate();
  const fs::path out = g.out;
  OutputLock lock(out);
  Rng rng(g.seed);
  const ControlDataset ds = build_control_dataset(cc, rng);
  save_pxtk(out / "control.pxtk", ds.records);
  std::ofstream csv(out / "traces.csv");
  write_trace_csv(csv, ds.traces);
  write_run_config(out, "gen-control", g, json{{"control", cc}}, json::object());
  std::size_t lqr = 0, tokens = 0;
  for (const auto& t : ds.traces) lqr += t.controller == Controller::lqr;
  for (const auto& r : ds.records) tokens += r.tokens.size();
  std::cout << "traces " << ds.traces.size() << "\nlqr " << lqr << "\nbang_bang " << ds.traces.size() - lqr
            << "\ntokens " << tokens << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& corpus_path) {
  const auto corpus = load_corpus(corpus_path);
  const json config = load_config(g);
  SeqModelConfig mc = config.value("model", json::object()).get<SeqModelConfig>();
  TrainConfig tc = config.value("train", json::object()).get<TrainConfig>();
  tc.seed = g.seed;
  mc.validate();
  tc.validate();
  const std::size_t val_every = config.value("val_every", std::size_t{10});
  if (val_every < 2) throw std::runtime_error("val_every must be at least 2");

  std::vector<ContextArray> train_items, val_items;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const TokenStream s = reduce_modalities(corpus[i], tc.audio_reduction, tc.image_reduction);
    (i % val_every == 0 ? val_items : train_items).push_back(build_item(s));
  }
  if (train_items.empty()) train_items = val_items;
  if (val_items.empty()) val_items = train_items;
  const WindowedDataset train(std::move(train_items), tc.seq_len, tc.effective_stride());
  const WindowedDataset val(std::move(val_items), tc.seq_len, tc.seq_len);
  if (train.empty()) throw std::runtime_error("corpus is empty");

  const fs::path out = g.out;
  OutputLock lock(out);
  SequenceModel model(mc, g.seed);
  const TrainResult result = train_model(model, train, val, tc, out);
  write_run_config(out, "train", g, json{{"model", mc}, {"train", tc}, {"val_every", val_every}},
                   json{{"corpus", corpus_path}});
  const EpochMetrics& best = result.metrics[result.best_epoch - 1];
  std::cout << "parameters " << model.parameter_count() << "\nepochs " << result.metrics.size() << "\nbest_epoch "
            << result.best_epoch << "\nval_loss " << best.val_loss << "\nval_accuracy " << best.val_accuracy << "\n";
  return 0;
}

// ---- generate ---------------------------------------------------------------

void write_token_lines(const fs::path& path, const std::vector<std::vector<TokenId>>& lines) {
  std::ofstream out(path);
  for (const auto& line : lines) {
    for (std::size_t i = 0; i < line.size(); ++i) out << (i ? " " : "") << line[i];
    out << '\n';
  }
}

std::vector<std::vector<TokenId>> read_token_lines(const std::string& path) {
  if (fs::path(path).extension() == ".pxtk") {
    std::vector<std::vector<TokenId>> lines;
    for (const auto& s : load_corpus(path)) lines.push_back(s.tokens);
    return lines;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<TokenId>> lines;
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::vector<TokenId> tokens;
    for (long v; ls >> v;) {
      if (v < 0 || v >= static_cast<long>(vocab::kSize)) throw std::runtime_error(path + ": token out of range");
      tokens.push_back(static_cast<TokenId>(v));
    }
    if (!ls.eof()) throw std::runtime_error(path + ": malformed token line");
    lines.push_back(std::move(tokens));
  }
  return lines;
}

struct GenerateArgs {
  std::string checkpoint;
  std::string corpus;
  std::size_t prompt_len = 16;
  std::size_t max_len = 32;
  std::size_t count = 0;
  double temperature = 1.0;
};

int cmd_generate(const Globals& g, const GenerateArgs& a) {
  if (!fs::exists(a.checkpoint)) throw std::runtime_error("checkpoint not found: " + a.checkpoint);
  SequenceModel model = load_model(a.checkpoint);
  const auto corpus = load_corpus(a.corpus);
  if (a.prompt_len == 0) throw std::runtime_error("prompt-len must be positive");
  const fs::path out = g.out;
  OutputLock lock(out);

  Rng rng(g.seed);
  std::vector<std::vector<TokenId>> generated, reference;
  const std::size_t n = a.count == 0 ? corpus.size() : std::min(a.count, corpus.size());
  for (std::size_t r = 0; r < n; ++r) {
    const ContextArray item = build_item(corpus[r]);
    if (item.size() < a.prompt_len) continue;
    const std::size_t cont = std::min(a.max_len, item.size() - a.prompt_len);
    reference.emplace_back(item.targets.begin() + static_cast<std::ptrdiff_t>(a.prompt_len),
                           item.targets.begin() + static_cast<std::ptrdiff_t>(a.prompt_len + cont));
    GenerationOptions opts;
    opts.temperature = a.temperature;
    if (model.config().mode == Mode::diffusion) {
      // Infill the continuation rows; row i+1 carries token i in its last slot.
      const std::size_t rows = std::min(item.size(), a.prompt_len + cont + 1);
      std::vector<ContextRow> seed(item.contexts.begin(), item.contexts.begin() + static_cast<std::ptrdiff_t>(rows));
      KeepMask keep(rows * kContextWidth, 1);
      for (std::size_t l = a.prompt_len; l < rows; ++l) {
        seed[l] = ContextRow{};
        std::fill_n(keep.begin() + static_cast<std::ptrdiff_t>(l * kContextWidth), kContextWidth, 0);
      }
      opts.keep = keep;
      opts.max_len = rows - a.prompt_len;
      const GenerationResult res = generate(model, seed, opts, rng);
      std::vector<TokenId> tokens;
      for (std::size_t l = a.prompt_len + 1; l < rows; ++l) tokens.push_back(res.contexts[l][kContextWidth - 1]);
      while (tokens.size() < cont) tokens.push_back(res.contexts[rows - 1][kContextWidth - 2]);
      generated.push_back(std::move(tokens));
    } else {
      const std::vector<ContextRow> seed(item.contexts.begin(),
                                         item.contexts.begin() + static_cast<std::ptrdiff_t>(a.prompt_len));
      opts.max_len = cont;
      opts.history.assign(item.targets.begin(), item.targets.begin() + static_cast<std::ptrdiff_t>(a.prompt_len));
      generated.push_back(generate(model, seed, opts, rng).tokens);
    }
  }
  write_token_lines(out / "generated.tokens", generated);
  write_token_lines(out / "reference.tokens", reference);
  write_run_config(out, "generate", g, load_config(g),
                   json{{"checkpoint", a.checkpoint},
                        {"corpus", a.corpus},
                        {"prompt_len", a.prompt_len},
                        {"max_len", a.max_len},
                        {"count", a.count},
                        {"temperature", a.temperature}});
  std::cout << "sequences " << generated.size() << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------

int cmd_eval(const Globals& g, const std::string& generated_path, const std::string& reference_path) {
  const auto gen = read_token_lines(generated_path);
  const auto ref = read_token_lines(reference_path);
  if (gen.size() != ref.size()) throw std::runtime_error("generated and reference differ in sequence count");
  if (gen.empty()) throw std::runtime_error("nothing to evaluate");
  const fs::path out = g.out;
  OutputLock lock(out);
  std::vector<double> h, c, b;
  std::ofstream csv(out / "eval.csv");
  csv << "index,hamming,cosine,bleu\n" << std::setprecision(17);
  for (std::size_t i = 0; i < gen.size(); ++i) {
    h.push_back(hamming(gen[i], ref[i]));
    c.push_back(cosine(gen[i], ref[i]));
    b.push_back(bleu(gen[i], ref[i]));
    csv << i << ',' << h.back() << ',' << c.back() << ',' << b.back() << '\n';
  }
  json summary;
  for (const auto& [name, values] : {std::pair{"hamming", &h}, std::pair{"cosine", &c}, std::pair{"bleu", &b}}) {
    const Summary s = summarize(*values);
    summary[name] = {{"mean", s.mean}, {"std", s.std}, {"formatted", format_summary(s)}};
    std::cout << name << " " << format_summary(s) << "\n";
  }
  write_json(out / "eval.json", summary);
  write_run_config(out, "eval", g, load_config(g), json{{"generated", generated_path}, {"reference", reference_path}});
  return 0;
}

// ---- control-demo -----------------------------------------------------------

int cmd_control_demo(const Globals& g, const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint);
  SequenceModel model = load_model(checkpoint);
  const json config = load_config(g);
  const ControlDemoConfig dc = section(config, "demo").get<ControlDemoConfig>();
  dc.validate();
  const fs::path out = g.out;
  OutputLock lock(out);

  Rng seeds(g.seed);
  std::vector<double> errors, chatter;
  std::size_t wins = 0;
  std::ofstream runs(out / "runs.csv");
  runs << "run,seed,delay,noise_sigma,terminal_error,chatter_amplitude,diffusion_better\n" << std::setprecision(17);
  for (std::size_t i = 0; i < dc.repetitions; ++i) {
    const std::uint64_t seed = seeds();
    const ControlDemoRun run = run_control_demo(model, dc, seed);
    if (i == 0) {
      std::ofstream trace(out / "trace.csv");
      const std::vector<ControlTrace> both{run.bang_bang, run.diffusion};
      write_trace_csv(trace, both);
    }
    errors.push_back(run.terminal_error);
    chatter.push_back(run.chatter_amplitude);
    wins += run.diffusion_better();
    runs << i << ',' << seed << ',' << run.bang_bang.delay << ',' << run.bang_bang.noise_sigma << ','
         << run.terminal_error << ',' << run.chatter_amplitude << ',' << int{run.diffusion_better()} << '\n';
  }
  const Summary e = summarize(errors), ch = summarize(chatter);
  write_json(out / "summary.json", json{{"terminal_error", {{"mean", e.mean}, {"std", e.std}}},
                                        {"chatter_amplitude", {{"mean", ch.mean}, {"std", ch.std}}},
                                        {"diffusion_better", wins},
                                        {"repetitions", dc.repetitions}});
  write_run_config(out, "control-demo", g, json{{"demo", dc}}, json{{"checkpoint", checkpoint}});
  std::cout << "terminal_error " << format_summary(e) << "\nchatter_amplitude " << format_summary(ch)
            << "\ndiffusion_better " << wins << "/" << dc.repetitions << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PixelBytes tokenizer, sequence models and control experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON configuration file");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::vector<std::string> inputs;
  std::size_t audio_reduction = 1, image_reduction = 1;
  auto* tokenize = app.add_subcommand("tokenize", "Tokenize .txt/.grid/.ppm/.wav files grouped by stem");
  tokenize->add_option("inputs", inputs, "Files or directories")->required();
  tokenize->add_option("--audio-reduction", audio_reduction)->check(CLI::PositiveNumber);
  tokenize->add_option("--image-reduction", image_reduction)->check(CLI::PositiveNumber);

  std::string corpus;
  std::uint32_t sample_rate = 8000;
  auto* detokenize = app.add_subcommand("detokenize", "Write the records of a corpus back to media files");
  detokenize->add_option("corpus", corpus)->required();
  detokenize->add_option("--sample-rate", sample_rate)->capture_default_str();

  std::size_t seq_len = 64, stride = 0;
  auto* build_seq = app.add_subcommand("build-seq", "Export context rows and count training windows");
  build_seq->add_option("corpus", corpus)->required();
  build_seq->add_option("--seq-len", seq_len)->check(CLI::PositiveNumber)->capture_default_str();
  build_seq->add_option("--stride", stride, "0 means seq-len");

  app.add_subcommand("gen-control", "Generate the LQR / bang-bang control corpus");

  auto* train = app.add_subcommand("train", "Train a sequence model on a corpus");
  train->add_option("corpus", corpus)->required();

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Continue corpus records from a prompt");
  generate->add_option("corpus", gen.corpus)->required();
  generate->add_option("--checkpoint", gen.checkpoint)->required();
  generate->add_option("--prompt-len", gen.prompt_len)->capture_default_str();
  generate->add_option("--max-len", gen.max_len)->capture_default_str();
  generate->add_option("--count", gen.count, "0 means every record");
  generate->add_option("--temperature", gen.temperature)->check(CLI::PositiveNumber)->capture_default_str();

  std::string generated, reference;
  auto* eval = app.add_subcommand("eval", "Hamming, cosine and BLEU between token files");
  eval->add_option("generated", generated)->required();
  eval->add_option("reference", reference)->required();

  std::string checkpoint;
  auto* demo = app.add_subcommand("control-demo", "Diffusion setpoint following against bang-bang");
  demo->add_option("--checkpoint", checkpoint)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (tokenize->parsed()) return cmd_tokenize(g, inputs, audio_reduction, image_reduction);
    if (detokenize->parsed()) return cmd_detokenize(g, corpus, sample_rate);
    if (build_seq->parsed()) return cmd_build_seq(g, corpus, seq_len, stride);
    if (app.got_subcommand("gen-control")) return cmd_gen_control(g);
    if (train->parsed()) return cmd_train(g, corpus);
    if (generate->parsed()) return cmd_generate(g, gen);
    if (eval->parsed()) return cmd_eval(g, generated, reference);
    if (demo->parsed()) return cmd_control_demo(g, checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
