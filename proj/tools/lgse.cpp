#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lgse/checkpoint.hpp"
#include "lgse/config.hpp"
#include "lgse/eval.hpp"
#include "lgse/selftest.hpp"
#include "lgse/wav.hpp"

using namespace lgse;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& s : c.sets) apply_override(cfg, s);
  return cfg;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

int cmd_synth(const RunConfig& cfg) {
  const auto corpus = training_corpus(cfg);
  save_corpus(cfg.paths.corpus_dir, corpus, cfg.seed);
  std::cout << "wrote " << corpus.size() << " pairs to " << cfg.paths.corpus_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, bool resume) {
  const auto corpus = load_corpus(cfg.paths.corpus_dir);
  EnhancementModel model(cfg.model, cfg.seed);
  Adam adam(cfg.train.adam);
  if (resume) {
    const Checkpoint ck = Checkpoint::load(cfg.paths.checkpoint);
    model = ck.restore_model();
    ck.restore_optimizer(adam);
    std::cout << "resuming at step " << adam.steps() << "\n";
  }
  TrainConfig tc = cfg.train;
  tc.checkpoint_path = cfg.paths.checkpoint;
  const auto valid = validation_set(cfg);
  TrainHooks hooks;
  if (!valid.empty()) hooks.validation = &valid;
  const std::string best_path = cfg.paths.checkpoint + ".best";
  hooks.on_best = [&](const Checkpoint& ck) { ck.save(best_path); };
  const long report = std::max<long>(1, steps_per_epoch(tc, corpus.size()));
  hooks.on_step = [&](const LossRecord& r) {
    if (r.step % report == 0) std::printf("step %ld  lr %.3g  loss %.6f\n", r.step, r.lr, r.loss);
    return true;
  };
  const TrainResult res = train(model, corpus, tc, adam, hooks);
  Rng next = batch_rng(tc, adam.steps() + 1);
  Checkpoint::capture(model, &adam, &next).save(cfg.paths.checkpoint);
  write_text(cfg.paths.loss_csv, loss_trace_csv(res.trace));
  std::cout << "trained " << res.trace.size() << " steps";
  if (res.skipped_clips) std::cout << " (" << res.skipped_clips << " clips skipped)";
  std::cout << "; checkpoint " << cfg.paths.checkpoint;
  if (res.best_validation_step > 0)
    std::cout << ", best validation at step " << res.best_validation_step << " in " << best_path;
  std::cout << "\n";
  return 0;
}

int cmd_enhance(const RunConfig& cfg, const std::string& in, const std::string& out, const std::string& mode) {
  const EnhancementModel model = Checkpoint::load(cfg.paths.checkpoint).restore_model();
  const Waveform noisy = read_wav(in);
  const double chunk_s = cfg.test.chunk_s > 0 ? cfg.test.chunk_s : cfg.train.clip_len_s;
  Waveform y;
  if (mode == "full") {
    y = enhance_full(model, noisy);
  } else {
    int chunks = 0;
    y = enhance_chunked(model, noisy, chunk_s, mode == "seg" ? 0.0 : 0.5, &chunks);
    std::cout << "processed " << chunks << " chunks of " << chunk_s << " s\n";
  }
  const double peak = y.samples.cwiseAbs().maxCoeff();
  if (peak > 1.0) y.samples /= peak;
  write_wav(out, y);
  std::cout << "wrote " << out << " (" << y.duration_s() << " s)\n";
  return 0;
}

int cmd_experiment(const RunConfig& cfg, bool no_train) {
  ExperimentOptions opt;
  opt.train_missing = !no_train;
  opt.log = [](const std::string& s) { std::cout << s << "\n" << std::flush; };
  const ExperimentResult r = run_lengen_experiment(cfg, opt);
  const std::filesystem::path dir = cfg.paths.out_dir;
  write_text(dir / "metrics.csv", metrics_csv(r.rows));
  const std::string md = markdown_report(r.rows);
  write_text(dir / "report.md", md);
  std::cout << md << "wrote " << (dir / "metrics.csv").string() << " and " << (dir / "report.md").string() << "\n";
  return 0;
}

int cmd_selftest() {
  int failed = 0;
  for (const CheckResult& c : run_selftest()) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.module << ": " << c.name;
    if (!c.detail.empty()) std::cout << " (" << c.detail << ")";
    std::cout << "\n";
    failed += !c.passed;
  }
  return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformer speech enhancement with length-generalizing positional encodings"};
  app.require_subcommand(1);
  app.footer("\n" + config_help() + "\nEnvironment: LGSE_THREADS caps worker threads.");

  Common common;
  auto* synth = app.add_subcommand("synth", "write a synthetic clean/noise corpus");
  add_common(synth, common);

  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train a model on the corpus");
  add_common(train_cmd, common);
  train_cmd->add_flag("--resume", resume, "continue from paths.checkpoint");

  std::string in, out, mode = "full";
  auto* enhance = app.add_subcommand("enhance", "enhance a noisy WAV file");
  add_common(enhance, common);
  enhance->add_option("input", in, "noisy 16 kHz mono WAV")->required()->check(CLI::ExistingFile);
  enhance->add_option("output", out, "enhanced WAV")->required();
  enhance->add_option("--mode", mode, "full | seg | seg-o")->check(CLI::IsMember({"full", "seg", "seg-o"}));

  bool no_train = false;
  auto* experiment = app.add_subcommand("experiment", "train/load every encoding and run the length sweep");
  add_common(experiment, common);
  experiment->add_flag("--no-train", no_train, "fail instead of training when a checkpoint is missing");

  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*selftest) return cmd_selftest();
    const RunConfig cfg = resolve(common);
    if (*synth) return cmd_synth(cfg);
    if (*train_cmd) return cmd_train(cfg, resume);
    if (*enhance) return cmd_enhance(cfg, in, out, mode);
    if (*experiment) return cmd_experiment(cfg, no_train);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
