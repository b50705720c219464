// dualvq: corpus generation, training and evaluation from the command line.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dualvq/cli/commands.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> output;
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> train_speakers;
  std::optional<std::size_t> heldout_speakers;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::optional<double> speaker_weight;
  std::optional<std::string> warm_start;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON experiment config");
  cmd->add_option("-o,--output", o.output, "output directory (the DUALVQ_OUTPUT_ROOT environment variable wins)");
  cmd->add_option("--variant", o.variant,
                  "base | global_vq | speaker_label_s | speaker_label_as | adversarial_s | adversarial_as");
  cmd->add_option("--seed", o.seed, "seed for corpus, model and evaluation");
}

/// Defaults, then the config file, then flags.
dualvq::ExperimentConfig resolve(const Overrides& o) {
  dualvq::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = dualvq::load_experiment_config(o.config);
  if (o.output) cfg.output_dir = *o.output;
  if (o.variant) dualvq::parse_variant(*o.variant, cfg.model);
  if (o.seed) {
    cfg.corpus.seed = *o.seed;
    cfg.model.seed = *o.seed;
    cfg.eval.seed = *o.seed;
  }
  if (o.steps) (cfg.model.dual() ? cfg.dual_steps : cfg.base_steps) = *o.steps;
  if (o.train_speakers) cfg.corpus.n_train_speakers = *o.train_speakers;
  if (o.heldout_speakers) cfg.corpus.n_heldout_speakers = *o.heldout_speakers;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.lr) cfg.train.optimizer.lr = *o.lr;
  if (o.speaker_weight) cfg.speaker_weight = *o.speaker_weight;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-codebook VQ-VAE experiments on a synthetic speech corpus"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen-corpus", "render the synthetic corpus and its manifest");
  add_common(gen, o);
  gen->add_option("--train-speakers", o.train_speakers, "number of training speakers");
  gen->add_option("--heldout-speakers", o.heldout_speakers, "number of held-out speakers");

  auto* train = app.add_subcommand("train", "train one variant and save its best checkpoint");
  add_common(train, o);
  train->add_option("--steps", o.steps, "step budget (0 writes the initialized model)");
  train->add_option("--warm-start", o.warm_start, "Base checkpoint to copy the local path from");
  train->add_option("--batch-size", o.batch_size, "crops per step");
  train->add_option("--lr", o.lr, "learning rate");
  train->add_option("--speaker-weight", o.speaker_weight, "classifier loss weight for dual variants with a speaker head");

  auto* eval = app.add_subcommand("eval", "per-condition reconstruction and codebook report");
  add_common(eval, o);
  auto* diar = app.add_subcommand("diarize", "two-speaker diarization from global codes");
  add_common(diar, o);
  auto* rec = app.add_subcommand("recognize", "phone recognition from local codes");
  add_common(rec, o);
  auto* report = app.add_subcommand("report", "SVG plots for a trained variant");
  add_common(report, o);

  CLI11_PARSE(app, argc, argv);

  try {
    const dualvq::ExperimentConfig cfg = resolve(o);
    if (*gen) {
      std::cout << dualvq::cmd_gen_corpus(cfg).string() << '\n';
    } else if (*train) {
      std::optional<std::filesystem::path> ws;
      if (o.warm_start) ws = *o.warm_start;
      std::cout << dualvq::cmd_train(cfg, ws).string() << '\n';
    } else if (*eval) {
      std::cout << dualvq::cmd_eval(cfg).dump(2) << '\n';
    } else if (*diar) {
      std::cout << dualvq::cmd_diarize(cfg).dump(2) << '\n';
    } else if (*rec) {
      std::cout << dualvq::cmd_recognize(cfg).dump(2) << '\n';
    } else if (*report) {
      for (const auto& p : dualvq::cmd_report(cfg)) std::cout << p.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "dualvq: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
