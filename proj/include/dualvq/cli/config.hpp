#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "dualvq/synthcorpus/corpus.hpp"
#include "dualvq/tasks/diarization.hpp"

namespace dualvq {

inline constexpr const char* kOutputRootEnv = "DUALVQ_OUTPUT_ROOT";

struct EvalConfig {
  std::size_t diarization_files = 8;  ///< per condition
  std::size_t enroll_utts = 2;        ///< per speaker
  WindowParams window;
  std::uint64_t seed = 0;

  friend bool operator==(const EvalConfig& a, const EvalConfig& b) {
    return a.diarization_files == b.diarization_files && a.enroll_utts == b.enroll_utts &&
           a.window.window_s == b.window.window_s && a.window.overlap_s == b.window.overlap_s && a.seed == b.seed;
  }
};

struct ExperimentConfig {
  CorpusParams corpus;
  ModelConfig model;
  TrainConfig train;
  std::size_t base_steps = 2000;
  std::size_t dual_steps = 1000;
  /// Classifier loss weight for the dual variants with a speaker head.
  double speaker_weight = 10.0;
  EvalConfig eval;
  std::string output_dir = "runs";

  std::filesystem::path output_root() const {
    if (const char* env = std::getenv(kOutputRootEnv); env != nullptr && *env != '\0') return env;
    return output_dir;
  }
  std::filesystem::path corpus_dir() const { return output_root() / "corpus"; }
  std::filesystem::path run_dir(const std::string& variant) const { return output_root() / variant; }
  std::filesystem::path checkpoint_path(const std::string& variant) const { return run_dir(variant) / "model.ckpt"; }

  /// Step budget for the configured variant.
  std::size_t steps() const { return model.dual() ? dual_steps : base_steps; }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.corpus == b.corpus && a.model == b.model && a.base_steps == b.base_steps && a.dual_steps == b.dual_steps &&
           a.speaker_weight == b.speaker_weight &&
           a.eval == b.eval && a.output_dir == b.output_dir && a.train.batch_size == b.train.batch_size &&
           a.train.crop == b.train.crop && a.train.eval_every == b.train.eval_every &&
           a.train.valid_crops == b.train.valid_crops && a.train.init_crops == b.train.init_crops &&
           a.train.optimizer.kind == b.train.optimizer.kind && a.train.optimizer.lr == b.train.optimizer.lr &&
           a.train.optimizer.beta1 == b.train.optimizer.beta1 && a.train.optimizer.beta2 == b.train.optimizer.beta2 &&
           a.train.optimizer.eps == b.train.optimizer.eps;
  }
};

namespace detail {

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& v) {
  if (j.contains(key)) j.at(key).get_to(v);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const EvalConfig& e) {
  j = {{"diarization_files", e.diarization_files},
       {"enroll_utts", e.enroll_utts},
       {"window_s", e.window.window_s},
       {"overlap_s", e.window.overlap_s},
       {"seed", e.seed}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& e) {
  detail::get_if(j, "diarization_files", e.diarization_files);
  detail::get_if(j, "enroll_utts", e.enroll_utts);
  detail::get_if(j, "window_s", e.window.window_s);
  detail::get_if(j, "overlap_s", e.window.overlap_s);
  detail::get_if(j, "seed", e.seed);
}

inline void to_json(nlohmann::json& j, const TrainConfig& t) {
  j = {{"batch_size", t.batch_size},
       {"crop", t.crop},
       {"eval_every", t.eval_every},
       {"valid_crops", t.valid_crops},
       {"init_crops", t.init_crops},
       {"optimizer", t.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
       {"lr", t.optimizer.lr},
       {"beta1", t.optimizer.beta1},
       {"beta2", t.optimizer.beta2},
       {"eps", t.optimizer.eps}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& t) {
  detail::get_if(j, "batch_size", t.batch_size);
  detail::get_if(j, "crop", t.crop);
  detail::get_if(j, "eval_every", t.eval_every);
  detail::get_if(j, "valid_crops", t.valid_crops);
  detail::get_if(j, "init_crops", t.init_crops);
  if (j.contains("optimizer")) {
    const auto k = j.at("optimizer").get<std::string>();
    if (k == "adam") t.optimizer.kind = OptimizerKind::Adam;
    else if (k == "sgd") t.optimizer.kind = OptimizerKind::Sgd;
    else throw std::invalid_argument("unknown optimizer '" + k + "'");
  }
  detail::get_if(j, "lr", t.optimizer.lr);
  detail::get_if(j, "beta1", t.optimizer.beta1);
  detail::get_if(j, "beta2", t.optimizer.beta2);
  detail::get_if(j, "eps", t.optimizer.eps);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"corpus", c.corpus},         {"model", c.model},           {"train", c.train}, {"base_steps", c.base_steps},
       {"dual_steps", c.dual_steps}, {"speaker_weight", c.speaker_weight}, {"eval", c.eval},
       {"output_dir", c.output_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  detail::get_if(j, "corpus", c.corpus);
  detail::get_if(j, "model", c.model);
  detail::get_if(j, "train", c.train);
  detail::get_if(j, "base_steps", c.base_steps);
  detail::get_if(j, "dual_steps", c.dual_steps);
  detail::get_if(j, "speaker_weight", c.speaker_weight);
  detail::get_if(j, "eval", c.eval);
  detail::get_if(j, "output_dir", c.output_dir);
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  return nlohmann::json::parse(is).get<ExperimentConfig>();
}

}  // namespace dualvq
