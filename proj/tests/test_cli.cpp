#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dualvq/cli/commands.hpp"

using namespace dualvq;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

ExperimentConfig tiny(const fs::path& root) {
  ExperimentConfig c;
  c.output_dir = root.string();
  c.corpus.n_train_speakers = 3;
  c.corpus.n_heldout_speakers = 2;
  c.corpus.condition_speakers = 2;
  c.corpus.train_utts = 2;
  c.corpus.valid_utts = 1;
  c.corpus.condition_utts = 6;
  c.corpus.text_length = 10;
  c.model.strides = {16};
  c.model.channels = 8;
  c.model.local_K = 8;
  c.model.global_K = 4;
  c.model.embed_D = 4;
  c.train.batch_size = 2;
  c.train.crop = 320;
  c.train.eval_every = 5;
  c.train.valid_crops = 2;
  c.train.init_crops = 4;
  c.base_steps = 10;
  c.dual_steps = 5;
  c.eval.diarization_files = 2;
  c.eval.window = {0.25, 0.05};
  return c;
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("dualvq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    unsetenv(kOutputRootEnv);
    cfg_ = tiny(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  fs::path root_;
  ExperimentConfig cfg_;
};

void expect_condition_keys(const nlohmann::json& j) {
  for (const char* k : {"C1", "C2", "C3", "C4", "Avg"}) EXPECT_TRUE(j.contains(k)) << k;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = tiny("out");
  parse_variant("adversarial_as", c.model);
  c.train.optimizer.kind = OptimizerKind::Sgd;
  c.train.optimizer.lr = 0.05;
  c.eval.seed = 17;
  c.speaker_weight = 2.5;
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<ExperimentConfig>(), c);
}

TEST(Config, PartialFileKeepsDefaults) {
  const fs::path p = fs::temp_directory_path() / "dualvq_partial.json";
  { std::ofstream(p) << R"({"model": {"variant": "global_vq"}, "base_steps": 7})"; }
  const ExperimentConfig c = load_experiment_config(p);
  EXPECT_EQ(c.model.variant, Variant::GlobalVQ);
  EXPECT_EQ(c.base_steps, 7u);
  EXPECT_EQ(c.dual_steps, ExperimentConfig{}.dual_steps);
  EXPECT_EQ(c.corpus, CorpusParams{});
  fs::remove(p);
  EXPECT_ANY_THROW(load_experiment_config(p));
}

TEST(Config, EnvironmentOverridesOutputRoot) {
  ExperimentConfig c;
  c.output_dir = "a";
  setenv(kOutputRootEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(c.output_root(), fs::path("/tmp/elsewhere"));
  unsetenv(kOutputRootEnv);
  EXPECT_EQ(c.output_root(), fs::path("a"));
}

TEST_F(CliRun, GenCorpusIsReproducible) {
  cmd_gen_corpus(cfg_);
  const std::string manifest = slurp(cfg_.corpus_dir() / "manifest.json");
  const fs::path some_wav = fs::recursive_directory_iterator(cfg_.corpus_dir() / "C3")->path();
  std::string wav;
  for (const auto& e : fs::recursive_directory_iterator(cfg_.corpus_dir())) {
    if (e.path().extension() == ".wav") {
      wav = slurp(e.path());
      break;
    }
  }
  cmd_gen_corpus(cfg_);
  EXPECT_EQ(slurp(cfg_.corpus_dir() / "manifest.json"), manifest);
  ASSERT_FALSE(wav.empty());
  std::string again;
  for (const auto& e : fs::recursive_directory_iterator(cfg_.corpus_dir())) {
    if (e.path().extension() == ".wav") {
      again = slurp(e.path());
      break;
    }
  }
  EXPECT_EQ(again, wav);
  EXPECT_TRUE(fs::exists(some_wav));
  EXPECT_EQ(load_experiment_config(root_ / "config.json"), cfg_);
}

TEST_F(CliRun, ZeroSpeakersIsAnError) {
  cfg_.corpus.n_train_speakers = 0;
  EXPECT_THROW(cmd_gen_corpus(cfg_), std::invalid_argument);
}

TEST_F(CliRun, MissingCorpusIsReported) {
  EXPECT_THROW(cmd_train(cfg_), std::runtime_error);
}

TEST_F(CliRun, ZeroStepsWritesUntrainedCheckpoint) {
  cmd_gen_corpus(cfg_);
  cfg_.base_steps = 0;
  const fs::path ck = cmd_train(cfg_);
  EXPECT_TRUE(fs::exists(ck));
  const nlohmann::json r = read_json(cfg_.run_dir("base") / "train_report.json");
  EXPECT_EQ(r.at("steps"), 0);
  EXPECT_EQ(load_checkpoint(ck).step, 0);
}

TEST_F(CliRun, FullPipeline) {
  cmd_gen_corpus(cfg_);
  const fs::path base_ck = cmd_train(cfg_);
  EXPECT_EQ(read_json(cfg_.run_dir("base") / "train_report.json").at("steps"), 10);
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(std::ifstream(cfg_.run_dir("base") / "loss_curve.csv").rdbuf()), {}, '\n'), 11);

  const nlohmann::json ev = cmd_eval(cfg_);
  std::set<std::string> keys;
  for (const auto& [k, _] : ev.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"C1", "C2", "C3", "C4", "Avg"}));
  double sum = 0.0;
  for (const char* c : {"C1", "C2", "C3", "C4"}) sum += ev.at(c).at("recon_mse").get<double>();
  EXPECT_NEAR(ev.at("Avg").at("recon_mse").get<double>(), sum / 4.0, 1e-12);
  EXPECT_TRUE(ev.at("C1").at("global_codes").is_null());
  EXPECT_THROW(cmd_diarize(cfg_), std::invalid_argument);

  const nlohmann::json per = cmd_recognize(cfg_);
  expect_condition_keys(per);
  for (const char* k : {"Sub", "Ins", "Del", "Total"}) EXPECT_TRUE(per.at("heldout").contains(k)) << k;
  const nlohmann::json& h = per.at("heldout");
  EXPECT_NEAR(h.at("Total").get<double>(), h.at("Sub").get<double>() + h.at("Ins").get<double>() + h.at("Del").get<double>(),
              1e-9);
  EXPECT_TRUE(fs::exists(cfg_.run_dir("base") / "recognition" / "codes" / "C4.txt"));

  parse_variant("speaker_label_s", cfg_.model);
  EXPECT_THROW(cmd_train(cfg_, root_ / "missing.ckpt"), CheckpointError);
  cmd_train(cfg_, base_ck);
  EXPECT_EQ(read_json(cfg_.run_dir("speaker_label_s") / "train_report.json").at("steps"), 5);
  const nlohmann::json der = cmd_diarize(cfg_);
  expect_condition_keys(der);
  for (const char* c : {"C1", "C2", "C3", "C4"}) {
    const nlohmann::json& d = der.at(c);
    EXPECT_NEAR(d.at("der").get<double>(),
                d.at("miss").get<double>() + d.at("false_alarm").get<double>() + d.at("speaker_error").get<double>(), 1e-9);
  }
  std::size_t rttm = 0;
  for (const auto& e : fs::directory_iterator(cfg_.run_dir("speaker_label_s") / "diarization")) {
    const std::string name = e.path().filename().string();
    if (!name.ends_with(".ref.rttm")) continue;
    ++rttm;
    std::set<std::string> speakers;
    std::istringstream is(slurp(e.path()));
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string f[8];
      for (auto& x : f) ls >> x;
      speakers.insert(f[7]);
    }
    EXPECT_EQ(speakers.size(), 2u) << name;
  }
  EXPECT_EQ(rttm, 8u);

  const nlohmann::json ev2 = cmd_eval(cfg_);
  EXPECT_FALSE(ev2.at("C1").at("global_codes").is_null());
  const auto plots = cmd_report(cfg_);
  EXPECT_EQ(plots.size(), 4u);
  for (const fs::path& p : plots) EXPECT_TRUE(slurp(p).starts_with("<svg")) << p;
}

TEST_F(CliRun, WarmStartRejectedForBase) {
  cmd_gen_corpus(cfg_);
  EXPECT_THROW(cmd_train(cfg_, root_ / "x.ckpt"), std::invalid_argument);
}
