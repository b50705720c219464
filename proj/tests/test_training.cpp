#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "dualvq/synthcorpus/corpus.hpp"
#include "dualvq/training/train.hpp"

using namespace dualvq;

namespace {

ModelConfig small(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.strides = {16};
  c.channels = 16;
  c.local_K = 8;
  c.global_K = 4;
  c.embed_D = 4;
  c.n_speakers = 3;
  c.seed = 3;
  return c;
}

const TrainData& tiny_data() {
  static const TrainData d = [] {
    CorpusParams p;
    p.n_train_speakers = 3;
    p.n_heldout_speakers = 1;
    p.condition_speakers = 1;
    p.train_utts = 2;
    p.valid_utts = 1;
    p.condition_utts = 1;
    p.text_length = 8;
    return build_corpus(p).train_data();
  }();
  return d;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = 4;
  tc.crop = 320;
  tc.eval_every = 10;
  tc.valid_crops = 4;
  tc.init_crops = 4;
  return tc;
}

/// Forward outputs built from constants with known loss values.
ForwardOutputs fixed_outputs(Graph& g, const ModelConfig& c) {
  auto s = [&](double v) { return g.constant(Tensor::scalar(v)); };
  ForwardOutputs out;
  out.recon_loss = s(1.0);
  out.local.vq_loss = s(1.0);
  out.local.commit_loss = s(2.0);
  if (c.dual()) out.global = QuantizedVars{{}, {}, {}, s(0.5), s(0.25), {}};
  if (c.has_speaker_head()) out.speaker = SpeakerOutput{s(3.0), {}};
  if (c.has_adversary()) out.adversarial_loss = s(4.0);
  return out;
}

double checksum(const Model& m, const std::string& prefix) {
  double s = 0.0;
  for (const auto& [name, p] : m.params()) {
    if (name.starts_with(prefix)) s += p.value.mat().sum() + p.value.mat().squaredNorm();
  }
  return s;
}

}  // namespace

TEST(Loss, BaseTotalIsReconPlusVqPlusQuarterCommit) {
  const ModelConfig c = small(Variant::Base);
  Graph g;
  const LossTerms t = total_loss(g, fixed_outputs(g, c), c, LossWeights::defaults(c.variant));
  EXPECT_DOUBLE_EQ(t.values.total, 2.5);
}

TEST(Loss, DualCompositionPerVariant) {
  // L_R 1, local 1 + 2, global 0.5 + 0.25, speaker 3, adversarial 4; unit weights.
  const std::vector<std::pair<Variant, double>> cases{
      {Variant::GlobalVQ, 1.0 + 3.0 + 0.75}, {Variant::SpeakerLabel, 1.0 + 3.0 + 0.75 + 3.0},
      {Variant::Adversarial, 1.0 + 3.0 + 0.75 + 3.0 + 4.0}};
  for (const auto& [v, expected] : cases) {
    const ModelConfig c = small(v);
    Graph g;
    const LossTerms t = total_loss(g, fixed_outputs(g, c), c, LossWeights::defaults(v));
    EXPECT_DOUBLE_EQ(t.values.total, expected) << variant_name(c);
    EXPECT_DOUBLE_EQ(t.values.combine(v), expected);
  }
}

TEST(Loss, GlobalVqWithOnlyReconstructionIsReconLoss) {
  const ModelConfig c = small(Variant::GlobalVQ);
  Graph g;
  ForwardOutputs out = fixed_outputs(g, c);
  for (Var* v : {&out.local.vq_loss, &out.local.commit_loss, &out.global->vq_loss, &out.global->commit_loss}) {
    *v = g.constant(Tensor::scalar(0.0));
  }
  EXPECT_DOUBLE_EQ(total_loss(g, out, c, LossWeights::defaults(c.variant)).values.total, 1.0);
}

TEST(Loss, MismatchedOutputsRejected) {
  Graph g;
  const ForwardOutputs out = fixed_outputs(g, small(Variant::Base));
  EXPECT_THROW(total_loss(g, out, small(Variant::SpeakerLabel), {}), std::invalid_argument);
}

TEST(Loss, RealForwardTotalMatchesRecombination) {
  for (Variant v : {Variant::Base, Variant::GlobalVQ, Variant::SpeakerLabel, Variant::Adversarial}) {
    Model m(small(v));
    Rng rng(1);
    const Batch b = sample_batch(tiny_data().train, 3, 320, rng);
    const LossBreakdown l = evaluate_batch(m, b, LossWeights::defaults(v));
    EXPECT_NEAR(l.total, l.combine(v), 1e-12);
  }
}

TEST(Train, IsDeterministic) {
  const Checkpoint start = Checkpoint::create(small(Variant::SpeakerLabel));
  const auto [a, ra] = train(start, tiny_data(), quick(15));
  const auto [b, rb] = train(start, tiny_data(), quick(15));
  for (const auto& [name, p] : a.model->params()) EXPECT_EQ(p.value, b.model->params().at(name).value) << name;
  ASSERT_EQ(ra.curve.size(), 15u);
  for (std::size_t i = 0; i < ra.curve.size(); ++i) EXPECT_EQ(ra.curve[i].total, rb.curve[i].total);
}

TEST(Train, ZeroLearningRateLeavesParametersAtInitialization) {
  Checkpoint start = Checkpoint::create(small(Variant::Base));
  start.fresh_codebooks.clear();
  TrainConfig tc = quick(5);
  tc.optimizer.lr = 0.0;
  const auto [ck, report] = train(start, tiny_data(), tc);
  for (const auto& [name, p] : ck.model->params()) EXPECT_EQ(p.value, start.model->params().at(name).value) << name;
}

TEST(Train, ZeroStepsReturnsStart) {
  const Checkpoint start = Checkpoint::create(small(Variant::Base));
  const auto [ck, report] = train(start, tiny_data(), quick(0));
  EXPECT_TRUE(report.curve.empty());
  EXPECT_EQ(ck.step, 0);
  EXPECT_EQ(ck.model->params().at("local.codebook").value, start.model->params().at("local.codebook").value);
}

TEST(Train, SmokeRunReducesReconstructionLoss) {
  TrainConfig tc = quick(500);
  tc.eval_every = 100;
  const auto [ck, report] = train(Checkpoint::create(small(Variant::Base)), tiny_data(), tc);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    first += report.curve[i].L_R;
    last += report.curve[report.curve.size() - 1 - i].L_R;
  }
  EXPECT_LT(last, 0.75 * first);
  EXPECT_EQ(report.validation.size(), 5u);
  for (const auto& l : report.curve) EXPECT_TRUE(std::isfinite(l.total));
}

TEST(Train, CodebooksSeededFromEncoderOutputs) {
  Checkpoint ck = Checkpoint::create(small(Variant::GlobalVQ));
  init_codebooks_from_data(ck, tiny_data().train, 8, 320);
  EXPECT_TRUE(ck.fresh_codebooks.empty());
  const Tensor& book = ck.model->params().at("global.codebook").value;
  for (std::size_t k = 1; k < book.rows(); ++k) {
    EXPECT_GT((book.mat().row(static_cast<Eigen::Index>(k)) - book.mat().row(0)).norm(), 0.0);
  }
}

TEST(WarmStart, ReproducesBaseLocalCodes) {
  const auto [base, r] = train(Checkpoint::create(small(Variant::Base)), tiny_data(), quick(20));
  for (Variant v : {Variant::GlobalVQ, Variant::SpeakerLabel, Variant::Adversarial}) {
    const Checkpoint dual = warm_start(base, small(v));
    for (const LabeledAudio& u : tiny_data().valid) {
      EXPECT_EQ(dual.model->local_codes(u.audio), base.model->local_codes(u.audio));
    }
    EXPECT_EQ(dual.fresh_codebooks, std::vector<std::string>{"global.codebook"});
  }
  EXPECT_THROW(warm_start(base, small(Variant::Base)), std::invalid_argument);
  ModelConfig wide = small(Variant::GlobalVQ);
  wide.local_K = 16;
  EXPECT_THROW(warm_start(base, wide), std::invalid_argument);
}

TEST(WarmStart, ReachesValidationTargetSoonerThanColdStart) {
  TrainConfig tc = quick(300);
  const auto [base, r] = train(Checkpoint::create(small(Variant::Base)), tiny_data(), tc);
  const auto [warm, rw] = train(warm_start(base, small(Variant::GlobalVQ)), tiny_data(), tc);
  const auto [cold, rc] = train(Checkpoint::create(small(Variant::GlobalVQ)), tiny_data(), tc);
  const double target = rc.validation.back().second.L_R;
  auto first_reaching = [&](const TrainReport& rep) {
    for (const auto& [step, l] : rep.validation) {
      if (l.L_R <= target) return step;
    }
    return std::numeric_limits<long>::max();
  };
  EXPECT_LT(first_reaching(rw), first_reaching(rc));
}

TEST(Freeze, SpeakerComponentsStayBitIdentical) {
  const auto [dual, r] = train(Checkpoint::create(small(Variant::Adversarial)), tiny_data(), quick(10));
  const auto [tuned, r2] = freeze_fine_tune(dual, tiny_data(), quick(100));
  for (const std::string& prefix : speaker_component_prefixes()) {
    for (const auto& [name, p] : tuned.model->params()) {
      if (name.starts_with(prefix)) EXPECT_EQ(p.value, dual.model->params().at(name).value) << name;
    }
    EXPECT_EQ(checksum(*tuned.model, prefix), checksum(*dual.model, prefix));
  }
  EXPECT_NE(tuned.model->params().at("local.codebook").value, dual.model->params().at("local.codebook").value);
  EXPECT_THROW(freeze_fine_tune(Checkpoint::create(small(Variant::Base)), tiny_data(), quick(1)), std::invalid_argument);
}

TEST(Decode, ZeroedGlobalCodeChangesTrainedOutput) {
  const auto [ck, r] = train(Checkpoint::create(small(Variant::GlobalVQ)), tiny_data(), quick(100));
  Model& m = *ck.model;
  const AudioSignal& a = tiny_data().valid.front().audio;
  const Tensor zq = quantize(m.encode_local(a), m.params().at("local.codebook").value).z_q;
  const Tensor learned = quantize(m.encode_global(a), m.params().at("global.codebook").value).z_q;
  const AudioSignal with_code = m.decode(zq, learned, a.size());
  const AudioSignal zeroed = m.decode(zq, Tensor(1, learned.cols()), a.size());
  EXPECT_EQ(with_code.samples, m.reconstruct(a).samples);
  EXPECT_NE(with_code.samples, zeroed.samples);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const auto [ck, r] = train(Checkpoint::create(small(Variant::Adversarial)), tiny_data(), quick(5));
  const auto path = std::filesystem::temp_directory_path() / "dualvq_test_ckpt" / "model.ckpt";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.model->config(), ck.model->config());
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(back.rng.state(), ck.rng.state());
  for (const auto& [name, p] : ck.model->params()) EXPECT_EQ(p.value, back.model->params().at(name).value) << name;
  std::filesystem::remove_all(path.parent_path());
}

TEST(Checkpoint, CorruptFilesRejected) {
  const auto path = std::filesystem::temp_directory_path() / "dualvq_test_bad.ckpt";
  { std::ofstream(path) << "not a checkpoint"; }
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Train, EmptySplitsRejected) {
  EXPECT_THROW(train(Checkpoint::create(small(Variant::Base)), TrainData{}, quick(1)), std::invalid_argument);
}
