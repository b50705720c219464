#include <cmath>

#include <gtest/gtest.h>

#include "dualvq/model/model.hpp"
#include "dualvq/numerics/gradcheck.hpp"

using namespace dualvq;

namespace {

ModelConfig small(Variant v, HeadKind h = HeadKind::Softmax) {
  ModelConfig c;
  c.variant = v;
  c.head = h;
  c.strides = {8};
  c.channels = 6;
  c.local_K = 5;
  c.global_K = 3;
  c.embed_D = 4;
  c.n_speakers = 3;
  c.seed = 9;
  return c;
}

AudioSignal tone(std::size_t n, double f = 220.0) {
  AudioSignal a;
  for (std::size_t t = 0; t < n; ++t) a.samples.push_back(0.4 * std::sin(2.0 * 3.141592653589793 * f * t / 16000.0));
  return a;
}

Batch batch_of(const std::vector<AudioSignal>& crops, const std::vector<std::size_t>& spk) {
  Batch b;
  b.size = crops.size();
  b.length = crops.front().size();
  b.audio = Tensor(b.size * b.length, 1);
  for (std::size_t i = 0; i < crops.size(); ++i) {
    for (std::size_t t = 0; t < b.length; ++t) b.audio(i * b.length + t, 0) = crops[i].samples[t];
  }
  b.speakers = spk;
  return b;
}

}  // namespace

TEST(Model, FrameCountsRoundUp) {
  ModelConfig c;
  Model m(c);
  EXPECT_EQ(c.dsf(), 64u);
  EXPECT_EQ(m.frames_for(6400), 100u);
  EXPECT_EQ(m.frames_for(6401), 101u);
  EXPECT_EQ(m.encode_local(tone(6400)).rows(), 100u);
  EXPECT_EQ(m.encode_local(tone(6401)).rows(), 101u);
  EXPECT_EQ(m.encode_local(tone(6400)).cols(), c.embed_D);
}

TEST(Model, ConstructionIsDeterministicInSeed) {
  Model a(small(Variant::Adversarial)), b(small(Variant::Adversarial));
  for (const auto& [name, p] : a.params()) EXPECT_EQ(p.value, b.params().at(name).value) << name;
  ModelConfig other = small(Variant::Adversarial);
  other.seed = 10;
  EXPECT_NE(Model(other).params().at("local.codebook").value, a.params().at("local.codebook").value);
}

TEST(Model, VariantsOwnTheExpectedComponents) {
  EXPECT_FALSE(Model(small(Variant::Base)).params().contains("global.codebook"));
  EXPECT_TRUE(Model(small(Variant::GlobalVQ)).params().contains("global.codebook"));
  EXPECT_FALSE(Model(small(Variant::GlobalVQ)).params().contains("speaker.head.w"));
  EXPECT_TRUE(Model(small(Variant::SpeakerLabel)).params().contains("speaker.head.w"));
  EXPECT_FALSE(Model(small(Variant::SpeakerLabel)).params().contains("adv.out.w"));
  EXPECT_TRUE(Model(small(Variant::Adversarial)).params().contains("adv.out.w"));
}

TEST(Model, GlobalEncoderPoolsOverTime) {
  Model m(small(Variant::GlobalVQ));
  const AudioSignal a = tone(80);
  const Tensor frames = m.global_frames(a);
  Graph g(false);
  const Tensor& pooled_ff = g.value(m.feed_forward(g, g.constant(Tensor(1, 4, [&] {
    std::vector<double> mean(4, 0.0);
    for (std::size_t r = 0; r < frames.rows(); ++r) {
      for (std::size_t c = 0; c < 4; ++c) mean[c] += frames(r, c) / static_cast<double>(frames.rows());
    }
    return mean;
  }()))));
  const Tensor direct = m.encode_global(a);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(direct(0, c), pooled_ff(0, c), 1e-12);
}

TEST(Model, GlobalCodeIgnoresFrameOrder) {
  // Reversing whole frames permutes front-end outputs; pooling removes the order.
  Model m(small(Variant::GlobalVQ));
  const AudioSignal a = tone(80, 530.0);
  AudioSignal r = a;
  for (std::size_t f = 0; f < 10; ++f) std::copy_n(a.samples.begin() + (9 - f) * 8, 8, r.samples.begin() + f * 8);
  const Tensor ea = m.encode_global(a), er = m.encode_global(r);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(ea(0, c), er(0, c), 1e-12);
}

TEST(Model, SelfConcatenationOnlyAddsBoundaryFrames) {
  Model m(small(Variant::GlobalVQ));
  // Whole frames: the doubled utterance has exactly the same frame multiset.
  AudioSignal a = tone(80, 330.0), aa = a;
  aa.samples.insert(aa.samples.end(), a.samples.begin(), a.samples.end());
  const Tensor ea = m.encode_global(a), eaa = m.encode_global(aa);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(ea(0, c), eaa(0, c), 1e-12);

  // A partial last frame: only frames touching the junction or the padding differ.
  AudioSignal b = tone(83, 330.0), bb = b;
  bb.samples.insert(bb.samples.end(), b.samples.begin(), b.samples.end());
  const Tensor fb = m.global_frames(b), fbb = m.global_frames(bb);
  ASSERT_EQ(fb.rows(), 11u);
  ASSERT_EQ(fbb.rows(), 21u);
  for (std::size_t r = 0; r < 10; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(fbb(r, c), fb(r, c));
  }
  EXPECT_NE(m.encode_global(bb), m.encode_global(b));
}

TEST(Model, ReconstructionHasInputLength) {
  Model m{ModelConfig{}};
  for (std::size_t n : {6400u, 6401u, 16000u}) EXPECT_EQ(m.reconstruct(tone(n), 0).size(), n);
  Model s(small(Variant::SpeakerLabel));
  EXPECT_EQ(s.reconstruct(tone(83)).size(), 83u);
}

TEST(Model, ForwardShapesPerVariant) {
  for (Variant v : {Variant::Base, Variant::GlobalVQ, Variant::SpeakerLabel, Variant::Adversarial}) {
    Model m(small(v));
    Graph g;
    const Batch b = batch_of({tone(36), tone(36, 400.0)}, {0, 2});
    const ForwardOutputs out = m.forward(g, b);
    EXPECT_EQ(g.value(out.recon).rows(), 72u);
    EXPECT_EQ(out.local.indices.size(), 2u * 5u);
    EXPECT_EQ(out.global.has_value(), v != Variant::Base);
    if (out.global) EXPECT_EQ(out.global->indices.size(), 2u);
    EXPECT_EQ(out.speaker.has_value(), v == Variant::SpeakerLabel || v == Variant::Adversarial);
    EXPECT_EQ(out.adversarial_loss.has_value(), v == Variant::Adversarial);
  }
}

TEST(Model, GradientsReachBothEncodersAndHeads) {
  for (HeadKind h : {HeadKind::Softmax, HeadKind::AngularSoftmax}) {
    Model m(small(Variant::Adversarial, h));
    Graph g;
    const ForwardOutputs out = m.forward(g, batch_of({tone(40), tone(40, 700.0)}, {1, 2}));
    Var total = ops::add(out.recon_loss, ops::add(out.local.commit_loss, out.global->commit_loss));
    total = ops::add(total, ops::add(out.speaker->loss, *out.adversarial_loss));
    m.params().zero_grad();
    g.backward(total);
    for (const char* name : {"local.enc.conv0.w", "global.enc.conv0.w", "global.ff1.w", "speaker.head.w", "adv.out.w",
                             "dec.up0.w"}) {
      EXPECT_GT(m.params().at(name).grad.mat().norm(), 0.0) << name;
    }
  }
}

TEST(Model, SpeakerLossGradientMatchesFiniteDifferences) {
  Model m(small(Variant::SpeakerLabel, HeadKind::AngularSoftmax));
  const Batch b = batch_of({tone(24), tone(24, 900.0)}, {0, 1});
  auto loss = [&](Graph& g) { return m.forward(g, b).speaker->loss; };
  EXPECT_LT(grad_check(loss, m.params().at("speaker.head.w"), 1e-6), 1e-4);
}

TEST(Model, AdversarialLossValueIgnoresLambda) {
  const Batch b = batch_of({tone(40), tone(40, 700.0)}, {1, 2});
  ModelConfig c = small(Variant::Adversarial);
  c.adv_lambda = 0.0;
  Model m0(c);
  c.adv_lambda = 1.0;
  Model m1(c);
  Graph g0, g1;
  EXPECT_EQ(g0.value(*m0.forward(g0, b).adversarial_loss).item(), g1.value(*m1.forward(g1, b).adversarial_loss).item());
}

TEST(Model, ShapeErrorsAreReported) {
  Model m(small(Variant::Base));
  Batch b = batch_of({tone(16)}, {0});
  b.size = 2;
  Graph g;
  EXPECT_THROW(m.forward(g, b), ShapeError);
  EXPECT_THROW(m.encode_local(tone(5)), std::invalid_argument);
  EXPECT_THROW(m.encode_global(tone(64)), std::logic_error);
  Graph g2;
  EXPECT_THROW(m.decoder(g2, g2.constant(Tensor(3, 4)), g2.constant(Tensor(1, 3)), 1, 16), ShapeError);
}

TEST(Model, InvalidConfigRejected) {
  ModelConfig c;
  c.strides = {};
  EXPECT_THROW(Model{c}, std::invalid_argument);
  ModelConfig d;
  d.asoftmax_margin = 0;
  EXPECT_THROW(Model{d}, std::invalid_argument);
}

TEST(Model, VariantNamesRoundTrip) {
  for (const char* n : {"base", "global_vq", "speaker_label_s", "speaker_label_as", "adversarial_s", "adversarial_as"}) {
    ModelConfig c;
    parse_variant(n, c);
    EXPECT_EQ(variant_name(c), n);
    nlohmann::json j = c;
    EXPECT_EQ(j.get<ModelConfig>(), c);
  }
  ModelConfig c;
  EXPECT_THROW(parse_variant("dual", c), std::invalid_argument);
}

TEST(Audio, MuLawRoundTrip) {
  for (double x : {-1.0, -0.3, 0.0, 0.01, 0.7, 1.0}) EXPECT_NEAR(mulaw_decode(mulaw_encode(x)), x, 0.03);
  EXPECT_EQ(mulaw_encode(-1.0), 0u);
  EXPECT_EQ(mulaw_encode(1.0), 255u);
}
