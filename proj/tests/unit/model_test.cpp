#include <cmath>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "tpt/error.hpp"
#include "tpt/gradcheck.hpp"
#include "tpt/model.hpp"
#include "tpt/ops.hpp"

using namespace tpt;
using namespace tpt::model;

namespace {

ModelConfig micro() {
  ModelConfig c;
  c.vocab_size = 13;
  c.d_model = 24;
  c.n_layers = 2;
  c.n_phases = 3;
  c.n_q_heads = 6;
  c.n_kv_heads = 3;
  c.d_ff = 32;
  c.max_seq_len = 8;
  return c;
}

TokenBatch tokens(std::size_t b, std::size_t t, Rng& rng, int vocab) {
  TokenBatch out{b, t, {}};
  for (std::size_t i = 0; i < b * t; ++i) {
    out.ids.push_back(static_cast<TokenId>(1 + rng.below(static_cast<std::uint64_t>(vocab - 1))));
  }
  return out;
}

}  // namespace

TEST(RmsNorm, OnesStayOnes) {
  const auto y = phase_aware_rms_norm(Tensor<double>::full({2, 12}, 1.0),
                                      Tensor<double>::full({12}, 1.0), 3, 1e-5);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0, 1e-5);
}

TEST(RmsNorm, EachPhaseNormalizedSeparately) {
  std::vector<double> x(12);
  for (int k = 0; k < 12; ++k) x[k] = k < 4 ? 10.0 : (k < 8 ? 0.1 : -3.0);
  const auto y = phase_aware_rms_norm(Tensor<double>({1, 12}, x), Tensor<double>::full({12}, 1.0), 3, 0.0);
  EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[5], 1.0, 1e-12);
  EXPECT_NEAR(y.data()[11], -1.0, 1e-12);
}

TEST(Rope, PositionZeroIsIdentityAndScalarOracle) {
  const RopeTable table(4, 2, 10000.0);
  const Tensor<double> q({1, 2}, {1.0, 0.0});
  const int p0[] = {0}, p1[] = {1};
  const auto a = rope_rotate(q, table, p0);
  EXPECT_DOUBLE_EQ(a.data()[0], 1.0);
  EXPECT_DOUBLE_EQ(a.data()[1], 0.0);
  const auto b = rope_rotate(q, table, p1);
  EXPECT_NEAR(b.data()[0], std::cos(1.0), 1e-15);
  EXPECT_NEAR(b.data()[1], std::sin(1.0), 1e-15);
}

TEST(Rope, ScoresDependOnRelativeOffsetOnly) {
  const RopeTable table(64, 16, 10000.0);
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = randn<double>({1, 16}, 1.0, rng), k = randn<double>({1, 16}, 1.0, rng);
    const auto score = [&](int a, int b) {
      const int pa[] = {a}, pb[] = {b};
      const auto qa = rope_rotate(q, table, pa), kb = rope_rotate(k, table, pb);
      double s = 0;
      for (int i = 0; i < 16; ++i) s += qa.data()[i] * kb.data()[i];
      return s;
    };
    EXPECT_NEAR(score(3, 1), score(20, 18), 1e-12);
    EXPECT_NEAR(score(0, 7), score(33, 40), 1e-12);
  }
}

TEST(Gqa, HeadDivisibilityRejected) {
  auto c = micro();
  c.n_q_heads = 4;
  c.n_kv_heads = 2;
  c.d_model = 24;
  EXPECT_THROW(c.validate(), ConfigError);
  auto ok = ModelConfig{};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_EQ(ok.n_q_heads / ok.n_phases, 2);
  EXPECT_EQ(ok.n_kv_heads / ok.n_phases, 1);
}

TEST(Gqa, RepeatKvHeadsMapsGroups) {
  const Tensor<double> x({1, 2, 1, 2}, {1, 2, 3, 4});
  const auto y = repeat_kv_heads(x, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 4, 1, 2}));
  const std::vector<double> expect = {1, 2, 1, 2, 3, 4, 3, 4};
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), expect);
}

TEST(Gqa, OutputIsCausal) {
  Rng rng(4);
  const AttentionShape s{6, 3, 4};
  AttentionWeights<double> w{randn<double>({24, 24}, 0.3, rng), randn<double>({24, 12}, 0.3, rng),
                             randn<double>({24, 12}, 0.3, rng), randn<double>({24, 24}, 0.3, rng)};
  const RopeTable rope(8, 4, 10000.0);
  auto x = randn<double>({1, 5, 24}, 1.0, rng);
  const auto y1 = gqa_attention(x, w, s, rope);
  std::vector<double> changed(x.data().begin(), x.data().end());
  for (std::size_t k = 4 * 24; k < 5 * 24; ++k) changed[k] += 1.0;
  const auto y2 = gqa_attention(Tensor<double>({1, 5, 24}, changed), w, s, rope);
  for (std::size_t k = 0; k < 4 * 24; ++k) EXPECT_DOUBLE_EQ(y1.data()[k], y2.data()[k]);
}

TEST(SwiGlu, ZeroGateAndZeroWeights) {
  Rng rng(5);
  const auto x = randn<double>({3, 4}, 1.0, rng);
  const auto zero = swiglu_ffn(x, Tensor<double>::zeros({4, 6}), randn<double>({4, 6}, 1.0, rng),
                               randn<double>({6, 4}, 1.0, rng));
  for (double v : zero.data()) EXPECT_DOUBLE_EQ(v, 0.0);
  const auto all_zero = swiglu_ffn(x, Tensor<double>::zeros({4, 6}), Tensor<double>::zeros({4, 6}),
                                   Tensor<double>::zeros({6, 4}));
  for (double v : all_zero.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Block, ZeroWeightsSinglePhaseIsIdentity) {
  auto c = micro();
  c.n_phases = 1;
  c.n_q_heads = 6;
  c.n_kv_heads = 3;
  BlockParams<double> b{Tensor<double>::full({24}, 1.0),
                        {Tensor<double>::zeros({24, 24}), Tensor<double>::zeros({24, 12}),
                         Tensor<double>::zeros({24, 12}), Tensor<double>::zeros({24, 24})},
                        Tensor<double>::zeros({12}),
                        Tensor<double>::full({24}, 1.0),
                        Tensor<double>::zeros({24, 32}),
                        Tensor<double>::zeros({24, 32}),
                        Tensor<double>::zeros({32, 24})};
  Rng rng(6);
  const auto h = randn<double>({2, 4, 24}, 1.0, rng);
  const RopeTable rope(8, 4, 10000.0);
  const auto out = block_forward(h, b, c, rope);
  for (std::size_t i = 0; i < h.numel(); ++i) EXPECT_NEAR(out.data()[i], h.data()[i], 1e-15);
}

TEST(Rotation, ResidualVariantAddsInput) {
  const phase::PhaseConfig pc(3, 12);
  Rng rng(7);
  const auto h = randn<double>({2, 12}, 1.0, rng);
  const auto th = randn<double>({2}, 1.0, rng);
  const auto plain = phase_rotation_layer(h, th, pc, false);
  const auto res = phase_rotation_layer(h, th, pc, true);
  for (std::size_t i = 0; i < h.numel(); ++i) {
    EXPECT_NEAR(res.data()[i], h.data()[i] + plain.data()[i], 1e-15);
  }
}

TEST(ParameterCount, CanonicalShapes) {
  const ModelConfig c;
  EXPECT_EQ(count_parameters(c), 5463872u);
  EXPECT_EQ(count_parameters(ModelConfig::baseline_of(c)), 5463744u);
  Model<float> m(c, 1);
  EXPECT_EQ(m.parameter_count(), 5463872u);
  auto learn = c;
  learn.learnable_horn = true;
  EXPECT_EQ(count_parameters(learn) - count_parameters(c), 129u);
}

TEST(ParameterCount, LargeShapeDelta) {
  ModelConfig big;
  big.vocab_size = 32000;
  big.d_model = 768;
  big.n_layers = 12;
  big.n_q_heads = 12;
  big.n_kv_heads = 3;
  big.d_ff = 2048;
  EXPECT_EQ(count_parameters(big) - count_parameters(ModelConfig::baseline_of(big)), 1536u);
}

TEST(Config, JsonRoundTripAndStrictness) {
  auto c = micro();
  c.use_aux_loss = true;
  EXPECT_EQ(model_config_from_json(to_json(c)), c);
  EXPECT_THROW(model_config_from_json({{"d_modle", 3}}), ConfigError);
  EXPECT_THROW(model_config_from_json({{"d_model", "wide"}}), ConfigError);
}

TEST(Config, BaselineRejectsPhaseFlags) {
  auto b = ModelConfig::baseline_of(micro());
  EXPECT_NO_THROW(b.validate());
  EXPECT_FALSE(b.horn_inject);
  EXPECT_TRUE(b.scale_embedding);
  b.horn_inject = true;
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(Embed, HornPinsCrossPhaseMean) {
  const auto c = micro();
  Model<float> m(c, 3);
  Rng rng(8);
  const auto e = m.embed(tokens(2, 8, rng, c.vocab_size));
  const auto cpm = phase::cross_phase_mean(e, c.phase());
  for (std::size_t i = 0; i < cpm.numel(); ++i) {
    EXPECT_NEAR(cpm.data()[i], 1.0 / ((i % 8) + 1), 1e-6);
  }
}

TEST(Embed, ZeroMeanWithoutHorn) {
  auto c = micro();
  c.horn_inject = false;
  c.zero_mean_enforce = true;
  Model<float> m(c, 3);
  Rng rng(9);
  const auto e = m.embed(tokens(2, 8, rng, c.vocab_size));
  EXPECT_LT(phase::zero_sum_residual(e, c.phase()), 1e-7);
}

TEST(Embed, PlainLookupWhenBothOff) {
  auto c = micro();
  c.horn_inject = false;
  Model<float> m(c, 3);
  const TokenBatch t{1, 2, {4, 9}};
  const auto e = m.embed(t);
  const auto& table = m.params().at("tok_emb");
  for (std::size_t k = 0; k < 24; ++k) {
    EXPECT_EQ(e.data()[k], table.data()[4 * 24 + k]);
    EXPECT_EQ(e.data()[24 + k], table.data()[9 * 24 + k]);
  }
}

TEST(Embed, OutOfRangeIdThrows) {
  const auto c = micro();
  Model<float> m(c, 3);
  EXPECT_THROW(m.embed(TokenBatch{1, 1, {13}}), DomainError);
}

TEST(ModelInit, SameSeedSameParametersAndThetaSchedule) {
  const auto c = micro();
  Model<float> a(c, 11), b(c, 11), other(c, 12);
  for (std::size_t i = 0; i < a.params().items().size(); ++i) {
    const auto& x = a.params().items()[i].value;
    const auto& y = b.params().items()[i].value;
    EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  }
  EXPECT_NE(a.params().at("tok_emb").data()[0], other.params().at("tok_emb").data()[0]);
  const auto bank = a.theta_bank();
  ASSERT_EQ(bank.n_layers(), 2u);
  EXPECT_NEAR(bank.init(0)[0], std::numbers::pi / 4, 1e-6);
  EXPECT_NEAR(bank.init(1)[3], std::numbers::pi / 2, 1e-6);
}

TEST(ModelForward, LogitShapeAndAux) {
  auto c = micro();
  c.use_aux_loss = true;
  Model<float> m(c, 2);
  Rng rng(10);
  const auto fr = m.forward(tokens(2, 8, rng, c.vocab_size));
  EXPECT_EQ(fr.logits.shape(), (Shape{2, 8, 13}));
  EXPECT_EQ(fr.block_outputs.size(), 2u);
  // Horn on: residual pinned at N * H_8 / 8, aux = coef * residual^2 exactly per position.
  double expect = 0.0;
  for (int t = 1; t <= 8; ++t) {
    const double r = 3.0 / t;
    expect += r * r;
  }
  expect = 0.01 * expect / 8.0;
  EXPECT_NEAR(fr.aux_loss.item(), expect, 1e-5);
}

TEST(ModelGradients, EndToEndFiniteDifferences) {
  auto c = micro();
  c.learnable_horn = true;
  c.use_aux_loss = true;
  Model<double> m(c, 5);
  Rng rng(17);
  const auto in = tokens(2, 8, rng, c.vocab_size);
  const auto tgt = tokens(2, 8, rng, c.vocab_size).ids;
  const auto loss = [&] {
    const auto fr = m.forward(in);
    return add(cross_entropy(fr.logits, tgt), fr.aux_loss);
  };
  std::vector<std::pair<std::string, Tensor<double>>> leaves;
  for (const auto& p : m.params().items()) leaves.emplace_back(p.name, p.value);
  gradcheck::Options opt;
  opt.per_leaf = 6;
  const auto rep = gradcheck::check(loss, leaves, rng, opt);
  EXPECT_GE(rep.count(), 100u);
  EXPECT_EQ(rep.failures(1e-4), 0u) << rep.worst << " " << rep.max_rel_err;
  bool saw_theta = false, saw_norm = false, saw_horn = false;
  for (const auto& p : rep.probes) {
    saw_theta |= p.name.find("theta") != std::string::npos;
    saw_norm |= p.name.find("norm") != std::string::npos;
    saw_horn |= p.name.find("horn") != std::string::npos;
  }
  EXPECT_TRUE(saw_theta && saw_norm && saw_horn);
}

TEST(ModelGradients, BaselineAndResidualVariants) {
  for (int variant = 0; variant < 2; ++variant) {
    auto c = micro();
    if (variant == 0) c = ModelConfig::baseline_of(c);
    else c.residual_pr = true, c.zero_mean_enforce = true, c.horn_inject = false;
    Model<double> m(c, 6);
    Rng rng(18);
    const auto in = tokens(1, 6, rng, c.vocab_size);
    const auto tgt = tokens(1, 6, rng, c.vocab_size).ids;
    const auto loss = [&] { return cross_entropy(m.forward(in).logits, tgt); };
    std::vector<std::pair<std::string, Tensor<double>>> leaves;
    for (const auto& p : m.params().items()) leaves.emplace_back(p.name, p.value);
    gradcheck::Options opt;
    opt.per_leaf = 3;
    const auto rep = gradcheck::check(loss, leaves, rng, opt);
    EXPECT_EQ(rep.failures(1e-4), 0u) << variant << " " << rep.worst << " " << rep.max_rel_err;
  }
}
