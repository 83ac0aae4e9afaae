#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/reference_transformer.hpp"
#include "bimind/aga/encoder.hpp"
#include "bimind/errors.hpp"
#include "bimind/numerics/grad_check.hpp"
#include "test_support.hpp"

using namespace bimind;
using namespace bimind::aga;
using bimind::testing::random_tensor;
using num::Tensor;
using text::PosCategory;

namespace {

EncoderConfig small_config(std::size_t d = 16, std::size_t heads = 4, std::size_t layers = 2) {
    EncoderConfig c;
    c.vocab_size = 12;
    c.d = d;
    c.heads = heads;
    c.layers = layers;
    return c;
}

Tensor onehots(const std::vector<PosCategory>& cats) {
    Tensor p({cats.size(), text::kPosCategories});
    for (std::size_t i = 0; i < cats.size(); ++i) p(i, static_cast<std::size_t>(cats[i])) = 1.0;
    return p;
}

void randomize(num::Parameter& p, std::mt19937_64& rng, double scale = 1.0) {
    p.value = random_tensor(p.value.shape(), rng, -scale, scale);
}

text::TokenizedDoc doc_of(std::vector<std::size_t> ids, std::vector<PosCategory> pos) {
    text::TokenizedDoc d;
    d.token_ids = std::move(ids);
    d.pos = std::move(pos);
    d.mask.assign(d.token_ids.size(), 1);
    return d;
}

} // namespace

TEST(OffsetVectors, ZeroInitializedOutputGivesZeroOffsets) {
    std::mt19937_64 rng(1);
    AgaEncoder enc(small_config(), rng);
    num::Tape t;
    auto [dq, dk] = offset_vectors(t.constant(onehots({PosCategory::Noun, PosCategory::Adv, PosCategory::Other})),
                                   enc.layer(0));
    EXPECT_EQ(dq.shape(), (num::Shape{3, 4}));
    for (double v : dq.value().data()) EXPECT_EQ(v, 0.0);
    for (double v : dk.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(OffsetVectors, MatchDirectTwoLayerEvaluation) {
    std::mt19937_64 rng(2);
    AgaEncoder enc(small_config(), rng);
    auto& layer = enc.layer(1);
    for (auto* p : {&layer.f_q.w1, &layer.f_q.b1, &layer.f_q.w2, &layer.f_q.b2}) randomize(*p, rng);
    std::vector<PosCategory> cats{PosCategory::Adj, PosCategory::VerbAux, PosCategory::Adj};
    num::Tape t;
    auto [dq, dk] = offset_vectors(t.constant(onehots(cats)), layer);
    for (std::size_t i = 0; i < cats.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(cats[i]);
        for (std::size_t h = 0; h < 4; ++h) {
            double out = layer.f_q.b2.value[h];
            for (std::size_t j = 0; j < 16; ++j) {
                const double hidden = std::max(0.0, layer.f_q.w1.value(c, j) + layer.f_q.b1.value[j]);
                out += hidden * layer.f_q.w2.value(j, h);
            }
            EXPECT_NEAR(dq.value()(i, h), out, 1e-14);
        }
    }
    // Same category -> identical rows.
    for (std::size_t h = 0; h < 4; ++h) EXPECT_EQ(dq.value()(0, h), dq.value()(2, h));
}

TEST(OffsetVectors, PermutingSameClassTokensPermutesRows) {
    std::mt19937_64 rng(3);
    AgaEncoder enc(small_config(), rng);
    auto& layer = enc.layer(0);
    for (auto* p : {&layer.f_k.w1, &layer.f_k.b1, &layer.f_k.w2, &layer.f_k.b2}) randomize(*p, rng);
    num::Tape t;
    auto a = offset_vectors(t.constant(onehots({PosCategory::Noun, PosCategory::Adv, PosCategory::Noun})), layer).second;
    auto b = offset_vectors(t.constant(onehots({PosCategory::Noun, PosCategory::Noun, PosCategory::Adv})), layer).second;
    for (std::size_t h = 0; h < 4; ++h) {
        EXPECT_EQ(a.value()(1, h), b.value()(2, h));
        EXPECT_EQ(a.value()(2, h), b.value()(1, h));
    }
}

TEST(AgaAttention, ZeroOffsetsUnitTemperatureIsPlainAttention) {
    std::mt19937_64 rng(4);
    AgaEncoder enc(small_config(), rng);
    Tensor x = random_tensor({6, 16}, rng);
    num::Mask mask{1, 1, 0, 1, 1, 0};
    num::Tape t;
    auto [dq, dk] = offset_vectors(t.constant(onehots(std::vector<PosCategory>(6, PosCategory::Noun))), enc.layer(0));
    auto res = aga_attention(t.constant(x), dq, dk, mask, enc.layer(0), 4, true, false);
    auto ref = reference::plain_attention(reference::to_matrix(x), enc.layer(0), 4, mask);
    EXPECT_LE(reference::max_abs_diff(ref, res.output.value()), 1e-12);
}

TEST(AgaAttention, SingleTokenAttendsToItself) {
    std::mt19937_64 rng(5);
    AgaEncoder enc(small_config(8, 2, 1), rng);
    auto& layer = enc.layer(0);
    for (auto* p : {&layer.f_q.w2, &layer.f_k.w2}) randomize(*p, rng, 3.0);
    num::Tape t;
    Tensor x = random_tensor({1, 8}, rng);
    auto [dq, dk] = offset_vectors(t.constant(onehots({PosCategory::Adj})), layer);
    auto res = aga_attention(t.constant(x), dq, dk, num::Mask{1}, layer, 2, true, true);
    for (const auto& a : res.trace.alpha) EXPECT_EQ(a(0, 0), 1.0);
    // Output is W_o applied to the concatenated value projection.
    auto v = reference::affine(reference::to_matrix(x), layer.wv.value, layer.bv.value);
    auto expected = reference::affine(v, layer.wo.value, layer.bo.value);
    EXPECT_LE(reference::max_abs_diff(expected, res.output.value()), 1e-14);
}

TEST(AgaAttention, TwoTokenBruteForce) {
    // d = 2, one head, identity projections: q = k = v = x.
    EncoderConfig c = small_config(2, 1, 1);
    std::mt19937_64 rng(6);
    AgaEncoder enc(c, rng);
    auto& layer = enc.layer(0);
    for (auto* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo}) w->value = Tensor::matrix({{1, 0}, {0, 1}});
    num::Tape t;
    auto x = t.constant(Tensor::matrix({{1, 2}, {0.5, -1}}));
    auto dq = t.constant(Tensor::matrix({{0.5}, {0.0}}));
    auto dk = t.constant(Tensor::matrix({{0.0}, {-0.5}}));
    auto res = aga_attention(x, dq, dk, num::Mask{1, 1}, layer, 1, true, true);
    const auto& a = res.trace.alpha[0];
    // Scalar brute force over the 2 x 2 logits.
    EXPECT_NEAR(a(0, 0), 0.9939172319858752, 1e-13);
    EXPECT_NEAR(a(0, 1), 0.006082768014124731, 1e-13);
    EXPECT_NEAR(a(1, 0), 0.1908427245448802, 1e-13);
    EXPECT_NEAR(a(1, 1), 0.8091572754551198, 1e-13);
}

TEST(AgaAttention, QueryRowShiftCancelsKeyShiftDoesNot) {
    std::mt19937_64 rng(7);
    AgaEncoder enc(small_config(8, 2, 1), rng);
    auto& layer = enc.layer(0);
    Tensor x = random_tensor({5, 8}, rng);
    Tensor dq = random_tensor({5, 2}, rng), dk = random_tensor({5, 2}, rng);
    num::Mask mask(5, 1);
    auto alphas = [&](const Tensor& q_off, const Tensor& k_off) {
        num::Tape t;
        return aga_attention(t.constant(x), t.constant(q_off), t.constant(k_off), mask, layer, 2, true, true).trace.alpha;
    };
    auto base = alphas(dq, dk);
    Tensor dq2 = dq, dk2 = dk;
    dq2(2, 0) += 1.5;
    dq2(2, 1) += 1.5;
    dk2(2, 0) += 1.5;
    dk2(2, 1) += 1.5;
    auto shifted_q = alphas(dq2, dk);
    auto shifted_k = alphas(dq, dk2);
    for (std::size_t h = 0; h < 2; ++h) {
        EXPECT_LE(num::max_abs_diff(base[h], shifted_q[h]), 1e-10);
        EXPECT_GT(num::max_abs_diff(base[h], shifted_k[h]), 1e-6);
    }
}

TEST(AgaAttention, RowsSumToOneAndMaskedKeysGetZero) {
    std::mt19937_64 rng(8);
    AgaEncoder enc(small_config(), rng);
    auto& layer = enc.layer(0);
    for (auto* p : {&layer.f_q.w2, &layer.f_k.w2, &layer.temperature}) randomize(*p, rng, 2.0);
    num::Mask mask{1, 0, 1, 1, 0, 1, 1};
    num::Tape t;
    auto [dq, dk] = offset_vectors(t.constant(onehots({PosCategory::Noun, PosCategory::Other, PosCategory::Adj,
                                                       PosCategory::Adv, PosCategory::Other, PosCategory::VerbAux,
                                                       PosCategory::Noun})),
                                   layer);
    auto res = aga_attention(t.constant(random_tensor({7, 16}, rng)), dq, dk, mask, layer, 4, true, true);
    for (const auto& a : res.trace.alpha) {
        for (std::size_t i = 0; i < 7; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                s += a(i, j);
                if (!mask[j]) {
                    EXPECT_EQ(a(i, j), 0.0);
                }
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(AgaAttention, AllMaskedIsDegenerate) {
    std::mt19937_64 rng(9);
    AgaEncoder enc(small_config(), rng);
    num::Tape t;
    EXPECT_THROW(aga_attention(t.constant(Tensor({2, 16})), std::nullopt, std::nullopt, num::Mask{0, 0}, enc.layer(0),
                               4, true, false),
                 DegenerateInputError);
}

TEST(AgaAttention, TemperatureStaysAboveFloor) {
    EXPECT_GT(effective_temperature(-10.0), kTemperatureFloor);
    EXPECT_GE(effective_temperature(-800.0), kTemperatureFloor);
    EXPECT_NEAR(effective_temperature(unit_temperature_raw()), 1.0, 1e-15);
}

TEST(Encode, DefaultHeadDimension) {
    EncoderConfig c;
    EXPECT_EQ(c.d, 128u);
    EXPECT_EQ(c.heads, 16u);
    EXPECT_EQ(c.layers, 2u);
    EXPECT_EQ(c.head_dim(), 8u);
    std::mt19937_64 rng(10);
    c.vocab_size = 10;
    AgaEncoder enc(c, rng);
    num::Tape t;
    auto r = enc.encode(t, doc_of({2, 3, 4}, {PosCategory::Noun, PosCategory::VerbAux, PosCategory::Adj}));
    EXPECT_EQ(r.sequence.shape(), (num::Shape{3, 128}));
    EXPECT_EQ(r.pooled.shape(), (num::Shape{1, 128}));
}

TEST(Encode, HeadsMustDivideModelDim) {
    std::mt19937_64 rng(11);
    EXPECT_THROW(AgaEncoder(small_config(10, 4), rng), ConfigError);
}

TEST(Encode, SingleUnmaskedPositionIsThePooledVector) {
    std::mt19937_64 rng(12);
    AgaEncoder enc(small_config(), rng);
    auto doc = doc_of({3, 0, 0, 0}, {PosCategory::Noun, PosCategory::Other, PosCategory::Other, PosCategory::Other});
    doc.mask = {1, 0, 0, 0};
    num::Tape t;
    auto r = enc.encode(t, doc);
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(r.pooled.value()[c], r.sequence.value()(0, c));
}

TEST(Encode, ZeroOffsetEncoderMatchesPlainReference) {
    std::mt19937_64 rng(13);
    AgaEncoder enc(small_config(16, 4, 2), rng);
    auto doc = doc_of({2, 5, 7, 3, 0}, {PosCategory::Noun, PosCategory::VerbAux, PosCategory::Adj, PosCategory::Adv,
                                        PosCategory::Other});
    doc.mask = {1, 1, 1, 1, 0};
    num::Tape t;
    auto r = enc.encode(t, doc);
    Tensor x({5, 16});
    auto pe = sinusoidal_positions(5, 16);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t c = 0; c < 16; ++c) x(i, c) = enc.embedding().value(doc.token_ids[i], c) + pe(i, c);
    auto ref = reference::plain_encoder(reference::to_matrix(x), enc, doc.mask);
    EXPECT_LE(reference::max_abs_diff(ref, r.sequence.value()), 1e-12);
}

TEST(Encode, GradientsPassFiniteDifferenceCheck) {
    std::mt19937_64 rng(14);
    AgaEncoder enc(small_config(8, 2, 2), rng);
    // Move off the zero-offset start so every parameter carries gradient.
    for (std::size_t l = 0; l < 2; ++l) {
        auto& layer = enc.layer(l);
        for (auto* p : {&layer.f_q.w2, &layer.f_k.w2, &layer.f_q.b2, &layer.f_k.b2, &layer.temperature})
            randomize(*p, rng, 0.5);
    }
    auto doc = doc_of({2, 5, 7, 3}, {PosCategory::Noun, PosCategory::VerbAux, PosCategory::Adj, PosCategory::Noun});
    Tensor w = random_tensor({1, 8}, rng);
    auto report = num::grad_check(
        [&](num::Tape& t) { return num::sum_all(num::mul(enc.encode(t, doc).pooled, t.constant(w))); },
        enc.parameters(), {.step = 1e-5, .tol = 1e-4});
    EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(AttentionEntropy, UniformOneHotAndMixedRows) {
    aga::LayerAttention layer;
    layer.alpha.push_back(Tensor::matrix({{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}, {0, 0, 0, 0}, {0, 0, 0, 0}}));
    layer.alpha.push_back(Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}));
    layer.alpha.push_back(Tensor::matrix({{0.5, 0.3, 0.2, 0.0}, {0.1, 0.1, 0.1, 0.7}, {1, 0, 0, 0}, {1, 0, 0, 0}}));
    std::vector<PosCategory> pos{PosCategory::Noun, PosCategory::Noun, PosCategory::Adj, PosCategory::Other};
    auto uniform = attention_entropy({layer}, num::Mask{1, 1, 0, 0}, pos);
    ASSERT_EQ(uniform.size(), 3u);
    EXPECT_NEAR(uniform[0].mean_entropy, std::log(4.0), 1e-15);
    EXPECT_EQ(uniform[1].mean_entropy, 0.0);
    // Direct summation over the two unmasked rows.
    const double row0 = -(0.5 * std::log(0.5) + 0.3 * std::log(0.3) + 0.2 * std::log(0.2));
    const double row1 = -(3 * 0.1 * std::log(0.1) + 0.7 * std::log(0.7));
    EXPECT_NEAR(uniform[2].mean_entropy, (row0 + row1) / 2.0, 1e-15);
    EXPECT_NEAR(uniform[2].pos_mass[static_cast<std::size_t>(PosCategory::Noun)], (0.8 + 0.2) / 2, 1e-15);
    double total = 0;
    for (double m : uniform[2].pos_mass) total += m;
    EXPECT_NEAR(total, 1.0, 1e-15);
}
