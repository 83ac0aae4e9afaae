#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "bimind/errors.hpp"
#include "bimind/numerics/grad_check.hpp"
#include "bimind/numerics/ops.hpp"
#include "test_support.hpp"

using namespace bimind;
using namespace bimind::num;
using bimind::testing::random_tensor;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    Tape t;
    auto c = matmul(t.constant(Tensor::matrix({{1, 0}, {0, 1}})), t.constant(Tensor::matrix({{1, 2}, {3, 4}})));
    EXPECT_EQ(c.value().values(), (std::vector<double>{1, 2, 3, 4}));
    EXPECT_EQ(c.shape(), (Shape{2, 2}));
}

TEST(Matmul, SelectorRow) {
    Tape t;
    auto c = matmul(t.constant(Tensor::matrix({{1, 0}})), t.constant(Tensor::matrix({{0}, {5}})));
    EXPECT_EQ(c.shape(), (Shape{1, 1}));
    EXPECT_EQ(c.item(), 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tape t;
    try {
        matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 3})));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
    }
}

TEST(Matmul, GradientsMatchCentralDifferences) {
    std::mt19937_64 rng(11);
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({4, 2}, rng));
    Tensor w = random_tensor({3, 2}, rng);
    auto report = grad_check(
        [&](Tape& t) { return sum_all(mul(matmul(t.param(a), t.param(b)), t.constant(w))); }, {&a, &b},
        {.step = 1e-5, .tol = 1e-6});
    EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Softmax, SymmetricRowIsUniform) {
    Tape t;
    auto y = softmax_rows(t.constant(Tensor::row({0, 0})));
    EXPECT_DOUBLE_EQ(y.value()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.value()[1], 0.5);
}

TEST(Softmax, SingleUnmaskedEntryTakesAllMass) {
    Tape t;
    Mask mask{1, 0};
    auto y = softmax_rows(t.constant(Tensor::row({3.7, 100.0})), &mask);
    EXPECT_EQ(y.value()[0], 1.0);
    EXPECT_EQ(y.value()[1], 0.0);
}

TEST(Softmax, MatchesLongDoubleDirectEvaluation) {
    Tape t;
    auto y = softmax_rows(t.constant(Tensor::row({1, 2, 3})));
    long double z = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
    for (int i = 0; i < 3; ++i) {
        const long double expected = std::exp(static_cast<long double>(i + 1)) / z;
        EXPECT_NEAR(y.value()[i], static_cast<double>(expected), 1e-15);
    }
}

TEST(Softmax, FullyMaskedRowIsDegenerate) {
    Tape t;
    Mask mask{0, 0};
    EXPECT_THROW(softmax_rows(t.constant(Tensor::row({1, 2})), &mask), DegenerateInputError);
}

TEST(Softmax, RowsSumToOneAndAreShiftInvariant) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x = random_tensor({4, 7}, rng, -10.0, 10.0);
        Tensor shifted = x;
        for (std::size_t r = 0; r < 4; ++r) {
            const double c = shift(rng);
            for (std::size_t j = 0; j < 7; ++j) shifted(r, j) += c;
        }
        Tape t;
        auto a = softmax_rows(t.constant(x));
        auto b = softmax_rows(t.constant(shifted));
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < 7; ++j) s += a.value()(r, j);
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
        EXPECT_LE(max_abs_diff(a.value(), b.value()), 1e-12);
    }
}

TEST(Softmax, PerElementMaskZeroesExactly) {
    Tape t;
    Mask mask{1, 0, 1, 0, 1, 1};
    auto y = softmax_rows(t.constant(Tensor::matrix({{1, 2, 3}, {4, 5, 6}})), &mask);
    EXPECT_EQ(y.value()(0, 1), 0.0);
    EXPECT_EQ(y.value()(1, 0), 0.0);
    EXPECT_GT(y.value()(1, 1), 0.0);
}

TEST(GradCheck, QuadraticHasAnalyticGradient) {
    Parameter w("w", Tensor::row({1, 2}));
    auto report = grad_check([&](Tape& t) { return sum_all(mul(t.param(w), t.param(w))); }, {&w},
                             {.step = 1e-5, .tol = 1e-8});
    EXPECT_TRUE(report.passed) << report.max_rel_error;
    EXPECT_LT(report.max_rel_error, 1e-8);
    EXPECT_DOUBLE_EQ(w.grad[0], 2.0);
    EXPECT_DOUBLE_EQ(w.grad[1], 4.0);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
    Parameter w("w", Tensor::row({1, 2, 3}));
    auto report = grad_check([&](Tape& t) {
        t.param(w);
        return t.constant(Tensor::scalar(4.2));
    }, {&w});
    EXPECT_TRUE(report.passed);
    for (double g : w.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(GradCheck, NonFiniteLossAborts) {
    Parameter w("w", Tensor::row({1.0}));
    set_finite_checks(false);
    EXPECT_THROW(grad_check([&](Tape& t) { return sum_all(log(scale(t.param(w), 0.0))); }, {&w}), NonFiniteError);
    set_finite_checks(true);
}

TEST(FiniteChecks, NanAfterPrimitiveIsAnError) {
    Tape t;
    EXPECT_THROW(log(t.constant(Tensor::row({-1.0}))), NonFiniteError);
    set_finite_checks(false);
    EXPECT_NO_THROW(log(t.constant(Tensor::row({-1.0}))));
    set_finite_checks(true);
}

// Every differentiable primitive against central differences on randomized
// inputs. Each case maps parameters to a weighted sum so all output entries
// contribute.
struct PrimitiveCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var(Tape&, std::vector<Var>&)> build;
    double lo = -1.0, hi = 1.0;
};

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
    std::mt19937_64 rng(100 + GetParam());
    const std::vector<std::size_t> ids{2, 0, 2, 1};
    std::vector<PrimitiveCase> cases = {
        {"add", {{3, 4}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return v[0] + v[1]; }},
        {"add_row", {{3, 4}, {1, 4}}, [](Tape&, std::vector<Var>& v) { return v[0] + v[1]; }},
        {"add_col_left", {{3, 1}, {3, 4}}, [](Tape&, std::vector<Var>& v) { return v[0] + v[1]; }},
        {"sub_scalar", {{3, 4}, {1, 1}}, [](Tape&, std::vector<Var>& v) { return v[0] - v[1]; }},
        {"mul_col", {{3, 4}, {3, 1}}, [](Tape&, std::vector<Var>& v) { return v[0] * v[1]; }},
        {"div_scalar", {{3, 4}, {1, 1}}, [](Tape&, std::vector<Var>& v) { return v[0] / add_scalar(v[1], 3.0); }},
        {"matmul", {{2, 3}, {3, 5}}, [](Tape&, std::vector<Var>& v) { return matmul(v[0], v[1]); }},
        {"transpose", {{2, 3}}, [](Tape&, std::vector<Var>& v) { return transpose(v[0]); }},
        {"tanh", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return tanh(v[0]); }},
        {"sigmoid", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return sigmoid(v[0]); }},
        {"relu", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return relu(v[0]); }},
        {"softplus", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return softplus(v[0]); }},
        {"exp", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return exp(v[0]); }},
        {"log", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return log(v[0]); }, 0.5, 2.0},
        {"abs", {{3, 3}}, [](Tape&, std::vector<Var>& v) { return abs(v[0]); }},
        {"softmax", {{3, 5}}, [](Tape&, std::vector<Var>& v) { return softmax_rows(v[0]); }},
        {"softmax_masked", {{3, 5}}, [](Tape&, std::vector<Var>& v) {
             static const Mask m{1, 0, 1, 1, 0};
             return softmax_rows(v[0], &m);
         }},
        {"log_softmax", {{3, 5}}, [](Tape&, std::vector<Var>& v) { return log_softmax_rows(v[0]); }},
        {"concat", {{2, 3}, {2, 1}, {2, 2}}, [](Tape&, std::vector<Var>& v) { return concat_cols(v); }},
        {"slice", {{3, 6}}, [](Tape&, std::vector<Var>& v) { return slice_cols(v[0], 2, 3); }},
        {"masked_max", {{5, 4}}, [](Tape&, std::vector<Var>& v) { return masked_max_rows(v[0], Mask{1, 1, 0, 1, 1}); }},
        {"mean0", {{3, 4}}, [](Tape&, std::vector<Var>& v) { return mean(v[0], 0); }},
        {"mean1", {{3, 4}}, [](Tape&, std::vector<Var>& v) { return mean(v[0], 1); }},
        {"mean_all", {{3, 4}}, [](Tape&, std::vector<Var>& v) { return mean_all(v[0]); }},
        {"gather", {{3, 4}}, [&ids](Tape&, std::vector<Var>& v) { return gather_rows(v[0], ids); }},
        {"pick", {{4, 3}}, [&ids](Tape&, std::vector<Var>& v) { return pick(v[0], ids); }},
        {"layer_norm", {{3, 6}, {1, 6}, {1, 6}},
         [](Tape&, std::vector<Var>& v) { return layer_norm_rows(v[0], v[1], v[2]); }},
    };
    for (auto& c : cases) {
        std::vector<Parameter> params;
        params.reserve(c.shapes.size());
        for (std::size_t i = 0; i < c.shapes.size(); ++i)
            params.emplace_back(std::string(c.name) + std::to_string(i), random_tensor(c.shapes[i], rng, c.lo, c.hi));
        ParameterList list;
        for (auto& p : params) list.push_back(&p);
        Tensor weights;
        auto f = [&](Tape& t) {
            std::vector<Var> vars;
            for (auto& p : params) vars.push_back(t.param(p));
            Var out = c.build(t, vars);
            if (weights.empty()) weights = random_tensor(out.shape(), rng);
            return sum_all(mul(out, t.constant(weights)));
        };
        auto report = grad_check(f, list, {.step = 1e-5, .tol = 1e-5});
        EXPECT_TRUE(report.passed) << c.name << " rel error " << report.max_rel_error;
    }
}

INSTANTIATE_TEST_SUITE_P(RandomizedInputs, PrimitiveGradients, ::testing::Range(0, 5));

TEST(MaskedMax, IgnoresMaskedPositions) {
    std::mt19937_64 rng(5);
    Tensor x = random_tensor({6, 3}, rng);
    Mask mask{1, 0, 1, 0, 0, 1};
    Tape t;
    auto base = masked_max_rows(t.constant(x), mask).value();
    for (std::size_t r : {1u, 3u, 4u}) {
        Tensor flipped = x;
        for (std::size_t c = 0; c < 3; ++c) flipped(r, c) = 1e6;
        auto other = masked_max_rows(t.constant(flipped), mask).value();
        EXPECT_EQ(base.values(), other.values());
    }
}

TEST(MaskedMax, TiesRouteGradientToLowestIndex) {
    Tape t;
    auto x = t.leaf(Tensor::matrix({{1, 5}, {3, 5}, {3, 2}}));
    auto y = masked_max_rows(x, Mask{1, 1, 1});
    EXPECT_EQ(y.value().values(), (std::vector<double>{3, 5}));
    t.backward(sum_all(y));
    EXPECT_EQ(x.grad().values(), (std::vector<double>{0, 1, 1, 0, 0, 0}));
}

TEST(MaskedMax, AllMaskedIsDegenerate) {
    Tape t;
    EXPECT_THROW(masked_max_rows(t.constant(Tensor::matrix({{1}, {2}})), Mask{0, 0}), DegenerateInputError);
}

TEST(Dropout, EvaluationModeIsExactIdentity) {
    std::mt19937_64 rng(1);
    Tape t;
    auto x = t.constant(Tensor::row({1, 2, 3}));
    auto y = dropout(x, 0.3, rng, false);
    EXPECT_EQ(y.id(), x.id());
}

TEST(Dropout, TrainingUsesInvertedScalingAndIsSeedable) {
    std::mt19937_64 rng1(9), rng2(9);
    Tape t;
    auto x = t.constant(Tensor({1, 1000}, 1.0));
    auto a = dropout(x, 0.3, rng1, true).value();
    auto b = dropout(x, 0.3, rng2, true).value();
    EXPECT_EQ(a.values(), b.values());
    std::size_t kept = 0;
    for (double v : a.data()) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-15);
        kept += v != 0.0;
    }
    EXPECT_NEAR(static_cast<double>(kept) / 1000.0, 0.7, 0.05);
}

TEST(Init, UniformWithinFanInBound) {
    std::mt19937_64 rng(2);
    Tensor w({16, 8});
    init_uniform(w, 16, rng);
    for (double v : w.data()) EXPECT_LE(std::abs(v), 0.25);
}

TEST(Tape, BackwardVisitsSharedNodeOnce) {
    Tape t;
    auto x = t.leaf(Tensor::row({2.0}));
    auto y = mul(x, x);
    auto z = add(y, y);
    t.backward(z);
    EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(TensorType, ShapeMustMatchData) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    EXPECT_THROW(Tensor({0, 2}), DimensionError);
}
