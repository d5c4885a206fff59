#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tiedlab/nn.hpp"

using namespace tiedlab;

namespace {

ConvWeights weights(std::size_t rows, std::size_t cols, std::vector<double> w, std::vector<double> bias = {}) {
    return {Tensor2(rows, cols, std::move(w)), std::move(bias)};
}

}  // namespace

TEST(ConvSpec, LegalityRules) {
    EXPECT_NO_THROW((ConvSpec{8, 8, 3, 1, 1, 4, 2, false}.validate()));
    EXPECT_THROW((ConvSpec{6, 8, 3, 1, 1, 4, 1, false}.validate()), ShapeError);  // c_i % G
    EXPECT_THROW((ConvSpec{8, 6, 3, 1, 1, 1, 4, false}.validate()), ShapeError);  // c_o % B
    EXPECT_THROW((ConvSpec{12, 12, 3, 1, 1, 6, 4, false}.validate()), ShapeError);  // G % B
    EXPECT_THROW((ConvSpec{8, 8, 0, 1, 0, 1, 1, false}.validate()), ShapeError);
    EXPECT_THROW((ConvSpec{8, 8, 1, 0, 0, 1, 1, false}.validate()), ShapeError);
}

TEST(Conv2d, ScalarProduct) {
    const ConvSpec spec{1, 1, 1, 1, 0, 1, 1, false};
    const Tensor4 y = conv2d(Tensor4(Shape4{1, 1, 1, 1}, {2}), spec, weights(1, 1, {3}));
    EXPECT_EQ(y.vec(), std::vector<double>{6});
}

TEST(Conv2d, SumKernel) {
    const ConvSpec spec{1, 1, 2, 1, 0, 1, 1, false};
    const Tensor4 y = conv2d(Tensor4(Shape4{1, 1, 2, 2}, {1, 2, 3, 4}), spec, weights(1, 4, {1, 1, 1, 1}));
    EXPECT_EQ(y.shape(), (Shape4{1, 1, 1, 1}));
    EXPECT_EQ(y.vec(), std::vector<double>{10});
}

TEST(Conv2d, MatchesDirectLoopOracle) {
    Rng rng(20);
    const Tensor4 x = random_tensor4({2, 3, 5, 5}, rng);
    const ConvSpec spec{3, 4, 3, 1, 1, 1, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 ref = oracle::direct_conv(x, w.w.vec(), w.bias, 4, 3, 1, 1);
    const Tensor4 y = conv2d(x, spec, w);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LE(max_rel_error(y.data(), ref.data()), 1e-12);
}

TEST(Conv2d, MatchesOracleStridedSweep) {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        const std::size_t k = 1 + rng.below(3), s = 1 + rng.below(2), pad = rng.below(k);
        const std::size_t c_i = 1 + rng.below(4), c_o = 1 + rng.below(4);
        const std::size_t out = 1 + rng.below(4);
        const std::size_t in = (out - 1) * s + k - 2 * pad;
        if (in < 1 || in > 12) continue;
        const ConvSpec spec{c_i, c_o, k, s, pad, 1, 1, rng.below(2) == 1};
        const Tensor4 x = random_tensor4({1 + rng.below(2), c_i, in, in}, rng);
        const ConvWeights w = init_conv_weights(spec, rng);
        const Tensor4 ref = oracle::direct_conv(x, w.w.vec(), w.bias, c_o, k, s, pad);
        EXPECT_LE(max_rel_error(conv2d(x, spec, w).data(), ref.data()), 1e-12) << "trial " << t;
    }
}

TEST(Conv2d, LinearWithoutBias) {
    Rng rng(22);
    const ConvSpec spec{3, 2, 3, 1, 1, 1, 1, false};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({2, 3, 4, 4}, rng), z = random_tensor4({2, 3, 4, 4}, rng);
    const double a = 0.7, b = -1.3;
    Tensor4 mix(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) mix.data()[i] = a * x.data()[i] + b * z.data()[i];
    const Tensor4 fx = conv2d(x, spec, w), fz = conv2d(z, spec, w), fm = conv2d(mix, spec, w);
    std::vector<double> expect(fx.size());
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = a * fx.data()[i] + b * fz.data()[i];
    EXPECT_LE(max_rel_error(fm.data(), expect), 1e-12);
}

TEST(Conv2d, ShapeMismatchThrows) {
    const ConvSpec spec{3, 2, 1, 1, 0, 1, 1, false};
    Rng rng(23);
    const ConvWeights w = init_conv_weights(spec, rng);
    EXPECT_THROW(conv2d(Tensor4(1, 2, 3, 3), spec, w), ShapeError);
    EXPECT_THROW(conv2d(Tensor4(1, 3, 3, 3), spec, weights(2, 2, {1, 2, 3, 4})), ShapeError);
}

TEST(GroupConv2d, G1EqualsConv2dBitwise) {
    Rng rng(24);
    const ConvSpec spec{4, 6, 3, 1, 1, 1, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({2, 4, 5, 5}, rng);
    EXPECT_EQ(group_conv2d(x, spec, w), conv2d(x, spec, w));
}

TEST(GroupConv2d, DepthwiseScaling) {
    const ConvSpec spec{2, 2, 1, 1, 0, 2, 1, false};
    const Tensor4 x(Shape4{1, 2, 1, 2}, {1, 2, 3, 4});
    EXPECT_EQ(group_conv2d(x, spec, weights(2, 1, {2, 3})).vec(), (std::vector<double>{2, 4, 9, 12}));
}

TEST(GroupConv2d, EqualsSplitAndConvOracle) {
    Rng rng(25);
    const ConvSpec spec{8, 12, 3, 1, 1, 4, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({2, 8, 5, 5}, rng);
    const Tensor4 ref = oracle::direct_conv(x, w.w.vec(), w.bias, 12, 3, 1, 1, 4);
    EXPECT_LE(max_rel_error(group_conv2d(x, spec, w).data(), ref.data()), 1e-12);
}

TEST(FullyConnected, Examples) {
    const std::vector<double> x{1, 2, 3};
    EXPECT_EQ(fully_connected(x, Tensor2::identity(3), std::vector<double>{0, 0, 0}), x);
    EXPECT_EQ(fully_connected(x, Tensor2(1, 3, {1, 1, 1}), {}), std::vector<double>{6});
    EXPECT_THROW(fully_connected(x, Tensor2(1, 2, {1, 1}), {}), ShapeError);
}

TEST(FullyConnected, EqualsMatmulColumn) {
    Rng rng(26);
    const Tensor2 w = random_tensor2(5, 7, rng);
    const std::vector<double> x = random_vector(7, rng), b = random_vector(5, rng);
    const std::vector<double> y = fully_connected(x, w, b);
    const Tensor2 col = matmul(w, Tensor2(7, 1, x));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(std::abs(y[i] - (col.at(i, 0) + b[i])), 1e-14);
}

TEST(GlobalAvgPool, Examples) {
    EXPECT_EQ(global_avg_pool(Tensor4(1, 1, 3, 4, -2.5)).at(0, 0), -2.5);
    EXPECT_EQ(global_avg_pool(Tensor4(Shape4{1, 1, 2, 2}, {1, 2, 3, 4})).at(0, 0), 2.5);
    Rng rng(27);
    const Tensor4 x = random_tensor4({2, 3, 4, 4}, rng);
    Tensor4 sx = x;
    for (double& v : sx.data()) v *= 4.0;
    const Tensor2 a = global_avg_pool(x), b = global_avg_pool(sx);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(b.data()[i], 4.0 * a.data()[i]);
}

TEST(Activations, ReluAndSigmoid) {
    const Tensor2 r = relu(Tensor2(1, 2, {-1, 2}));
    EXPECT_EQ(r.vec(), (std::vector<double>{0, 2}));
    EXPECT_EQ(sigmoid(0.0), 0.5);
    Rng rng(28);
    for (int i = 0; i < 100; ++i) {
        const double v = 10.0 * rng.uniform();
        EXPECT_LE(std::abs(sigmoid(v) + sigmoid(-v) - 1.0), 1e-15);
    }
    EXPECT_EQ(sigmoid(-800.0), 0.0);
    EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(SoftmaxCrossEntropy, UniformIsLn2) {
    const std::vector<std::size_t> labels{0, 1};
    const LossAndGrad lg = softmax_cross_entropy(Tensor2(2, 2, 0.3), labels);
    EXPECT_NEAR(lg.loss, std::log(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(lg.grad.at(0, 0), -0.25);
    EXPECT_DOUBLE_EQ(lg.grad.at(0, 1), 0.25);
}

TEST(SoftmaxCrossEntropy, StableForHugeLogits) {
    const std::vector<std::size_t> labels{0};
    const LossAndGrad lg = softmax_cross_entropy(Tensor2(1, 2, {1000, -1000}), labels);
    EXPECT_TRUE(std::isfinite(lg.loss));
    EXPECT_LE(lg.loss, 1e-300);
    const LossAndGrad wrong = softmax_cross_entropy(Tensor2(1, 2, {-1000, 1000}), labels);
    EXPECT_DOUBLE_EQ(wrong.loss, 2000.0);
}

TEST(SoftmaxCrossEntropy, GradMatchesFiniteDifference) {
    Rng rng(29);
    const Tensor2 logits = random_tensor2(3, 4, rng, 2.0);
    const std::vector<std::size_t> labels{2, 0, 3};
    const LossAndGrad lg = softmax_cross_entropy(logits, labels);
    const double eps = 1e-5;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        Tensor2 p = logits, m = logits;
        p.data()[i] += eps;
        m.data()[i] -= eps;
        const double fd = (softmax_cross_entropy(p, labels).loss - softmax_cross_entropy(m, labels).loss) / (2 * eps);
        EXPECT_LE(std::abs(fd - lg.grad.data()[i]), 1e-6) << "coord " << i;
    }
}

TEST(SoftmaxCrossEntropy, LabelOutOfRange) {
    const std::vector<std::size_t> labels{2};
    EXPECT_THROW(softmax_cross_entropy(Tensor2(1, 2), labels), InputError);
}
