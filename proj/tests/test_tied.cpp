#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tiedlab/sampling.hpp"
#include "tiedlab/tied.hpp"

using namespace tiedlab;

namespace {

// Block-diagonal [c_o][c_i][k][k] weight built by hand from a tied bank.
std::vector<double> block_diag(const Tensor2& bank, std::size_t c_i, std::size_t c_o, std::size_t k, std::size_t b) {
    const std::size_t ci_b = c_i / b, co_b = c_o / b;
    std::vector<double> w(c_o * c_i * k * k, 0.0);
    for (std::size_t blk = 0; blk < b; ++blk)
        for (std::size_t o = 0; o < co_b; ++o)
            for (std::size_t i = 0; i < ci_b; ++i)
                for (std::size_t kk = 0; kk < k * k; ++kk)
                    w[((blk * co_b + o) * c_i + blk * ci_b + i) * k * k + kk] = bank.at(o, i * k * k + kk);
    return w;
}

std::vector<double> tile(const std::vector<double>& v, std::size_t times) {
    std::vector<double> out;
    for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), v.begin(), v.end());
    return out;
}

}  // namespace

TEST(Tbc, B1EqualsConv2dBothPaths) {
    Rng rng(30);
    const ConvSpec spec{4, 6, 3, 1, 1, 1, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({2, 4, 5, 5}, rng);
    const Tensor4 ref = conv2d(x, spec, w);
    EXPECT_EQ(tbc_forward_direct(x, spec, w), ref);
    EXPECT_EQ(tbc_forward_fast(x, spec, w), ref);
}

TEST(Tbc, ScalarBankPerBlock) {
    const ConvSpec spec{2, 2, 1, 1, 0, 1, 2, false};
    const ConvWeights w{Tensor2(1, 1, {3}), {}};
    Tensor4 x(1, 2, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        x.data()[i] = 2;
        x.data()[4 + i] = 5;
    }
    const std::vector<double> expect{6, 6, 6, 6, 15, 15, 15, 15};
    EXPECT_EQ(tbc_forward_direct(x, spec, w).vec(), expect);
    EXPECT_EQ(tbc_forward_fast(x, spec, w).vec(), expect);
}

TEST(Tbc, EqualsHandBuiltBlockDiagonalConv) {
    Rng rng(31);
    const ConvSpec spec{8, 8, 3, 1, 1, 1, 4, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    ASSERT_EQ(w.w.rows(), 2u);
    ASSERT_EQ(w.w.cols(), 2u * 9);
    ASSERT_EQ(w.bias.size(), 2u);
    const Tensor4 x = random_tensor4({2, 8, 6, 6}, rng);
    const Tensor4 ref = oracle::direct_conv(x, block_diag(w.w, 8, 8, 3, 4), tile(w.bias, 4), 8, 3, 1, 1);
    EXPECT_LE(max_rel_error(tbc_forward_direct(x, spec, w).data(), ref.data()), 1e-12);
    EXPECT_LE(max_rel_error(tbc_forward_fast(x, spec, w).data(), ref.data()), 1e-12);
}

TEST(Tbc, FastEqualsDirectBitwiseSweep) {
    ConvSampling opts;
    opts.blocks = {2, 4, 8};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const ConvCase cs = random_conv_case(ConvFamily::tbc, rng, opts);
        const ConvWeights w = init_conv_weights(cs.spec, rng);
        const Tensor4 x = random_tensor4(cs.input, rng);
        EXPECT_EQ(tbc_forward_fast(x, cs.spec, w), tbc_forward_direct(x, cs.spec, w))
            << describe(cs.spec) << " seed=" << seed;
    }
}

TEST(Tbc, DivisibilityErrorNamesB) {
    const ConvSpec spec{6, 8, 1, 1, 0, 1, 4, false};
    ConvWeights w{Tensor2(2, 1), {}};
    try {
        tbc_forward_direct(Tensor4(1, 6, 2, 2), spec, w);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("B=4"), std::string::npos) << e.what();
    }
}

TEST(Tbc, BlockPermutationEquivariance) {
    Rng rng(32);
    const ConvSpec spec{6, 9, 3, 1, 1, 1, 3, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({2, 6, 4, 4}, rng);
    auto blocks = split_channels(x, 3);
    const std::vector<Tensor4> perm{blocks[2], blocks[0], blocks[1]};
    const auto y = split_channels(tbc_forward_fast(x, spec, w), 3);
    const auto yp = split_channels(tbc_forward_fast(concat_channels(perm), spec, w), 3);
    EXPECT_EQ(yp[0], y[2]);
    EXPECT_EQ(yp[1], y[0]);
    EXPECT_EQ(yp[2], y[1]);
}

TEST(Tgc, B1EqualsGroupConv) {
    Rng rng(33);
    const ConvSpec spec{8, 8, 3, 1, 1, 4, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const Tensor4 x = random_tensor4({1, 8, 4, 4}, rng);
    EXPECT_EQ(tgc_forward(x, spec, w), group_conv2d(x, spec, w));
}

TEST(Tgc, GEqualsBIsTbc) {
    Rng rng(34);
    const ConvSpec tgc{8, 12, 3, 1, 1, 4, 4, true};
    const ConvSpec tbc{8, 12, 3, 1, 1, 1, 4, true};
    const ConvWeights w = init_conv_weights(tgc, rng);
    const Tensor4 x = random_tensor4({2, 8, 4, 4}, rng);
    EXPECT_EQ(tgc_forward(x, tgc, w), tbc_forward_direct(x, tbc, w));
}

TEST(Tgc, EqualsReplicatedBankOracle) {
    Rng rng(35);
    const ConvSpec spec{8, 8, 3, 1, 1, 4, 2, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    ASSERT_EQ(w.w.rows(), 4u);  // G/B = 2 banks of c_o/G = 2 filters
    // Groups 0,1 use bank 0 (rows 0-1); groups 2,3 use bank 1 (rows 2-3).
    std::vector<double> full, bias;
    for (std::size_t g = 0; g < 4; ++g) {
        const std::size_t bank = g / 2;
        for (std::size_t r = 0; r < 2; ++r) {
            const auto row = w.w.row(bank * 2 + r);
            full.insert(full.end(), row.begin(), row.end());
            bias.push_back(w.bias[bank * 2 + r]);
        }
    }
    const Tensor4 x = random_tensor4({2, 8, 5, 5}, rng);
    const Tensor4 ref = oracle::direct_conv(x, full, bias, 8, 3, 1, 1, 4);
    EXPECT_LE(max_rel_error(tgc_forward(x, spec, w).data(), ref.data()), 1e-12);
}

TEST(Tfc, IdentityBank) {
    const TfcWeights w{Tensor2::identity(2), {0, 0}};
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(tfc_forward(x, 2, w), x);
}

TEST(Tfc, PerBlockSum) {
    const TfcWeights w{Tensor2(1, 2, {1, 1}), {}};
    EXPECT_EQ(tfc_forward(std::vector<double>{1, 2, 3, 4}, 2, w), (std::vector<double>{3, 7}));
}

TEST(Tfc, EqualsBlockDiagonalFc) {
    Rng rng(36);
    const TfcWeights w = init_tfc_weights(12, 6, 3, true, rng);
    const std::vector<double> x = random_vector(12, rng);
    std::vector<std::vector<double>> m(6, std::vector<double>(12, 0.0));
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t o = 0; o < 2; ++o)
            for (std::size_t i = 0; i < 4; ++i) m[b * 2 + o][b * 4 + i] = w.w.at(o, i);
    std::vector<double> ref = oracle::dense_matvec(m, x);
    for (std::size_t o = 0; o < 6; ++o) ref[o] += w.bias[o % 2];
    EXPECT_LE(max_rel_error(tfc_forward(x, 3, w), ref), 1e-12);
}

TEST(Tfc, BatchedMatchesVectorPath) {
    Rng rng(37);
    const TfcWeights w = init_tfc_weights(8, 4, 2, true, rng);
    const Tensor2 x = random_tensor2(3, 8, rng);
    const Tensor2 y = tfc_forward(x, 2, w);
    for (std::size_t n = 0; n < 3; ++n) {
        const auto row = tfc_forward(x.row(n), 2, w);
        for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(y.at(n, o), row[o]);
    }
}

TEST(Tfc, DivisibilityThrows) {
    EXPECT_THROW(tfc_forward(std::vector<double>{1, 2, 3}, 2, TfcWeights{Tensor2(1, 1), {}}), ShapeError);
}

TEST(TiedSe, ZeroWeightsHalveInput) {
    Rng rng(38);
    TiedSeSpec se = init_tied_se(8, 2, 2, true, rng);
    for (TfcWeights* t : {&se.reduce, &se.expand}) {
        for (double& v : t->w.data()) v = 0.0;
        for (double& v : t->bias) v = 0.0;
    }
    const Tensor4 x = random_tensor4({2, 8, 3, 3}, rng);
    const Tensor4 y = tied_se_forward(x, se);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], 0.5 * x.data()[i]);
}

TEST(TiedSe, EqualsExplicitComposition) {
    Rng rng(39);
    const TiedSeSpec se = init_tied_se(16, 4, 2, true, rng);
    const Tensor4 x = random_tensor4({2, 16, 3, 3}, rng);
    const Tensor2 z = global_avg_pool(x);
    const Tensor2 s = sigmoid(tfc_forward(relu(tfc_forward(z, 2, se.reduce)), 2, se.expand));
    EXPECT_EQ(tied_se_forward(x, se), scale_channels(x, s));
}

TEST(TiedSe, B1IsStandardSe) {
    Rng rng(40);
    const TiedSeSpec se = init_tied_se(8, 2, 1, true, rng);
    const Tensor4 x = random_tensor4({1, 8, 2, 2}, rng);
    // Hand-rolled SE from plain loops.
    const Tensor2 z = global_avg_pool(x);
    std::vector<double> h(4), s(8);
    for (std::size_t j = 0; j < 4; ++j) {
        double a = se.reduce.bias[j];
        for (std::size_t i = 0; i < 8; ++i) a += se.reduce.w.at(j, i) * z.at(0, i);
        h[j] = a > 0 ? a : 0;
    }
    for (std::size_t c = 0; c < 8; ++c) {
        double a = se.expand.bias[c];
        for (std::size_t j = 0; j < 4; ++j) a += se.expand.w.at(c, j) * h[j];
        s[c] = 1.0 / (1.0 + std::exp(-a));
    }
    const Tensor4 y = tied_se_forward(x, se);
    std::vector<double> ref(x.size());
    for (std::size_t c = 0; c < 8; ++c)
        for (std::size_t p = 0; p < 4; ++p) ref[c * 4 + p] = x.data()[c * 4 + p] * s[c];
    EXPECT_LE(max_rel_error(y.data(), ref), 1e-12);
}

TEST(TiedSe, IllegalSpecThrows) {
    Rng rng(41);
    EXPECT_THROW(init_tied_se(12, 4, 2, true, rng), ShapeError);
}

TEST(Expansion, TbcB1ReturnsBankUnchanged) {
    Rng rng(42);
    const ConvSpec spec{3, 4, 3, 1, 1, 1, 1, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const ExpandedConv ex = expand_tied_to_untied(spec, w);
    EXPECT_EQ(ex.weights.w, w.w);
    EXPECT_EQ(ex.weights.bias, w.bias);
}

TEST(Expansion, TfcOneByOneBank) {
    const TfcWeights w{Tensor2(1, 1, {2.5}), {0.25}};
    const TfcWeights ex = expand_tfc_to_fc(2, w);
    EXPECT_EQ(ex.w, Tensor2(2, 2, {2.5, 0, 0, 2.5}));
    EXPECT_EQ(ex.bias, (std::vector<double>{0.25, 0.25}));
}

TEST(Expansion, TbcMatchesHandBuiltBlockDiagonal) {
    Rng rng(43);
    const ConvSpec spec{6, 4, 3, 1, 1, 1, 2, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const ExpandedConv ex = expand_tied_to_untied(spec, w);
    EXPECT_EQ(ex.spec.blocks, 1u);
    EXPECT_EQ(ex.weights.w.vec(), block_diag(w.w, 6, 4, 3, 2));
    EXPECT_EQ(ex.weights.bias, tile(w.bias, 2));
}

TEST(Expansion, ExpandedConvEqualsTiedSweep) {
    for (ConvFamily fam : {ConvFamily::tbc, ConvFamily::tgc}) {
        for (std::uint64_t seed = 100; seed < 130; ++seed) {
            Rng rng(seed);
            const ConvCase cs = random_conv_case(fam, rng);
            const ConvWeights w = init_conv_weights(cs.spec, rng);
            const ExpandedConv ex = expand_tied_to_untied(cs.spec, w);
            const Tensor4 x = random_tensor4(cs.input, rng);
            const Tensor4 tied =
                fam == ConvFamily::tbc ? tbc_forward_direct(x, cs.spec, w) : tgc_forward(x, cs.spec, w);
            const Tensor4 untied =
                ex.spec.groups > 1 ? group_conv2d(x, ex.spec, ex.weights) : conv2d(x, ex.spec, ex.weights);
            EXPECT_LE(max_rel_error(tied.data(), untied.data()), 1e-12) << describe(cs.spec) << " seed=" << seed;
        }
    }
}

TEST(Init, BoundedByThinFanIn) {
    Rng rng(44);
    const ConvSpec spec{16, 16, 3, 1, 1, 1, 4, true};
    const ConvWeights w = init_conv_weights(spec, rng);
    const double a = std::sqrt(1.0 / (4.0 * 9.0));
    for (double v : w.w.data()) EXPECT_LE(std::abs(v), a);
    for (double v : w.bias) EXPECT_LE(std::abs(v), a);
}
