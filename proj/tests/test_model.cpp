#include <gtest/gtest.h>

#include "tiedlab/accounting.hpp"
#include "tiedlab/autograd.hpp"
#include "tiedlab/model.hpp"

using namespace tiedlab;

namespace {

LayerNode node(NodeKind kind, std::size_t c_i = 0, std::size_t c_o = 0) {
    LayerNode n;
    n.kind = kind;
    n.c_i = c_i;
    n.c_o = c_o;
    return n;
}

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.name = "small";
    cfg.in_c = 2;
    cfg.in_h = cfg.in_w = 4;
    cfg.classes = 3;
    cfg.seed = 11;
    LayerNode conv = node(NodeKind::conv, 2, 4);
    conv.k = 3;
    conv.pad = 1;
    cfg.layers = {conv, node(NodeKind::relu), node(NodeKind::flatten), node(NodeKind::fc, 64, 3)};
    return cfg;
}

}  // namespace

TEST(Build, SmokeChainShapes) {
    const Model m = Model::build(small_config());
    Rng rng(1);
    const Tensor4 x = random_tensor4({5, 2, 4, 4}, rng);
    const Model::Trace tr = m.forward_trace(x);
    EXPECT_EQ(tr.output.shape(), (Shape4{5, 3, 1, 1}));
    const auto sum = m.summary(5);
    ASSERT_EQ(sum.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        const Shape4 actual = i + 1 < 4 ? tr.inputs[i + 1].shape() : tr.output.shape();
        EXPECT_EQ(sum[i].out_shape, actual) << i;
    }
}

TEST(Build, IllegalTbcNamesLayer) {
    ModelConfig cfg = small_config();
    cfg.in_c = 6;
    LayerNode bad = node(NodeKind::tbc, 6, 8);
    bad.blocks = 4;
    cfg.layers = {node(NodeKind::relu), bad};
    try {
        Model::build(cfg);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.layer().value_or(999), 1u);
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(Build, ShapeChainBreakNamesLayer) {
    ModelConfig cfg = small_config();
    cfg.layers[3].c_i = 63;
    try {
        Model::build(cfg);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.layer().value_or(999), 3u);
    }
}

TEST(Build, DeterministicWeightsAndOutputs) {
    const ModelPair pair = make_toy_pair(2);
    const Model a = Model::build(pair.tied), b = Model::build(pair.tied);
    EXPECT_EQ(a.snapshot(), b.snapshot());
    Rng rng(3);
    const Tensor4 x = random_tensor4({2, 1, 16, 16}, rng);
    EXPECT_EQ(a.forward(x), b.forward(x));
    ModelConfig other = pair.tied;
    other.seed = 2;
    EXPECT_NE(Model::build(other).snapshot(), a.snapshot());
}

TEST(Build, ParamCountMatchesAccounting) {
    for (std::size_t b : {1, 2, 4}) {
        const ModelPair pair = make_toy_pair(b);
        for (const ModelConfig* cfg : {&pair.tied, &pair.untied}) {
            const Model m = Model::build(*cfg);
            EXPECT_EQ(m.param_count(), model_report(*cfg, cfg->input_shape()).total_params);
            EXPECT_EQ(m.param_count(), m.snapshot().size());
        }
    }
}

TEST(Build, ParameterNames) {
    Model m = Model::build(small_config());
    const auto params = m.parameters();
    ASSERT_EQ(params.size(), 4u);
    EXPECT_EQ(params[0].name, "L0.weight");
    EXPECT_EQ(params[1].name, "L0.bias");
    EXPECT_EQ(params[2].name, "L3.weight");
}

TEST(ToyPair, B1IdenticalTopology) {
    const ModelPair p = make_toy_pair(1);
    EXPECT_EQ(p.tied.layers, p.untied.layers);
    EXPECT_THROW(make_toy_pair(3), InputError);
}

TEST(ToyPair, B2QuartersTiedConvParams) {
    const ModelPair p = make_toy_pair(2);
    std::uint64_t tied = 0, untied = 0;
    for (std::size_t i = 0; i < p.tied.layers.size(); ++i) {
        if (p.tied.layers[i].kind == NodeKind::tbc) {
            tied += conv_weight_count(p.tied.layers[i].conv_spec());
            untied += conv_weight_count(p.untied.layers[i].conv_spec());
        }
    }
    EXPECT_EQ(tied, 512u + 2048u);
    EXPECT_EQ(tied * 4, untied);
}

TEST(ToyPair, BothBuildForEveryB) {
    for (std::size_t b : {1, 2, 4}) {
        const ModelPair p = make_toy_pair(b);
        EXPECT_NO_THROW(Model::build(p.tied));
        EXPECT_NO_THROW(Model::build(p.untied));
    }
}

TEST(TiedTwin, ConvAndFcReplacedWherePossible) {
    const ModelConfig twin = tied_twin(make_toy_pair(1).untied, 4);
    EXPECT_EQ(twin.layers[0].kind, NodeKind::conv);  // 1-channel stem
    EXPECT_EQ(twin.layers[2].kind, NodeKind::tbc);
    EXPECT_EQ(twin.layers[4].kind, NodeKind::tbc);
    EXPECT_EQ(twin.layers[7].kind, NodeKind::fc);  // 2 classes not divisible by 4
}

TEST(Bottleneck, B1TiedEqualsUntiedBitwise) {
    ModelConfig tied;
    tied.in_c = 8;
    tied.in_h = tied.in_w = 5;
    tied.seed = 4;
    tied.layers = {tied_bottleneck(8, 4, 1, 1, false)};
    ModelConfig plain = tied;
    plain.layers[0].kind = NodeKind::bottleneck;
    const Model a = Model::build(tied), b = Model::build(plain);
    ASSERT_EQ(a.snapshot(), b.snapshot());
    Rng rng(5);
    const Tensor4 x = random_tensor4({2, 8, 5, 5}, rng);
    EXPECT_EQ(a.forward(x), b.forward(x));
}

TEST(Bottleneck, ZeroResidualIsReluIdentity) {
    ModelConfig cfg;
    cfg.in_c = 16;
    cfg.in_h = cfg.in_w = 3;
    cfg.layers = {tied_bottleneck(16, 4, 2, 1, false)};
    Model m = Model::build(cfg);
    for (ParamRef& p : m.parameters())
        for (double& v : p.values) v = 0.0;
    Rng rng(6);
    const Tensor4 x = random_tensor4({1, 16, 3, 3}, rng);
    EXPECT_EQ(m.forward(x), relu(x));
}

TEST(Bottleneck, ProjectionShortcutWhenShapeChanges) {
    const BottleneckParts same = bottleneck_parts(tied_bottleneck(16, 4, 2, 1, false));
    EXPECT_FALSE(same.shortcut.has_value());
    const BottleneckParts down = bottleneck_parts(tied_bottleneck(16, 4, 2, 2, true));
    ASSERT_TRUE(down.shortcut.has_value());
    EXPECT_EQ(down.shortcut->kind, NodeKind::conv);
    EXPECT_EQ(down.mid.kind, NodeKind::tbc);
    ASSERT_TRUE(down.se.has_value());
    EXPECT_EQ(down.se->blocks, 2u);
}

TEST(Bottleneck, ParamCountIsSumOfParts) {
    const LayerNode n = tied_bottleneck(8, 4, 2, 2, true, 2);
    const BottleneckParts p = bottleneck_parts(n);
    std::uint64_t sum = param_count(p.reduce) + param_count(p.mid) + param_count(p.expand);
    if (p.se) sum += param_count(*p.se);
    if (p.shortcut) sum += param_count(*p.shortcut);
    EXPECT_EQ(param_count(n), sum);
}

TEST(Bottleneck, IllegalPlanesForB) {
    ModelConfig cfg;
    cfg.in_c = 8;
    cfg.in_h = cfg.in_w = 4;
    LayerNode n = tied_bottleneck(8, 4, 4, 1, false);
    n.planes = 6;
    cfg.layers = {n};
    EXPECT_THROW(Model::build(cfg), ValidationError);
    EXPECT_THROW(tied_bottleneck(8, 6, 4, 1, false), ValidationError);
}

TEST(Backward, ModelInputGradMatchesFiniteDifference) {
    ModelConfig cfg;
    cfg.in_c = 4;
    cfg.in_h = cfg.in_w = 3;
    cfg.seed = 8;
    LayerNode tbc = node(NodeKind::tbc, 4, 8);
    tbc.k = 3;
    tbc.pad = 1;
    tbc.blocks = 2;
    LayerNode se = node(NodeKind::tied_se, 8);
    se.r = 2;
    se.blocks = 2;
    LayerNode tfc = node(NodeKind::tfc, 8, 2);
    tfc.blocks = 2;
    cfg.layers = {tbc, se, node(NodeKind::gap), node(NodeKind::flatten), tfc};
    const Model m = Model::build(cfg);
    Rng rng(9);
    const Tensor4 x = random_tensor4({2, 4, 3, 3}, rng);
    const Tensor4 g = random_tensor4({2, 2, 1, 1}, rng);
    Tensor4 gx;
    const Gradients grads = m.backward(m.forward_trace(x), g, &gx);
    EXPECT_EQ(grads.size(), m.parameters().size());
    const double eps = 1e-5;
    for (std::size_t i = 0; i < x.size(); i += 5) {
        Tensor4 p = x, q = x;
        p.data()[i] += eps;
        q.data()[i] -= eps;
        const double fd = (dot(g.data(), m.forward(p).data()) - dot(g.data(), m.forward(q).data())) / (2 * eps);
        EXPECT_LE(grad_rel_error(gx.data()[i], fd), 1e-6) << i;
    }
}

TEST(Config, RoundTripJson) {
    const ModelPair p = make_toy_pair(2);
    EXPECT_EQ(parse_config(config_to_json(p.tied)), p.tied);
    ModelConfig cfg;
    cfg.name = "b";
    cfg.in_c = 8;
    cfg.in_h = cfg.in_w = 4;
    cfg.layers = {tied_bottleneck(8, 4, 2, 1, true, 2)};
    EXPECT_EQ(parse_config(config_to_json(cfg)), cfg);
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(parse_config(R"({"name":"x","input":[1,2,2],"layers":[],"extra":1})"), ParseError);
    EXPECT_THROW(parse_config(R"({"name":"x","input":[1,2,2],"layers":[{"kind":"relu","k":3}]})"), ParseError);
    EXPECT_THROW(parse_config(R"({"name":"x","input":[1,2,2],"layers":[{"kind":"warp"}]})"), ParseError);
}

TEST(Config, MissingRequiredKey) {
    EXPECT_THROW(parse_config(R"({"name":"x","input":[1,2,2],"layers":[{"kind":"conv","c_i":1}]})"), ParseError);
    EXPECT_THROW(parse_config(R"({"name":"x","layers":[]})"), ParseError);
}

TEST(Config, MalformedJsonReportsByteOffset) {
    try {
        parse_config("{\"name\": \"x\",\n \"input\": [1,2,2,}");
        FAIL();
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("byte"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    }
}
