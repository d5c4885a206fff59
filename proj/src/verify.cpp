#include "tiedlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "tiedlab/accounting.hpp"
#include "tiedlab/autograd.hpp"
#include "tiedlab/model.hpp"
#include "tiedlab/sampling.hpp"
#include "tiedlab/tied.hpp"

namespace tiedlab {

void CheckLine::record(bool ok, double err, const std::string& instance) {
    ++total;
    if (ok) ++passed;
    else failures.push_back(instance);
    if (std::isnan(err)) err = INFINITY;
    max_error = std::max(max_error, err);
}

bool SuiteResult::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckLine& c) { return c.pass(); });
}

std::string SuiteResult::report() const {
    std::ostringstream os;
    char buf[64];
    for (const CheckLine& c : checks) {
        os << suite << '/' << c.name << ' ' << c.passed << '/' << c.total;
        std::snprintf(buf, sizeof buf, " max_err=%.3e", c.max_error);
        os << buf;
        if (c.tolerance > 0) {
            std::snprintf(buf, sizeof buf, " tol=%.0e", c.tolerance);
            os << buf;
        } else {
            os << " tol=exact";
        }
        os << (c.pass() ? " PASS" : " FAIL") << '\n';
        for (const std::string& f : c.failures) os << "  failing instance: " << f << '\n';
    }
    return os.str();
}

std::uint64_t instance_seed(std::uint64_t base_seed, std::size_t i) {
    Rng r(base_seed + i);
    return r.next_u64();
}

namespace {

constexpr double kOracleTol = 1e-12;

double abs_diff(const Tensor4& a, const Tensor4& b) {
    if (a.shape() != b.shape()) return INFINITY;
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

void bitwise(CheckLine& line, const Tensor4& a, const Tensor4& b, const std::string& instance) {
    line.record(a == b, abs_diff(a, b), instance);
}

void oracle(CheckLine& line, std::span<const double> got, std::span<const double> want, const std::string& instance) {
    const double err = got.size() == want.size() ? max_rel_error(got, want) : INFINITY;
    line.record(err <= kOracleTol, err, instance);
}

struct Drawn {
    ConvSpec spec;
    Tensor4 x;
    ConvWeights w;
};

Drawn draw(ConvFamily fam, Rng& rng, const ConvSampling& opts = {}) {
    const ConvCase cc = random_conv_case(fam, rng, opts);
    Drawn d{cc.spec, random_tensor4(cc.input, rng), init_conv_weights(cc.spec, rng)};
    return d;
}

std::string tag(const std::string& what, std::uint64_t seed) { return what + " seed=" + std::to_string(seed); }

}  // namespace

SuiteResult run_equiv_suite(std::size_t seeds, std::uint64_t base_seed) {
    SuiteResult res{"equiv", {}};
    CheckLine two_path{"tbc_fast_eq_direct"};
    CheckLine tbc_oracle{"tbc_eq_blockdiag_expansion", kOracleTol};
    CheckLine tgc_oracle{"tgc_eq_replicated_expansion", kOracleTol};
    CheckLine tfc_oracle{"tfc_eq_blockdiag_fc", kOracleTol};
    CheckLine tbc_b1{"tbc_B1_eq_conv2d"};
    CheckLine gc_g1{"group_conv2d_G1_eq_conv2d"};
    CheckLine tgc_b1{"tgc_B1_eq_group_conv2d"};
    CheckLine tgc_gb{"tgc_GeqB_eq_tbc"};
    CheckLine se_comp{"tied_se_eq_composition"};

    ConvSampling wide;
    wide.blocks = {2, 4, 8};

    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = instance_seed(base_seed, i);
        Rng rng(seed);
        {
            const Drawn d = draw(ConvFamily::tbc, rng, wide);
            const std::string inst = tag("tbc " + describe(d.spec) + " x=" + d.x.shape().str(), seed);
            const Tensor4 direct = tbc_forward_direct(d.x, d.spec, d.w);
            bitwise(two_path, tbc_forward_fast(d.x, d.spec, d.w), direct, inst);
            const ExpandedConv ex = expand_tied_to_untied(d.spec, d.w);
            oracle(tbc_oracle, conv2d(d.x, ex.spec, ex.weights).data(), direct.data(), inst);

            ConvSpec as_tgc = d.spec;
            as_tgc.groups = d.spec.blocks;
            bitwise(tgc_gb, tgc_forward(d.x, as_tgc, d.w), direct, inst);
        }
        {
            const Drawn d = draw(ConvFamily::tgc, rng);
            const std::string inst = tag("tgc " + describe(d.spec) + " x=" + d.x.shape().str(), seed);
            const ExpandedConv ex = expand_tied_to_untied(d.spec, d.w);
            oracle(tgc_oracle, group_conv2d(d.x, ex.spec, ex.weights).data(), tgc_forward(d.x, d.spec, d.w).data(),
                   inst);
        }
        {
            const std::size_t blocks = pick(std::vector<std::size_t>{2, 4, 8}, rng);
            const std::size_t c_i = blocks * rng.range(1, 4), c_o = blocks * rng.range(1, 4);
            const TfcWeights w = init_tfc_weights(c_i, c_o, blocks, rng.below(2) == 1, rng);
            const std::vector<double> x = random_vector(c_i, rng);
            const TfcWeights full = expand_tfc_to_fc(blocks, w);
            const std::string inst = tag("tfc c_i=" + std::to_string(c_i) + " c_o=" + std::to_string(c_o) +
                                             " B=" + std::to_string(blocks),
                                         seed);
            oracle(tfc_oracle, fully_connected(x, full.w, full.bias), tfc_forward(x, blocks, w), inst);
        }
        {
            const Drawn d = draw(ConvFamily::standard, rng);
            const std::string inst = tag("conv " + describe(d.spec) + " x=" + d.x.shape().str(), seed);
            const Tensor4 ref = conv2d(d.x, d.spec, d.w);
            bitwise(tbc_b1, tbc_forward_direct(d.x, d.spec, d.w), ref, inst + " path=direct");
            bitwise(tbc_b1, tbc_forward_fast(d.x, d.spec, d.w), ref, inst + " path=fast");
            bitwise(gc_g1, group_conv2d(d.x, d.spec, d.w), ref, inst);
            bitwise(tgc_b1, tgc_forward(d.x, d.spec, d.w), ref, inst + " G=1");
        }
        {
            const Drawn d = draw(ConvFamily::grouped, rng);
            const std::string inst = tag("gconv " + describe(d.spec) + " x=" + d.x.shape().str(), seed);
            bitwise(tgc_b1, tgc_forward(d.x, d.spec, d.w), group_conv2d(d.x, d.spec, d.w), inst);
        }
        {
            const std::size_t blocks = pick(std::vector<std::size_t>{1, 2, 4}, rng);
            const std::size_t r = pick(std::vector<std::size_t>{1, 2, 4}, rng);
            const std::size_t c = r * blocks * rng.range(1, 3);
            const TiedSeSpec se = init_tied_se(c, r, blocks, rng.below(2) == 1, rng);
            const Tensor4 x = random_tensor4({rng.range(1, 3), c, rng.range(1, 5), rng.range(1, 5)}, rng);
            const Tensor2 pooled = global_avg_pool(x);
            const Tensor2 gate = sigmoid(tfc_forward(relu(tfc_forward(pooled, blocks, se.reduce)), blocks, se.expand));
            const std::string inst = tag("tied_se c=" + std::to_string(c) + " r=" + std::to_string(r) +
                                             " B=" + std::to_string(blocks) + " x=" + x.shape().str(),
                                         seed);
            bitwise(se_comp, tied_se_forward(x, se), scale_channels(x, gate), inst);
        }
    }
    res.checks = {two_path, tbc_oracle, tgc_oracle, tfc_oracle, tbc_b1, gc_g1, tgc_b1, tgc_gb, se_comp};
    return res;
}

namespace {

// Bank gradient assembled from the untied expansion's weight gradient:
// sum over every copy of the bank.
Tensor2 contract_expanded_grad(const ConvSpec& tied, const Tensor2& full_grad) {
    const std::size_t f = tied.filters_per_bank();
    Tensor2 bank(tied.weight_rows(), tied.weight_cols());
    const std::size_t parts = tied.partitions();
    for (std::size_t p = 0; p < parts; ++p) {
        const std::size_t b = p / tied.blocks;
        // TBC expands to a dense conv (copy p sits at column offset p*cols);
        // TGC expands to a group conv (copy p is simply rows of group p).
        const std::size_t col0 = tied.groups > 1 ? 0 : p * tied.weight_cols();
        for (std::size_t r = 0; r < f; ++r)
            for (std::size_t c = 0; c < tied.weight_cols(); ++c)
                bank.at(b * f + r, c) += full_grad.at(p * f + r, col0 + c);
    }
    return bank;
}

}  // namespace

SuiteResult run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed) {
    SuiteResult res{"gradcheck", {}};
    const GradCheckOptions opts;
    for (LayerKind kind : all_layer_kinds()) {
        CheckLine line{std::string(to_string(kind)), opts.tolerance};
        for (std::size_t i = 0; i < seeds; ++i) {
            const std::uint64_t seed = instance_seed(base_seed, i);
            const GradCheckResult r = gradcheck(kind, seed, opts);
            line.record(r.pass(), r.max_rel_error(), r.instance);
        }
        res.checks.push_back(std::move(line));
    }

    CheckLine tied_grad{"tied_grad_eq_expansion_sum", kOracleTol};
    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = instance_seed(base_seed, i);
        Rng rng(seed);
        for (ConvFamily fam : {ConvFamily::tbc, ConvFamily::tgc}) {
            const Drawn d = draw(fam, rng);
            const Tensor4 g = random_tensor4(d.spec.out_shape(d.x.shape()), rng);
            const ExpandedConv ex = expand_tied_to_untied(d.spec, d.w);
            const ConvGrads tied = fam == ConvFamily::tbc ? tbc_backward(d.x, d.spec, d.w, g)
                                                          : tgc_backward(d.x, d.spec, d.w, g);
            const ConvGrads full = fam == ConvFamily::tbc ? conv2d_backward(d.x, ex.spec, ex.weights, g)
                                                          : group_conv2d_backward(d.x, ex.spec, ex.weights, g);
            const Tensor2 contracted = contract_expanded_grad(d.spec, full.weight);
            const double err = std::max(max_rel_error(tied.weight.data(), contracted.data()),
                                        max_rel_error(tied.input.data(), full.input.data()));
            const std::string inst = tag(describe(d.spec) + " x=" + d.x.shape().str(), seed);
            tied_grad.record(err <= kOracleTol, err, inst);
        }
    }
    res.checks.push_back(std::move(tied_grad));
    return res;
}

SuiteResult run_counts_suite(std::size_t seeds, std::uint64_t base_seed) {
    SuiteResult res{"counts", {}};
    CheckLine p_tbc{"params_tbc_times_B2_eq_conv"};
    CheckLine p_tgc{"params_tgc_times_GB_eq_conv"};
    CheckLine p_gc{"params_gc_times_G_eq_conv"};
    CheckLine p_tfc{"params_tfc_times_B2_eq_fc"};
    CheckLine p_se{"params_tied_se_times_B2_eq_se"};
    CheckLine m_tbc{"macs_tbc_times_B_eq_conv"};
    CheckLine m_gc{"macs_gc_times_G_eq_conv"};
    CheckLine alloc{"param_count_eq_allocated"};
    CheckLine fixed{"reference_counts"};

    auto exact = [](CheckLine& line, std::uint64_t got, std::uint64_t want, const std::string& inst) {
        const double err = want ? std::abs(static_cast<double>(got) - static_cast<double>(want)) / static_cast<double>(want)
                                : static_cast<double>(got);
        line.record(got == want, err, inst);
    };

    for (std::size_t i = 0; i < seeds; ++i) {
        const std::uint64_t seed = instance_seed(base_seed, i);
        Rng rng(seed);
        const std::size_t blocks = pick(std::vector<std::size_t>{2, 4, 8}, rng);
        const std::size_t groups = blocks * pick(std::vector<std::size_t>{1, 2, 4}, rng);
        ConvSpec conv;
        conv.c_i = groups * rng.range(1, 8);
        conv.c_o = groups * rng.range(1, 8);
        conv.k = pick(std::vector<std::size_t>{1, 3, 5}, rng);
        conv.pad = conv.k / 2;
        const Shape4 in{rng.range(1, 4), conv.c_i, rng.range(conv.k, 40), rng.range(conv.k, 40)};
        ConvSpec tbc = conv, gc = conv, tgc = conv;
        tbc.blocks = blocks;
        gc.groups = groups;
        tgc.groups = groups;
        tgc.blocks = blocks;
        const std::string inst = tag(describe(tgc) + " x=" + in.str(), seed);

        exact(p_tbc, conv_weight_count(tbc) * blocks * blocks, conv_weight_count(conv), inst);
        exact(p_tgc, conv_weight_count(tgc) * groups * blocks, conv_weight_count(conv), inst);
        exact(p_gc, conv_weight_count(gc) * groups, conv_weight_count(conv), inst);
        exact(p_tfc, fc_weight_count(conv.c_i, conv.c_o, blocks) * blocks * blocks, fc_weight_count(conv.c_i, conv.c_o),
              inst);
        const std::size_t r = pick(std::vector<std::size_t>{1, 2, 4}, rng);
        const std::size_t c = r * blocks * rng.range(1, 8);
        exact(p_se, se_param_count(c, r, blocks, false) * blocks * blocks, se_param_count(c, r, 1, false),
              inst + " se c=" + std::to_string(c) + " r=" + std::to_string(r));
        exact(m_tbc, macs_count(tbc, in) * blocks, macs_count(conv, in), inst);
        exact(m_gc, macs_count(gc, in) * groups, macs_count(conv, in), inst);

        // Allocated weights of a built layer match the count, bias included.
        LayerNode node;
        node.c_i = conv.c_i;
        node.c_o = conv.c_o;
        node.k = conv.k;
        node.groups = groups;
        node.blocks = blocks;
        node.bias = rng.below(2) == 1;
        for (NodeKind kind : {NodeKind::conv, NodeKind::gconv, NodeKind::tbc, NodeKind::tgc, NodeKind::fc, NodeKind::tfc}) {
            node.kind = kind;
            Rng init(seed);
            exact(alloc, make_layer(node, init)->param_count(), param_count(node),
                  inst + " kind=" + std::string(to_string(kind)));
        }
        LayerNode se;
        se.kind = NodeKind::tied_se;
        se.c_i = c;
        se.r = r;
        se.blocks = blocks;
        se.bias = node.bias;
        Rng init(seed);
        exact(alloc, make_layer(se, init)->param_count(), param_count(se), inst + " kind=tied_se");
    }

    {
        ConvSpec conv{64, 64, 3, 1, 1, 1, 1, false};
        ConvSpec tbc = conv, tgc = conv, gc = conv;
        tbc.blocks = 2;
        tgc.groups = 4;
        tgc.blocks = 2;
        gc.groups = 4;
        const Shape4 in{1, 64, 56, 56};
        exact(fixed, param_count(conv), 36864, "conv 64->64 k3 params");
        exact(fixed, param_count(tbc), 9216, "tbc B=2 params");
        exact(fixed, param_count(tgc), 4608, "tgc G=4 B=2 params");
        exact(fixed, param_count(gc), 9216, "gc G=4 params");
        exact(fixed, se_param_count(64, 16, 1, false), 512, "se c=64 r=16 params");
        exact(fixed, se_param_count(64, 16, 2, false), 128, "tied_se c=64 r=16 B=2 params");
        exact(fixed, macs_count(conv, in), 115605504, "conv 1x64x56x56 macs");
        exact(fixed, macs_count(tbc, in), 57802752, "tbc B=2 macs");
        exact(fixed, macs_count(gc, in), 28901376, "gc G=4 macs");
    }

    res.checks = {p_tbc, p_tgc, p_gc, p_tfc, p_se, m_tbc, m_gc, alloc, fixed};
    return res;
}

}  // namespace tiedlab
