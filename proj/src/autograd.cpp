#include "tiedlab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "tiedlab/sampling.hpp"

namespace tiedlab {

namespace {

std::string sz(std::size_t v) { return std::to_string(v); }

void require_same(Shape4 got, Shape4 want, const char* op) {
    if (got != want) {
        throw ShapeError(std::string(op) + ": grad_out shape " + got.str() + " != output shape " + want.str());
    }
}

// (n x c x h x w) -> c x (n*h*w), the layout produced by matmul(bank, im2col(x)).
Tensor2 channels_by_columns(const Tensor4& t) {
    const std::size_t plane = t.h() * t.w();
    Tensor2 out(t.c(), t.n() * plane);
    for (std::size_t n = 0; n < t.n(); ++n) {
        for (std::size_t c = 0; c < t.c(); ++c) {
            const double* src = &t.data()[(n * t.c() + c) * plane];
            std::copy(src, src + plane, &out.row(c)[n * plane]);
        }
    }
    return out;
}

}  // namespace

ConvGrads conv2d_bank_backward(const Tensor4& x, const Tensor2& bank, bool has_bias, std::size_t k,
                               std::size_t stride, std::size_t pad, const Tensor4& grad_out) {
    const Shape4 out_shape{x.n(), bank.rows(), conv_out_dim(x.h(), k, stride, pad), conv_out_dim(x.w(), k, stride, pad)};
    require_same(grad_out.shape(), out_shape, "conv2d_backward");
    if (bank.cols() != x.c() * k * k) throw ShapeError("conv2d_backward: bank " + bank.shape_str() + " mismatch");

    const Tensor2 cols = im2col(x, k, stride, pad);
    const Tensor2 gy = channels_by_columns(grad_out);
    ConvGrads g{col2im(matmul(transpose(bank), gy), x.shape(), k, stride, pad), matmul(gy, transpose(cols)), {}};
    if (has_bias) {
        g.bias.resize(bank.rows());
        for (std::size_t o = 0; o < bank.rows(); ++o) {
            const auto row = gy.row(o);
            g.bias[o] = std::accumulate(row.begin(), row.end(), 0.0);
        }
    }
    return g;
}

ConvGrads conv2d_backward(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts, const Tensor4& grad_out) {
    if (spec.groups != 1 || spec.blocks != 1) throw ShapeError("conv2d_backward: expects G=1, B=1");
    check_weights(spec, wts);
    spec.out_shape(x.shape());
    return conv2d_bank_backward(x, wts.w, spec.has_bias, spec.k, spec.stride, spec.pad, grad_out);
}

ConvGrads tgc_backward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts, const Tensor4& grad_out) {
    check_weights(spec, wts);
    require_same(grad_out.shape(), spec.out_shape(x.shape()), "tgc_backward");
    const std::size_t parts = spec.partitions();
    const std::size_t f = spec.filters_per_bank();
    const std::vector<Tensor4> xs = split_channels(x, parts);
    const std::vector<Tensor4> gys = split_channels(grad_out, parts);

    ConvGrads g{{}, Tensor2(wts.w.rows(), wts.w.cols()), std::vector<double>(wts.bias.size(), 0.0)};
    std::vector<Tensor4> gxs;
    gxs.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        const std::size_t bank = p / spec.blocks;
        ConvGrads part = conv2d_bank_backward(xs[p], wts.w.row_slice(bank * f, f), spec.has_bias, spec.k,
                                              spec.stride, spec.pad, gys[p]);
        for (std::size_t r = 0; r < f; ++r) {
            auto dst = g.weight.row(bank * f + r);
            const auto src = part.weight.row(r);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
            if (spec.has_bias) g.bias[bank * f + r] += part.bias[r];
        }
        gxs.push_back(std::move(part.input));
    }
    g.input = concat_channels(gxs);
    return g;
}

ConvGrads group_conv2d_backward(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts,
                                const Tensor4& grad_out) {
    if (spec.blocks != 1) throw ShapeError("group_conv2d_backward: expects B=1");
    if (spec.groups == 1) return conv2d_backward(x, spec, wts, grad_out);
    return tgc_backward(x, spec, wts, grad_out);
}

ConvGrads tbc_backward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts, const Tensor4& grad_out) {
    if (spec.groups != 1) throw ShapeError("tbc_backward: TBC expects G=1, got G=" + sz(spec.groups));
    check_weights(spec, wts);
    require_same(grad_out.shape(), spec.out_shape(x.shape()), "tbc_backward");
    ConvGrads g = conv2d_bank_backward(fold_blocks_to_batch(x, spec.blocks), wts.w, spec.has_bias, spec.k,
                                       spec.stride, spec.pad, fold_blocks_to_batch(grad_out, spec.blocks));
    g.input = unfold_batch_to_blocks(g.input, spec.blocks);
    return g;
}

DenseGrads linear_backward(const Tensor2& x, const Tensor2& w, bool has_bias, const Tensor2& grad_out) {
    if (x.cols() != w.cols() || grad_out.rows() != x.rows() || grad_out.cols() != w.rows()) {
        throw ShapeError("linear_backward: x " + x.shape_str() + ", w " + w.shape_str() + ", grad_out " +
                         grad_out.shape_str() + " are inconsistent");
    }
    DenseGrads g{matmul(grad_out, w), matmul(transpose(grad_out), x), {}};
    if (has_bias) {
        g.bias.assign(w.rows(), 0.0);
        for (std::size_t r = 0; r < grad_out.rows(); ++r)
            for (std::size_t c = 0; c < grad_out.cols(); ++c) g.bias[c] += grad_out.at(r, c);
    }
    return g;
}

DenseGrads tfc_backward(const Tensor2& x, std::size_t blocks, const TfcWeights& wts, const Tensor2& grad_out) {
    if (blocks == 0 || x.cols() % blocks != 0 || grad_out.cols() % blocks != 0) {
        throw ShapeError("tfc_backward: widths not divisible by B=" + sz(blocks));
    }
    check_tfc(x.cols(), grad_out.cols(), blocks, wts);
    if (grad_out.rows() != x.rows()) throw ShapeError("tfc_backward: batch mismatch");
    const Tensor2 xb(x.rows() * blocks, x.cols() / blocks, x.vec());
    const Tensor2 gb(grad_out.rows() * blocks, grad_out.cols() / blocks, grad_out.vec());
    DenseGrads g = linear_backward(xb, wts.w, !wts.bias.empty(), gb);
    g.input = Tensor2(x.rows(), x.cols(), g.input.vec());
    return g;
}

TiedSeGrads tied_se_backward(const Tensor4& x, const TiedSeSpec& spec, const Tensor4& grad_out) {
    spec.validate();
    require_same(grad_out.shape(), x.shape(), "tied_se_backward");
    if (x.c() != spec.c) throw ShapeError("tied_se_backward: channel mismatch");

    const Tensor2 squeezed = global_avg_pool(x);
    const Tensor2 pre_hidden = tfc_forward(squeezed, spec.blocks, spec.reduce);
    const Tensor2 hidden = relu(pre_hidden);
    const Tensor2 pre_gate = tfc_forward(hidden, spec.blocks, spec.expand);
    const Tensor2 gate = sigmoid(pre_gate);

    const std::size_t plane = x.h() * x.w();
    Tensor2 g_gate(x.n(), x.c());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const std::size_t off = (n * x.c() + c) * plane;
            g_gate.at(n, c) = dot(grad_out.data().subspan(off, plane), x.data().subspan(off, plane));
        }
    }
    DenseGrads ex = tfc_backward(hidden, spec.blocks, spec.expand, sigmoid_backward(pre_gate, g_gate));
    DenseGrads rd = tfc_backward(squeezed, spec.blocks, spec.reduce, relu_backward(pre_hidden, ex.input));

    Tensor4 gx = scale_channels(grad_out, gate);
    const Tensor4 via_pool = global_avg_pool_backward(x.shape(), rd.input);
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += via_pool.data()[i];
    return {std::move(gx), {std::move(rd.weight), std::move(rd.bias)}, {std::move(ex.weight), std::move(ex.bias)}};
}

namespace {

template <typename T>
T relu_vjp(const T& x, const T& gy) {
    if (x.vec().size() != gy.vec().size()) throw ShapeError("relu_backward: shape mismatch");
    T g = gy;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(x.data()[i] > 0.0)) g.data()[i] = 0.0;
    return g;
}

template <typename T>
T sigmoid_vjp(const T& x, const T& gy) {
    if (x.vec().size() != gy.vec().size()) throw ShapeError("sigmoid_backward: shape mismatch");
    T g = gy;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = sigmoid(x.data()[i]);
        g.data()[i] *= s * (1.0 - s);
    }
    return g;
}

}  // namespace

Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out) {
    require_same(grad_out.shape(), x.shape(), "relu_backward");
    return relu_vjp(x, grad_out);
}
Tensor2 relu_backward(const Tensor2& x, const Tensor2& grad_out) { return relu_vjp(x, grad_out); }
Tensor4 sigmoid_backward(const Tensor4& x, const Tensor4& grad_out) {
    require_same(grad_out.shape(), x.shape(), "sigmoid_backward");
    return sigmoid_vjp(x, grad_out);
}
Tensor2 sigmoid_backward(const Tensor2& x, const Tensor2& grad_out) { return sigmoid_vjp(x, grad_out); }

Tensor4 global_avg_pool_backward(Shape4 input_shape, const Tensor2& grad_out) {
    if (grad_out.rows() != input_shape.n || grad_out.cols() != input_shape.c) {
        throw ShapeError("global_avg_pool_backward: grad " + grad_out.shape_str() + " vs input " + input_shape.str());
    }
    const std::size_t plane = input_shape.h * input_shape.w;
    const double inv = 1.0 / static_cast<double>(plane);
    Tensor4 g(input_shape);
    for (std::size_t n = 0; n < input_shape.n; ++n)
        for (std::size_t c = 0; c < input_shape.c; ++c) {
            double* p = &g.data()[(n * input_shape.c + c) * plane];
            std::fill(p, p + plane, grad_out.at(n, c) * inv);
        }
    return g;
}

// ---------------------------------------------------------------------------
// gradcheck

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::group_conv2d: return "group_conv2d";
        case LayerKind::tbc: return "tbc";
        case LayerKind::tgc: return "tgc";
        case LayerKind::fc: return "fc";
        case LayerKind::tfc: return "tfc";
        case LayerKind::tied_se: return "tied_se";
        case LayerKind::relu: return "relu";
        case LayerKind::sigmoid: return "sigmoid";
        case LayerKind::global_avg_pool: return "global_avg_pool";
        case LayerKind::softmax_cross_entropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

const std::vector<LayerKind>& all_layer_kinds() {
    static const std::vector<LayerKind> kinds{
        LayerKind::conv2d, LayerKind::group_conv2d, LayerKind::tbc,     LayerKind::tgc,
        LayerKind::fc,     LayerKind::tfc,          LayerKind::tied_se, LayerKind::relu,
        LayerKind::sigmoid, LayerKind::global_avg_pool, LayerKind::softmax_cross_entropy,
    };
    return kinds;
}

bool GradCheckResult::pass() const {
    return std::all_of(reports.begin(), reports.end(), [](const GradReport& r) { return r.pass; });
}

double GradCheckResult::max_rel_error() const {
    double m = 0.0;
    for (const GradReport& r : reports) m = std::max(m, r.max_rel_error);
    return m;
}

double grad_rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

using Objective = std::function<double()>;

std::vector<std::size_t> sample_coords(std::size_t size, std::size_t limit, Rng& rng) {
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t take = std::min(size, limit);
    for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + rng.below(size - i)]);
    idx.resize(take);
    return idx;
}

GradReport check_tensor(std::string op, std::string param, std::span<double> values, std::span<const double> analytic,
                        const Objective& objective, Rng& rng, const GradCheckOptions& opts) {
    if (values.size() != analytic.size()) {
        throw ShapeError("gradcheck: analytic gradient for " + param + " has wrong length");
    }
    GradReport rep{std::move(op), std::move(param), 0.0, false, opts.epsilon, 0};
    for (std::size_t i : sample_coords(values.size(), opts.max_coords, rng)) {
        const double saved = values[i];
        values[i] = saved + opts.epsilon;
        const double up = objective();
        values[i] = saved - opts.epsilon;
        const double down = objective();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * opts.epsilon);
        rep.max_rel_error = std::max(rep.max_rel_error, grad_rel_error(analytic[i], numeric));
        ++rep.coords_checked;
    }
    rep.pass = rep.max_rel_error <= opts.tolerance;
    return rep;
}

GradCheckResult conv_check(LayerKind kind, const ConvSpec& spec, Shape4 in, Rng& rng, const GradCheckOptions& opts) {
    Tensor4 x = random_tensor4(in, rng);
    ConvWeights wts = init_conv_weights(spec, rng);
    rng.fill_uniform(wts.w.data());
    rng.fill_uniform(wts.bias);
    const Tensor4 g = random_tensor4(spec.out_shape(in), rng);

    std::function<Tensor4()> forward;
    ConvGrads grads;
    switch (kind) {
        case LayerKind::conv2d:
            forward = [&] { return conv2d(x, spec, wts); };
            grads = conv2d_backward(x, spec, wts, g);
            break;
        case LayerKind::group_conv2d:
            forward = [&] { return group_conv2d(x, spec, wts); };
            grads = group_conv2d_backward(x, spec, wts, g);
            break;
        case LayerKind::tbc:
            forward = [&] { return tbc_forward_direct(x, spec, wts); };
            grads = tbc_backward(x, spec, wts, g);
            break;
        case LayerKind::tgc:
            forward = [&] { return tgc_forward(x, spec, wts); };
            grads = tgc_backward(x, spec, wts, g);
            break;
        default:
            throw InputError("gradcheck_conv: not a conv kind: " + std::string(to_string(kind)));
    }
    const Objective obj = [&] { return dot(g.data(), forward().data()); };
    const std::string op(to_string(kind));
    GradCheckResult res{op + " " + describe(spec) + " x=" + in.str(), {}};
    res.reports.push_back(check_tensor(op, "input", x.data(), grads.input.data(), obj, rng, opts));
    res.reports.push_back(check_tensor(op, "weight", wts.w.data(), grads.weight.data(), obj, rng, opts));
    if (spec.has_bias) res.reports.push_back(check_tensor(op, "bias", wts.bias, grads.bias, obj, rng, opts));
    return res;
}

// Entries bounded away from zero so +-epsilon never crosses a relu kink.
Tensor4 kink_free_tensor(Shape4 shape, Rng& rng) {
    Tensor4 t(shape);
    for (double& v : t.data()) {
        const double u = rng.uniform();
        v = (u < 0 ? -1.0 : 1.0) * (0.05 + 0.95 * std::abs(u));
    }
    return t;
}

Shape4 small_shape(Rng& rng) { return {rng.range(1, 2), rng.range(1, 4), rng.range(1, 4), rng.range(1, 4)}; }

GradCheckResult dense_check(LayerKind kind, Rng& rng, const GradCheckOptions& opts) {
    const std::size_t blocks = kind == LayerKind::tfc ? rng.range(2, 4) : 1;
    const std::size_t n = rng.range(1, 3);
    const std::size_t c_i = blocks * rng.range(1, 4);
    const std::size_t c_o = blocks * rng.range(1, 4);
    const bool has_bias = rng.below(2) == 1;
    Tensor2 x = random_tensor2(n, c_i, rng);
    TfcWeights wts{random_tensor2(c_o / blocks, c_i / blocks, rng), {}};
    if (has_bias) wts.bias = random_vector(c_o / blocks, rng);
    const Tensor2 g = random_tensor2(n, c_o, rng);

    DenseGrads grads = kind == LayerKind::tfc ? tfc_backward(x, blocks, wts, g)
                                              : linear_backward(x, wts.w, has_bias, g);
    const Objective obj = [&] {
        const Tensor2 y = kind == LayerKind::tfc ? tfc_forward(x, blocks, wts) : linear(x, wts.w, wts.bias);
        return dot(g.data(), y.data());
    };
    const std::string op(to_string(kind));
    GradCheckResult res{op + " n=" + sz(n) + " c_i=" + sz(c_i) + " c_o=" + sz(c_o) + " B=" + sz(blocks) +
                            " bias=" + (has_bias ? "1" : "0"),
                        {}};
    res.reports.push_back(check_tensor(op, "input", x.data(), grads.input.data(), obj, rng, opts));
    res.reports.push_back(check_tensor(op, "weight", wts.w.data(), grads.weight.data(), obj, rng, opts));
    if (has_bias) res.reports.push_back(check_tensor(op, "bias", wts.bias, grads.bias, obj, rng, opts));
    return res;
}

bool near_relu_kink(const Tensor4& x, const TiedSeSpec& se, double margin) {
    const Tensor2 pre = tfc_forward(global_avg_pool(x), se.blocks, se.reduce);
    return std::any_of(pre.data().begin(), pre.data().end(), [&](double v) { return std::abs(v) < margin; });
}

GradCheckResult tied_se_check(Rng& rng, const GradCheckOptions& opts) {
    const std::size_t blocks = rng.range(1, 2);
    const std::size_t r = rng.range(1, 2);
    const std::size_t c = r * blocks * rng.range(1, 2);
    const bool has_bias = rng.below(2) == 1;
    const Shape4 in{rng.range(1, 2), c, rng.range(1, 3), rng.range(1, 3)};
    Tensor4 x(in);
    TiedSeSpec se;
    // Redraw until hidden pre-activations sit clear of the relu kink.
    do {
        x = random_tensor4(in, rng);
        se = init_tied_se(c, r, blocks, has_bias, rng);
        rng.fill_uniform(se.reduce.w.data());
        rng.fill_uniform(se.expand.w.data());
    } while (near_relu_kink(x, se, 1e-2));
    const Tensor4 g = random_tensor4(in, rng);

    TiedSeGrads grads = tied_se_backward(x, se, g);
    const Objective obj = [&] { return dot(g.data(), tied_se_forward(x, se).data()); };
    GradCheckResult res{"tied_se c=" + sz(c) + " r=" + sz(r) + " B=" + sz(blocks) + " bias=" + (has_bias ? "1" : "0") +
                            " x=" + in.str(),
                        {}};
    res.reports.push_back(check_tensor("tied_se", "input", x.data(), grads.input.data(), obj, rng, opts));
    res.reports.push_back(
        check_tensor("tied_se", "reduce.weight", se.reduce.w.data(), grads.reduce.w.data(), obj, rng, opts));
    res.reports.push_back(
        check_tensor("tied_se", "expand.weight", se.expand.w.data(), grads.expand.w.data(), obj, rng, opts));
    if (has_bias) {
        res.reports.push_back(check_tensor("tied_se", "reduce.bias", se.reduce.bias, grads.reduce.bias, obj, rng, opts));
        res.reports.push_back(check_tensor("tied_se", "expand.bias", se.expand.bias, grads.expand.bias, obj, rng, opts));
    }
    return res;
}

GradCheckResult elementwise_check(LayerKind kind, Rng& rng, const GradCheckOptions& opts) {
    const Shape4 in = small_shape(rng);
    const std::string op(to_string(kind));
    GradCheckResult res{op + " x=" + in.str(), {}};
    if (kind == LayerKind::global_avg_pool) {
        Tensor4 x = random_tensor4(in, rng);
        const Tensor2 g = random_tensor2(in.n, in.c, rng);
        const Tensor4 gx = global_avg_pool_backward(in, g);
        const Objective obj = [&] { return dot(g.data(), global_avg_pool(x).data()); };
        res.reports.push_back(check_tensor(op, "input", x.data(), gx.data(), obj, rng, opts));
        return res;
    }
    const bool is_relu = kind == LayerKind::relu;
    Tensor4 x = is_relu ? kink_free_tensor(in, rng) : random_tensor4(in, rng, 3.0);
    const Tensor4 g = random_tensor4(in, rng);
    const Tensor4 gx = is_relu ? relu_backward(x, g) : sigmoid_backward(x, g);
    const Objective obj = [&] { return dot(g.data(), (is_relu ? relu(x) : sigmoid(x)).data()); };
    res.reports.push_back(check_tensor(op, "input", x.data(), gx.data(), obj, rng, opts));
    return res;
}

GradCheckResult softmax_check(Rng& rng, const GradCheckOptions& opts) {
    const std::size_t n = rng.range(1, 4);
    const std::size_t classes = rng.range(2, 5);
    Tensor2 logits = random_tensor2(n, classes, rng, 3.0);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(classes);
    const Tensor2 grad = softmax_cross_entropy(logits, labels).grad;
    const Objective obj = [&] { return softmax_cross_entropy(logits, labels).loss; };
    GradCheckResult res{"softmax_cross_entropy n=" + sz(n) + " classes=" + sz(classes), {}};
    res.reports.push_back(
        check_tensor("softmax_cross_entropy", "logits", logits.data(), grad.data(), obj, rng, opts));
    return res;
}

}  // namespace

GradCheckResult gradcheck_conv(LayerKind kind, const ConvSpec& spec, Shape4 input, std::uint64_t seed,
                               const GradCheckOptions& opts) {
    Rng rng(seed);
    GradCheckResult res = conv_check(kind, spec, input, rng, opts);
    res.instance += " seed=" + std::to_string(seed);
    return res;
}

GradCheckResult gradcheck(LayerKind kind, std::uint64_t seed, const GradCheckOptions& opts) {
    Rng rng(seed);
    GradCheckResult res;
    switch (kind) {
        case LayerKind::conv2d:
        case LayerKind::group_conv2d:
        case LayerKind::tbc:
        case LayerKind::tgc: {
            const ConvFamily family = kind == LayerKind::conv2d         ? ConvFamily::standard
                                      : kind == LayerKind::group_conv2d ? ConvFamily::grouped
                                      : kind == LayerKind::tbc          ? ConvFamily::tbc
                                                                        : ConvFamily::tgc;
            const ConvCase cc = random_conv_case(family, rng);
            res = conv_check(kind, cc.spec, cc.input, rng, opts);
            break;
        }
        case LayerKind::fc:
        case LayerKind::tfc:
            res = dense_check(kind, rng, opts);
            break;
        case LayerKind::tied_se:
            res = tied_se_check(rng, opts);
            break;
        case LayerKind::relu:
        case LayerKind::sigmoid:
        case LayerKind::global_avg_pool:
            res = elementwise_check(kind, rng, opts);
            break;
        case LayerKind::softmax_cross_entropy:
            res = softmax_check(rng, opts);
            break;
    }
    res.instance += " seed=" + std::to_string(seed);
    return res;
}

}  // namespace tiedlab
