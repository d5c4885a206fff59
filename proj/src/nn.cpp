#include "tiedlab/nn.hpp"

#include <algorithm>
#include <cmath>

namespace tiedlab {

namespace {

std::string sz(std::size_t v) { return std::to_string(v); }

}  // namespace

void ConvSpec::validate() const {
    if (c_i == 0 || c_o == 0) throw ShapeError("ConvSpec: channel counts must be >= 1");
    if (k == 0) throw ShapeError("ConvSpec: kernel size must be >= 1");
    if (stride == 0) throw ShapeError("ConvSpec: stride must be >= 1");
    if (groups == 0) throw ShapeError("ConvSpec: G must be >= 1");
    if (blocks == 0) throw ShapeError("ConvSpec: B must be >= 1");
    if (c_i % groups != 0 || c_o % groups != 0) {
        throw ShapeError("ConvSpec: c_i=" + sz(c_i) + " and c_o=" + sz(c_o) + " must be divisible by G=" +
                         sz(groups));
    }
    if (c_i % blocks != 0 || c_o % blocks != 0) {
        throw ShapeError("ConvSpec: c_i=" + sz(c_i) + " and c_o=" + sz(c_o) + " must be divisible by B=" +
                         sz(blocks));
    }
    if (groups > 1 && blocks > 1 && groups % blocks != 0) {
        throw ShapeError("ConvSpec: G=" + sz(groups) + " must be divisible by B=" + sz(blocks));
    }
}

Shape4 ConvSpec::out_shape(Shape4 in) const {
    if (in.c != c_i) throw ShapeError("conv: input has " + sz(in.c) + " channels, layer expects c_i=" + sz(c_i));
    return {in.n, c_o, conv_out_dim(in.h, k, stride, pad), conv_out_dim(in.w, k, stride, pad)};
}

void check_weights(const ConvSpec& spec, const ConvWeights& wts) {
    spec.validate();
    if (wts.w.rows() != spec.weight_rows() || wts.w.cols() != spec.weight_cols()) {
        throw ShapeError("conv weights: expected " + sz(spec.weight_rows()) + "x" + sz(spec.weight_cols()) +
                         ", got " + wts.w.shape_str());
    }
    const std::size_t want_bias = spec.has_bias ? spec.weight_rows() : 0;
    if (wts.bias.size() != want_bias) {
        throw ShapeError("conv weights: bias length " + sz(wts.bias.size()) + ", expected " + sz(want_bias));
    }
}

ConvWeights init_conv_weights(const ConvSpec& spec, Rng& rng) {
    spec.validate();
    const double a = std::sqrt(1.0 / static_cast<double>(spec.weight_cols()));
    ConvWeights wts{random_tensor2(spec.weight_rows(), spec.weight_cols(), rng, a), {}};
    if (spec.has_bias) wts.bias = random_vector(spec.weight_rows(), rng, a);
    return wts;
}

Tensor4 conv2d_bank(const Tensor4& x, const Tensor2& bank, std::span<const double> bias, std::size_t k,
                    std::size_t stride, std::size_t pad) {
    if (bank.cols() != x.c() * k * k) {
        throw ShapeError("conv2d: bank " + bank.shape_str() + " does not match " + sz(x.c()) +
                         " input channels with k=" + sz(k));
    }
    if (!bias.empty() && bias.size() != bank.rows()) {
        throw ShapeError("conv2d: bias length " + sz(bias.size()) + " != filters " + sz(bank.rows()));
    }
    const std::size_t oh = conv_out_dim(x.h(), k, stride, pad);
    const std::size_t ow = conv_out_dim(x.w(), k, stride, pad);
    const Tensor2 prod = matmul(bank, im2col(x, k, stride, pad));
    const std::size_t plane = oh * ow;
    const std::size_t co = bank.rows();
    Tensor4 y(x.n(), co, oh, ow);
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t o = 0; o < co; ++o) {
            const double b = bias.empty() ? 0.0 : bias[o];
            const double* src = &prod.row(o)[n * plane];
            double* dst = &y.data()[(n * co + o) * plane];
            for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
        }
    }
    return y;
}

Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts) {
    if (spec.groups != 1 || spec.blocks != 1) {
        throw ShapeError("conv2d: expects G=1, B=1 (got G=" + sz(spec.groups) + ", B=" + sz(spec.blocks) + ")");
    }
    check_weights(spec, wts);
    spec.out_shape(x.shape());
    return conv2d_bank(x, wts.w, wts.bias, spec.k, spec.stride, spec.pad);
}

Tensor4 group_conv2d(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts) {
    if (spec.blocks != 1) throw ShapeError("group_conv2d: expects B=1, got B=" + sz(spec.blocks));
    check_weights(spec, wts);
    spec.out_shape(x.shape());
    if (spec.groups == 1) return conv2d(x, spec, wts);

    const std::size_t f = spec.filters_per_bank();
    const std::vector<Tensor4> parts = split_channels(x, spec.groups);
    std::vector<Tensor4> outs;
    outs.reserve(parts.size());
    for (std::size_t g = 0; g < spec.groups; ++g) {
        std::span<const double> bias;
        if (spec.has_bias) bias = std::span<const double>(wts.bias).subspan(g * f, f);
        outs.push_back(conv2d_bank(parts[g], wts.w.row_slice(g * f, f), bias, spec.k, spec.stride, spec.pad));
    }
    return concat_channels(outs);
}

std::vector<double> fully_connected(std::span<const double> x, const Tensor2& w, std::span<const double> bias) {
    if (x.size() != w.cols()) {
        throw ShapeError("fully_connected: input length " + sz(x.size()) + " != weight cols " + sz(w.cols()));
    }
    if (!bias.empty() && bias.size() != w.rows()) {
        throw ShapeError("fully_connected: bias length " + sz(bias.size()) + " != c_o " + sz(w.rows()));
    }
    const Tensor2 col = matmul(w, Tensor2(x.size(), 1, std::vector<double>(x.begin(), x.end())));
    std::vector<double> y(col.vec());
    if (!bias.empty())
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i];
    return y;
}

Tensor2 linear(const Tensor2& x, const Tensor2& w, std::span<const double> bias) {
    if (x.cols() != w.cols()) {
        throw ShapeError("linear: input " + x.shape_str() + " does not match weight " + w.shape_str());
    }
    if (!bias.empty() && bias.size() != w.rows()) {
        throw ShapeError("linear: bias length " + sz(bias.size()) + " != c_o " + sz(w.rows()));
    }
    Tensor2 y = matmul(x, transpose(w));
    if (!bias.empty()) {
        for (std::size_t r = 0; r < y.rows(); ++r)
            for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) += bias[c];
    }
    return y;
}

Tensor2 global_avg_pool(const Tensor4& x) {
    const std::size_t plane = x.h() * x.w();
    Tensor2 out(x.n(), x.c());
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            const double* p = &x.data()[(n * x.c() + c) * plane];
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            out.at(n, c) = s / static_cast<double>(plane);
        }
    }
    return out;
}

namespace {

template <typename T, typename Fn>
T map_elements(const T& x, Fn fn) {
    T y = x;
    for (double& v : y.data()) v = fn(v);
    return y;
}

double relu_scalar(double v) { return v > 0.0 ? v : 0.0; }

}  // namespace

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor4 relu(const Tensor4& x) { return map_elements(x, relu_scalar); }
Tensor2 relu(const Tensor2& x) { return map_elements(x, relu_scalar); }
Tensor4 sigmoid(const Tensor4& x) { return map_elements(x, [](double v) { return sigmoid(v); }); }
Tensor2 sigmoid(const Tensor2& x) { return map_elements(x, [](double v) { return sigmoid(v); }); }

LossAndGrad softmax_cross_entropy(const Tensor2& logits, std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("softmax_cross_entropy: " + sz(labels.size()) + " labels for " + sz(logits.rows()) +
                         " rows");
    }
    const std::size_t n = logits.rows(), k = logits.cols();
    LossAndGrad out{0.0, Tensor2(n, k)};
    for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] >= k) {
            throw InputError("softmax_cross_entropy: label " + sz(labels[r]) + " out of range for " + sz(k) +
                             " classes");
        }
        const auto row = logits.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        out.loss += lse - row[labels[r]];
        for (std::size_t c = 0; c < k; ++c) {
            const double p = std::exp(row[c] - lse);
            out.grad.at(r, c) = (p - (c == labels[r] ? 1.0 : 0.0)) / static_cast<double>(n);
        }
    }
    out.loss /= static_cast<double>(n);
    return out;
}

Tensor2 as_matrix(const Tensor4& x) { return Tensor2(x.n(), x.c() * x.h() * x.w(), x.vec()); }

Tensor4 as_tensor4(const Tensor2& x) { return Tensor4({x.rows(), x.cols(), 1, 1}, x.vec()); }

}  // namespace tiedlab
