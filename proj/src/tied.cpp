#include "tiedlab/tied.hpp"

#include <cmath>

namespace tiedlab {

namespace {

std::string sz(std::size_t v) { return std::to_string(v); }

std::span<const double> bias_slice(const ConvWeights& wts, std::size_t first, std::size_t count) {
    if (wts.bias.empty()) return {};
    return std::span<const double>(wts.bias).subspan(first, count);
}

void require_tbc(const ConvSpec& spec, const TiedConvWeights& wts, const char* op) {
    if (spec.groups != 1) {
        throw ShapeError(std::string(op) + ": TBC expects G=1, got G=" + sz(spec.groups) + " (use tgc_forward)");
    }
    check_weights(spec, wts);
}

}  // namespace

Tensor4 tbc_forward_direct(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts) {
    require_tbc(spec, wts, "tbc_forward_direct");
    spec.out_shape(x.shape());
    const std::vector<Tensor4> blocks = split_channels(x, spec.blocks);
    std::vector<Tensor4> outs;
    outs.reserve(blocks.size());
    for (const Tensor4& blk : blocks) {
        outs.push_back(conv2d_bank(blk, wts.w, wts.bias, spec.k, spec.stride, spec.pad));
    }
    return concat_channels(outs);
}

Tensor4 tbc_forward_fast(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts) {
    require_tbc(spec, wts, "tbc_forward_fast");
    spec.out_shape(x.shape());
    const Tensor4 folded = fold_blocks_to_batch(x, spec.blocks);
    return unfold_batch_to_blocks(conv2d_bank(folded, wts.w, wts.bias, spec.k, spec.stride, spec.pad),
                                  spec.blocks);
}

Tensor4 tgc_forward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts) {
    check_weights(spec, wts);
    spec.out_shape(x.shape());
    const std::size_t parts = spec.partitions();
    const std::size_t f = spec.filters_per_bank();
    const std::vector<Tensor4> inputs = split_channels(x, parts);
    std::vector<Tensor4> outs;
    outs.reserve(parts);
    for (std::size_t g = 0; g < parts; ++g) {
        const std::size_t bank = g / spec.blocks;
        outs.push_back(conv2d_bank(inputs[g], wts.w.row_slice(bank * f, f), bias_slice(wts, bank * f, f), spec.k,
                                   spec.stride, spec.pad));
    }
    return concat_channels(outs);
}

void check_tfc(std::size_t c_i, std::size_t c_o, std::size_t blocks, const TfcWeights& wts) {
    if (blocks == 0 || c_i % blocks != 0 || c_o % blocks != 0) {
        throw ShapeError("tfc: c_i=" + sz(c_i) + " and c_o=" + sz(c_o) + " must be divisible by B=" + sz(blocks));
    }
    if (wts.w.rows() != c_o / blocks || wts.w.cols() != c_i / blocks) {
        throw ShapeError("tfc: weight " + wts.w.shape_str() + " does not match " + sz(c_o / blocks) + "x" +
                         sz(c_i / blocks) + " for B=" + sz(blocks));
    }
    if (!wts.bias.empty() && wts.bias.size() != c_o / blocks) {
        throw ShapeError("tfc: bias length " + sz(wts.bias.size()) + " != c_o/B = " + sz(c_o / blocks));
    }
}

TfcWeights init_tfc_weights(std::size_t c_i, std::size_t c_o, std::size_t blocks, bool has_bias, Rng& rng) {
    if (blocks == 0 || c_i % blocks != 0 || c_o % blocks != 0) {
        throw ShapeError("tfc: c_i=" + sz(c_i) + " and c_o=" + sz(c_o) + " must be divisible by B=" + sz(blocks));
    }
    const double a = std::sqrt(static_cast<double>(blocks) / static_cast<double>(c_i));
    TfcWeights wts{random_tensor2(c_o / blocks, c_i / blocks, rng, a), {}};
    if (has_bias) wts.bias = random_vector(c_o / blocks, rng, a);
    return wts;
}

std::vector<double> tfc_forward(std::span<const double> x, std::size_t blocks, const TfcWeights& wts) {
    if (blocks == 0 || x.size() % blocks != 0) {
        throw ShapeError("tfc: input length " + sz(x.size()) + " not divisible by B=" + sz(blocks));
    }
    check_tfc(x.size(), wts.w.rows() * blocks, blocks, wts);
    const std::size_t bi = x.size() / blocks;
    std::vector<double> y;
    y.reserve(wts.w.rows() * blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::vector<double> part = fully_connected(x.subspan(b * bi, bi), wts.w, wts.bias);
        y.insert(y.end(), part.begin(), part.end());
    }
    return y;
}

Tensor2 tfc_forward(const Tensor2& x, std::size_t blocks, const TfcWeights& wts) {
    if (blocks == 0 || x.cols() % blocks != 0) {
        throw ShapeError("tfc: input width " + sz(x.cols()) + " not divisible by B=" + sz(blocks));
    }
    check_tfc(x.cols(), wts.w.rows() * blocks, blocks, wts);
    // Row-major: the B blocks of a row are consecutive, so an n x c_i matrix is
    // the (n*B) x (c_i/B) matrix of blocks.
    const Tensor2 rows(x.rows() * blocks, x.cols() / blocks, x.vec());
    const Tensor2 y = linear(rows, wts.w, wts.bias);
    return Tensor2(x.rows(), y.cols() * blocks, y.vec());
}

void TiedSeSpec::validate() const {
    if (c == 0 || r == 0 || blocks == 0 || c % (r * blocks) != 0) {
        throw ShapeError("tied_se: c=" + sz(c) + " must be divisible by r*B = " + sz(r) + "*" + sz(blocks));
    }
    check_tfc(c, hidden(), blocks, reduce);
    check_tfc(hidden(), c, blocks, expand);
}

TiedSeSpec init_tied_se(std::size_t c, std::size_t r, std::size_t blocks, bool has_bias, Rng& rng) {
    if (c == 0 || r == 0 || blocks == 0 || c % (r * blocks) != 0) {
        throw ShapeError("tied_se: c=" + sz(c) + " must be divisible by r*B = " + sz(r) + "*" + sz(blocks));
    }
    TiedSeSpec se{c, r, blocks, {}, {}};
    se.reduce = init_tfc_weights(c, c / r, blocks, has_bias, rng);
    se.expand = init_tfc_weights(c / r, c, blocks, has_bias, rng);
    return se;
}

Tensor4 scale_channels(const Tensor4& x, const Tensor2& s) {
    if (s.rows() != x.n() || s.cols() != x.c()) {
        throw ShapeError("scale_channels: gate " + s.shape_str() + " does not match " + x.shape().str());
    }
    const std::size_t plane = x.h() * x.w();
    Tensor4 y = x;
    for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t c = 0; c < x.c(); ++c) {
            double* p = &y.data()[(n * x.c() + c) * plane];
            for (std::size_t i = 0; i < plane; ++i) p[i] *= s.at(n, c);
        }
    }
    return y;
}

Tensor2 tied_se_gate(const Tensor4& x, const TiedSeSpec& spec) {
    spec.validate();
    if (x.c() != spec.c) {
        throw ShapeError("tied_se: input has " + sz(x.c()) + " channels, block expects " + sz(spec.c));
    }
    const Tensor2 squeezed = global_avg_pool(x);
    const Tensor2 hidden = relu(tfc_forward(squeezed, spec.blocks, spec.reduce));
    return sigmoid(tfc_forward(hidden, spec.blocks, spec.expand));
}

Tensor4 tied_se_forward(const Tensor4& x, const TiedSeSpec& spec) {
    return scale_channels(x, tied_se_gate(x, spec));
}

ExpandedConv expand_tied_to_untied(const ConvSpec& spec, const TiedConvWeights& wts) {
    check_weights(spec, wts);
    if (!spec.tied()) return {spec, wts};

    const std::size_t f = spec.filters_per_bank();
    if (spec.groups > 1) {
        ConvSpec out = spec;
        out.blocks = 1;
        ConvWeights ex{Tensor2(out.weight_rows(), out.weight_cols()), {}};
        for (std::size_t g = 0; g < spec.groups; ++g) {
            const std::size_t bank = g / spec.blocks;
            for (std::size_t r = 0; r < f; ++r) {
                const auto src = wts.w.row(bank * f + r);
                std::copy(src.begin(), src.end(), ex.w.row(g * f + r).begin());
                if (spec.has_bias) ex.bias.push_back(wts.bias[bank * f + r]);
            }
        }
        return {out, std::move(ex)};
    }

    // TBC: place the bank on the block diagonal of a dense c_o x (c_i*k*k) weight.
    ConvSpec out = spec;
    out.blocks = 1;
    const std::size_t block_cols = wts.w.cols();  // (c_i/B) * k * k
    ConvWeights ex{Tensor2(out.weight_rows(), out.weight_cols()), {}};
    for (std::size_t b = 0; b < spec.blocks; ++b) {
        for (std::size_t r = 0; r < f; ++r) {
            const auto src = wts.w.row(r);
            std::copy(src.begin(), src.end(), ex.w.row(b * f + r).begin() + static_cast<std::ptrdiff_t>(b * block_cols));
            if (spec.has_bias) ex.bias.push_back(wts.bias[r]);
        }
    }
    return {out, std::move(ex)};
}

TfcWeights expand_tfc_to_fc(std::size_t blocks, const TfcWeights& wts) {
    const std::size_t ro = wts.w.rows(), ci = wts.w.cols();
    check_tfc(ci * blocks, ro * blocks, blocks, wts);
    TfcWeights full{Tensor2(ro * blocks, ci * blocks), {}};
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t r = 0; r < ro; ++r) {
            for (std::size_t c = 0; c < ci; ++c) full.w.at(b * ro + r, b * ci + c) = wts.w.at(r, c);
            if (!wts.bias.empty()) full.bias.push_back(wts.bias[r]);
        }
    }
    return full;
}

}  // namespace tiedlab
