#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tiedlab/nn.hpp"
#include "tiedlab/tied.hpp"

namespace tiedlab {

// Vector-Jacobian products. Each *_backward takes the forward inputs and the
// gradient of the output and returns gradients w.r.t. every input and parameter.
// Tied parameters receive the sum of the gradients of all copies that use them.

struct ConvGrads {
    Tensor4 input;
    Tensor2 weight;
    std::vector<double> bias;  // empty when the layer has no bias
};

ConvGrads conv2d_bank_backward(const Tensor4& x, const Tensor2& bank, bool has_bias, std::size_t k,
                               std::size_t stride, std::size_t pad, const Tensor4& grad_out);
ConvGrads conv2d_backward(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts, const Tensor4& grad_out);
ConvGrads group_conv2d_backward(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts,
                                const Tensor4& grad_out);
/// Runs on the block-folded batch, so the bank gradient sums over blocks and samples together.
ConvGrads tbc_backward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts, const Tensor4& grad_out);
ConvGrads tgc_backward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts, const Tensor4& grad_out);

struct DenseGrads {
    Tensor2 input;
    Tensor2 weight;
    std::vector<double> bias;
};

DenseGrads linear_backward(const Tensor2& x, const Tensor2& w, bool has_bias, const Tensor2& grad_out);
DenseGrads tfc_backward(const Tensor2& x, std::size_t blocks, const TfcWeights& wts, const Tensor2& grad_out);

struct TiedSeGrads {
    Tensor4 input;
    TfcWeights reduce;
    TfcWeights expand;
};

TiedSeGrads tied_se_backward(const Tensor4& x, const TiedSeSpec& spec, const Tensor4& grad_out);

/// Gradient at exactly 0 is 0.
Tensor4 relu_backward(const Tensor4& x, const Tensor4& grad_out);
Tensor2 relu_backward(const Tensor2& x, const Tensor2& grad_out);
Tensor4 sigmoid_backward(const Tensor4& x, const Tensor4& grad_out);
Tensor2 sigmoid_backward(const Tensor2& x, const Tensor2& grad_out);
Tensor4 global_avg_pool_backward(Shape4 input_shape, const Tensor2& grad_out);

// Finite-difference gradient checking.

enum class LayerKind {
    conv2d,
    group_conv2d,
    tbc,
    tgc,
    fc,
    tfc,
    tied_se,
    relu,
    sigmoid,
    global_avg_pool,
    softmax_cross_entropy,
};

std::string_view to_string(LayerKind kind);
const std::vector<LayerKind>& all_layer_kinds();

struct GradCheckOptions {
    double epsilon = 1e-3;
    double tolerance = 1e-4;
    std::size_t max_coords = 64;
};

struct GradReport {
    std::string op;
    std::string param;
    double max_rel_error = 0.0;
    bool pass = false;
    double epsilon = 0.0;
    std::size_t coords_checked = 0;
};

struct GradCheckResult {
    std::string instance;  // reproducible description of the random instance
    std::vector<GradReport> reports;

    bool pass() const;
    double max_rel_error() const;
};

/// |a - f| / max(1e-8, |a| + |f|).
double grad_rel_error(double analytic, double numeric);

/// Random instance of `kind` drawn from `seed`; checks input, weight and bias gradients
/// of L = <g, f(x)> (or the loss itself for softmax_cross_entropy) by central differences.
GradCheckResult gradcheck(LayerKind kind, std::uint64_t seed, const GradCheckOptions& opts = {});

/// Gradcheck of a conv-family layer with a caller-chosen spec and input shape.
/// `kind` selects the code path: conv2d, group_conv2d, tbc or tgc.
GradCheckResult gradcheck_conv(LayerKind kind, const ConvSpec& spec, Shape4 input, std::uint64_t seed,
                               const GradCheckOptions& opts = {});

}  // namespace tiedlab
