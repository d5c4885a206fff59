#pragma once

#include <span>
#include <vector>

#include "tiedlab/nn.hpp"
#include "tiedlab/tensor.hpp"

namespace tiedlab {

// Tied block convolution (TBC): the c_i input channels are cut into B equal
// blocks, every block is convolved with the same (c_o/B) x (c_i/B) x k x k bank,
// and block b fills output channels [b*c_o/B, (b+1)*c_o/B).

/// Per-block reference path: B separate convolutions with the shared bank.
Tensor4 tbc_forward_direct(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts);

/// Folds the blocks into the batch and runs a single thin convolution.
/// Bitwise equal to tbc_forward_direct.
Tensor4 tbc_forward_fast(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts);

/// Tied block group convolution: G groups, runs of B consecutive groups share a bank.
/// Also accepts G == 1 (then it is TBC with B blocks) and B == 1 (plain group conv).
Tensor4 tgc_forward(const Tensor4& x, const ConvSpec& spec, const TiedConvWeights& wts);

/// Tied block fully connected weights: one (c_o/B) x (c_i/B) matrix shared by every block.
struct TfcWeights {
    Tensor2 w;
    std::vector<double> bias;  // empty, or length c_o/B

    std::size_t param_count() const { return w.size() + bias.size(); }
};

void check_tfc(std::size_t c_i, std::size_t c_o, std::size_t blocks, const TfcWeights& wts);
TfcWeights init_tfc_weights(std::size_t c_i, std::size_t c_o, std::size_t blocks, bool has_bias, Rng& rng);

/// y = concat_b(W x_b + bias).
std::vector<double> tfc_forward(std::span<const double> x, std::size_t blocks, const TfcWeights& wts);
/// Row-wise TFC over an n x c_i matrix.
Tensor2 tfc_forward(const Tensor2& x, std::size_t blocks, const TfcWeights& wts);

/// Squeeze-and-excitation whose two dense layers are TFC layers:
/// c -> c/r -> c, both tied with B blocks.
struct TiedSeSpec {
    std::size_t c = 1;
    std::size_t r = 1;
    std::size_t blocks = 1;
    TfcWeights reduce;  // (c/r/B) x (c/B)
    TfcWeights expand;  // (c/B) x (c/r/B)

    std::size_t hidden() const { return c / r; }
    /// Requires c % (r*B) == 0 and weight shapes to match.
    void validate() const;
};

TiedSeSpec init_tied_se(std::size_t c, std::size_t r, std::size_t blocks, bool has_bias, Rng& rng);

/// y[n, ch] = x[n, ch] * s[n, ch].
Tensor4 scale_channels(const Tensor4& x, const Tensor2& s);

/// Excitation s = sigmoid(tfc2(relu(tfc1(pool(x))))), n x c.
Tensor2 tied_se_gate(const Tensor4& x, const TiedSeSpec& spec);
Tensor4 tied_se_forward(const Tensor4& x, const TiedSeSpec& spec);

struct ExpandedConv {
    ConvSpec spec;
    ConvWeights weights;
};

/// Untied equivalent of a tied conv. TBC (G == 1) expands to a dense conv whose
/// weight is zero off the block diagonal; TGC expands to a G-group conv with each
/// bank replicated over its tied set. Bias is replicated per copy.
ExpandedConv expand_tied_to_untied(const ConvSpec& spec, const TiedConvWeights& wts);

/// Block-diagonal c_o x c_i matrix (and replicated bias) equivalent to a TFC layer.
TfcWeights expand_tfc_to_fc(std::size_t blocks, const TfcWeights& wts);

}  // namespace tiedlab
