#pragma once

#include <span>
#include <vector>

#include "tiedlab/tensor.hpp"

namespace tiedlab {

/// A (possibly grouped, possibly tied) square-kernel convolution.
///
/// Input channels are partitioned into `partitions()` equal channel groups.
/// Untied group convolution gives every group its own bank; tying makes runs
/// of B consecutive groups share one bank. TBC is the G == 1 case, where the
/// B blocks themselves are the partitions and all of them share a single bank.
struct ConvSpec {
    std::size_t c_i = 1;
    std::size_t c_o = 1;
    std::size_t k = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t groups = 1;
    std::size_t blocks = 1;
    bool has_bias = false;

    /// Throws ShapeError naming the violated rule.
    void validate() const;

    bool tied() const { return blocks > 1; }
    /// Number of channel partitions the input is cut into: G, or B for TBC.
    std::size_t partitions() const { return groups > 1 ? groups : blocks; }
    /// Number of distinct filter banks.
    std::size_t banks() const { return partitions() / blocks; }
    /// Filters per bank.
    std::size_t filters_per_bank() const { return c_o / partitions(); }
    /// Rows of the stored weight matrix (all banks stacked) == length of the bias.
    std::size_t weight_rows() const { return banks() * filters_per_bank(); }
    /// Columns of the stored weight matrix: in-channels-per-filter * k * k.
    std::size_t weight_cols() const { return (c_i / partitions()) * k * k; }

    Shape4 out_shape(Shape4 in) const;
};

/// Filter banks stacked row-wise: rows [b*f, (b+1)*f) are bank b, f = filters_per_bank().
/// Columns follow im2col row order (channel, kernel row, kernel col).
/// `bias` is empty when the spec has no bias, else one entry per weight row.
struct ConvWeights {
    Tensor2 w;
    std::vector<double> bias;

    std::size_t param_count() const { return w.size() + bias.size(); }
};

/// Tied banks share the ConvWeights layout; only the interpretation of rows differs.
using TiedConvWeights = ConvWeights;

/// Checks weight/bias dimensions against the spec.
void check_weights(const ConvSpec& spec, const ConvWeights& wts);

/// Uniform init in [-a, a], a = sqrt(1 / fan_in), fan_in = weight_cols().
ConvWeights init_conv_weights(const ConvSpec& spec, Rng& rng);

/// Plain convolution on a single bank: im2col + matmul + bias.
/// `bank` is (c_o x c_i*k*k), `bias` empty or length c_o.
Tensor4 conv2d_bank(const Tensor4& x, const Tensor2& bank, std::span<const double> bias, std::size_t k,
                    std::size_t stride, std::size_t pad);

/// Standard convolution; requires groups == blocks == 1.
Tensor4 conv2d(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts);

/// Group convolution; requires blocks == 1. Each group runs through conv2d_bank
/// with its own rows of the weight matrix and outputs are concatenated.
Tensor4 group_conv2d(const Tensor4& x, const ConvSpec& spec, const ConvWeights& wts);

/// y = W x + bias for a single vector. W is c_o x c_i; bias empty or length c_o.
std::vector<double> fully_connected(std::span<const double> x, const Tensor2& w, std::span<const double> bias);

/// Row-wise fully connected layer: Y = X W^T + bias, X is n x c_i.
Tensor2 linear(const Tensor2& x, const Tensor2& w, std::span<const double> bias);

/// Per-sample, per-channel spatial mean, n x c.
Tensor2 global_avg_pool(const Tensor4& x);

Tensor4 relu(const Tensor4& x);
Tensor2 relu(const Tensor2& x);
Tensor4 sigmoid(const Tensor4& x);
Tensor2 sigmoid(const Tensor2& x);
double sigmoid(double v);

struct LossAndGrad {
    double loss = 0.0;
    Tensor2 grad;
};

/// Mean softmax cross-entropy over rows; grad = (softmax - onehot) / n.
LossAndGrad softmax_cross_entropy(const Tensor2& logits, std::span<const std::size_t> labels);

/// Tensor4 <-> Tensor2 views used between spatial and dense layers.
Tensor2 as_matrix(const Tensor4& x);           // n x (c*h*w)
Tensor4 as_tensor4(const Tensor2& x);          // n x cols x 1 x 1

}  // namespace tiedlab
