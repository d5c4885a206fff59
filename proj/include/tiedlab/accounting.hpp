#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tiedlab/config.hpp"
#include "tiedlab/nn.hpp"

namespace tiedlab {

// Parameter and multiply-accumulate counts. Weights of a conv-family layer
// number k^2 * c_i * c_o / (P * B) where P is the number of channel partitions
// (G, or B for TBC): standard k^2 c_i c_o, GC / G, TBC / B^2, TGC / (G*B).
// Bias adds c_o / B when present. MACs are k^2 * (c_i / P) * c_o * H' * W' * n;
// tying never changes compute, only storage.

std::uint64_t conv_weight_count(const ConvSpec& spec);
std::uint64_t param_count(const ConvSpec& spec);
std::uint64_t macs_count(const ConvSpec& spec, Shape4 input);

std::uint64_t fc_weight_count(std::size_t c_i, std::size_t c_o, std::size_t blocks = 1);
std::uint64_t fc_param_count(std::size_t c_i, std::size_t c_o, std::size_t blocks, bool has_bias);
std::uint64_t fc_macs(std::size_t c_i, std::size_t c_o, std::size_t blocks, std::size_t batch);

/// Both dense layers of an SE / TiedSE block; pooling, activations and scaling excluded.
std::uint64_t se_param_count(std::size_t c, std::size_t r, std::size_t blocks, bool has_bias);
std::uint64_t se_macs(std::size_t c, std::size_t r, std::size_t blocks, std::size_t batch);

/// Parameter count of a layer node (bottlenecks sum their parts).
std::uint64_t param_count(const LayerNode& node);
std::uint64_t macs_count(const LayerNode& node, Shape4 input);

struct CountRow {
    std::string name;
    std::string kind;
    std::uint64_t params = 0;
    std::uint64_t macs = 0;
    Shape4 out_shape;
};

struct RatioRow {
    std::optional<double> params;  // tied / baseline, absent when the baseline count is 0
    std::optional<double> macs;
};

struct CountReport {
    std::vector<CountRow> rows;
    std::uint64_t total_params = 0;
    std::uint64_t total_macs = 0;
    Shape4 output;  // shape after the last layer (the input shape for an empty model)

    bool has_baseline = false;
    std::vector<RatioRow> ratios;  // one per row when has_baseline
    RatioRow total_ratio;
    std::uint64_t baseline_params = 0;
    std::uint64_t baseline_macs = 0;

    /// Columns: name,kind,params,macs,out_shape (+ param_ratio,mac_ratio with a baseline).
    /// `flops` doubles the MAC column and renames it.
    std::string to_csv(bool flops = false) const;
    std::string to_text(bool flops = false) const;
};

/// Per-layer counts for `cfg` on `input`; with a baseline of the same depth, adds ratio rows.
CountReport model_report(const ModelConfig& cfg, Shape4 input, const ModelConfig* baseline = nullptr);

}  // namespace tiedlab
