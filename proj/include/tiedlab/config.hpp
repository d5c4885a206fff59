#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tiedlab/nn.hpp"
#include "tiedlab/tensor.hpp"

namespace tiedlab {

/// A model config that does not describe a valid network. Carries the offending layer index.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::optional<std::size_t> layer, const std::string& what);
    std::optional<std::size_t> layer() const { return layer_; }

private:
    std::optional<std::size_t> layer_;
};

/// Malformed config document (bad JSON, unknown keys, wrong types).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NodeKind { conv, gconv, tbc, tgc, fc, tfc, tied_se, relu, gap, bottleneck, tied_bottleneck, flatten };

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> node_kind_from_string(std::string_view s);

/// One entry of a model's layer list. Only the fields relevant to `kind` are read.
struct LayerNode {
    NodeKind kind = NodeKind::relu;
    std::string name;  // optional display name

    std::size_t c_i = 0;  // conv family, fc, tfc, bottlenecks; channel count for tied_se
    std::size_t c_o = 0;
    std::size_t k = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t groups = 1;
    std::size_t blocks = 1;
    bool bias = true;

    std::size_t r = 16;         // tied_se, bottleneck SE
    std::size_t planes = 0;     // bottlenecks
    std::size_t expansion = 4;  // bottlenecks
    bool se = false;            // bottlenecks

    /// Conv spec of a conv-family node (conv, gconv, tbc, tgc).
    ConvSpec conv_spec() const;
    /// Local legality (divisibility, non-zero fields), independent of the input shape.
    void validate() const;

    friend bool operator==(const LayerNode&, const LayerNode&) = default;
};

struct ModelConfig {
    std::string name;
    std::size_t in_c = 1, in_h = 1, in_w = 1;
    std::size_t classes = 2;
    std::uint64_t seed = 0;
    std::vector<LayerNode> layers;

    Shape4 input_shape(std::size_t batch = 1) const { return {batch, in_c, in_h, in_w}; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Display name used in summaries and parameter names: the node's name or "L<index>".
std::string layer_display_name(const LayerNode& node, std::size_t index);

ModelConfig parse_config(std::string_view json_text);
ModelConfig load_config(const std::string& path);
std::string config_to_json(const ModelConfig& cfg);

/// Sub-layers of a bottleneck node, in execution order.
/// main: reduce (1x1) -> relu -> mid (3x3, TBC when tied) -> relu -> expand (1x1) -> [se]
/// shortcut: identity, or a 1x1 projection conv when channels or stride change.
/// Output: relu(main + shortcut).
struct BottleneckParts {
    LayerNode reduce;
    LayerNode mid;
    LayerNode expand;
    std::optional<LayerNode> se;
    std::optional<LayerNode> shortcut;
};

BottleneckParts bottleneck_parts(const LayerNode& node);

/// Convenience constructor for a (tied) bottleneck node.
LayerNode tied_bottleneck(std::size_t c_in, std::size_t planes, std::size_t blocks, std::size_t stride,
                          bool use_tied_se, std::size_t r = 4);

/// Output shape of `node` for input `in`; throws ShapeError or ValidationError.
Shape4 node_out_shape(const LayerNode& node, Shape4 in);

/// Validates every node and the shape chain; errors name the layer index.
/// Returns the output shape of each layer for the given batch size.
std::vector<Shape4> validate_config(const ModelConfig& cfg, std::size_t batch = 1);

/// Replaces conv -> tbc and fc -> tfc (and bottleneck -> tied_bottleneck) with `blocks`
/// wherever the channel counts permit it.
ModelConfig tied_twin(const ModelConfig& cfg, std::size_t blocks);

struct ModelPair {
    ModelConfig tied;
    ModelConfig untied;
};

/// Toy classifiers for 1x16x16 inputs and 2 classes:
///   conv 1->16 k3 p1, relu, conv 16->32 k2 s2, relu, conv 32->64 k2 s2, relu,
///   flatten, fc 1024->2.
/// The tied model swaps every conv/fc whose channels are divisible by B for tbc/tfc.
/// The 1-channel stem never qualifies, nor does the 2-class head when B = 4.
ModelPair make_toy_pair(std::size_t blocks);

}  // namespace tiedlab
