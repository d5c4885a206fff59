#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tiedlab/config.hpp"
#include "tiedlab/tensor.hpp"

namespace tiedlab {

struct ParamRef {
    std::string name;
    std::span<double> values;
};

struct ConstParamRef {
    std::string name;
    std::span<const double> values;
};

/// One gradient buffer per parameter tensor, in Model::parameters() order.
using Gradients = std::vector<std::vector<double>>;

struct LayerGrads {
    Tensor4 input;
    Gradients params;  // in the layer's parameter order
};

/// A built layer. forward/backward are const; only parameters() hands out mutable views.
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string_view kind() const = 0;
    virtual Shape4 out_shape(Shape4 in) const = 0;
    virtual Tensor4 forward(const Tensor4& x) const = 0;
    /// `x` is the input the layer saw in forward; recomputes whatever internals it needs.
    virtual LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const = 0;

    virtual void parameters(const std::string& prefix, std::vector<ParamRef>& out) = 0;
    std::size_t param_count() const;
};

/// Builds the layer for `node`, drawing initial weights from `rng`.
std::unique_ptr<Layer> make_layer(const LayerNode& node, Rng& rng);

class Model {
public:
    /// Validates the config (errors name the layer index) and initializes weights from cfg.seed.
    static Model build(const ModelConfig& cfg);

    const ModelConfig& config() const { return config_; }
    std::size_t num_layers() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    Tensor4 forward(const Tensor4& x) const;

    struct Trace {
        std::vector<Tensor4> inputs;  // input of every layer
        Tensor4 output;
    };
    Trace forward_trace(const Tensor4& x) const;
    /// Returns dL/dx for the model input plus parameter gradients.
    Gradients backward(const Trace& trace, const Tensor4& grad_out, Tensor4* grad_input = nullptr) const;

    std::vector<ParamRef> parameters();
    std::vector<ConstParamRef> parameters() const;
    std::size_t param_count() const;

    /// Flat copy of every parameter, in parameters() order.
    std::vector<double> snapshot() const;

    struct LayerSummary {
        std::string name;
        std::string kind;
        Shape4 out_shape;
        std::size_t params = 0;
    };
    std::vector<LayerSummary> summary(std::size_t batch = 1) const;

private:
    Model() = default;

    ModelConfig config_;
    std::vector<std::unique_ptr<Layer>> layers_;
};


}  // namespace tiedlab
