#include "tiedlab/model.hpp"

#include <optional>

#include "tiedlab/autograd.hpp"
#include "tiedlab/nn.hpp"
#include "tiedlab/tied.hpp"

namespace tiedlab {

std::size_t Layer::param_count() const {
    std::vector<ParamRef> refs;
    const_cast<Layer*>(this)->parameters("", refs);
    std::size_t n = 0;
    for (const ParamRef& r : refs) n += r.values.size();
    return n;
}

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

void add_into(Tensor4& dst, const Tensor4& src) {
    if (dst.shape() != src.shape()) throw ShapeError("residual add: " + dst.shape().str() + " vs " + src.shape().str());
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

class ConvLayer final : public Layer {
public:
    ConvLayer(const LayerNode& node, Rng& rng)
        : kind_(node.kind), spec_(node.conv_spec()), wts_(init_conv_weights(spec_, rng)) {}

    std::string_view kind() const override { return to_string(kind_); }
    Shape4 out_shape(Shape4 in) const override { return spec_.out_shape(in); }

    Tensor4 forward(const Tensor4& x) const override {
        switch (kind_) {
            case NodeKind::conv: return conv2d(x, spec_, wts_);
            case NodeKind::gconv: return group_conv2d(x, spec_, wts_);
            case NodeKind::tbc: return tbc_forward_fast(x, spec_, wts_);
            default: return tgc_forward(x, spec_, wts_);
        }
    }

    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        ConvGrads g;
        switch (kind_) {
            case NodeKind::conv: g = conv2d_backward(x, spec_, wts_, grad_out); break;
            case NodeKind::gconv: g = group_conv2d_backward(x, spec_, wts_, grad_out); break;
            case NodeKind::tbc: g = tbc_backward(x, spec_, wts_, grad_out); break;
            default: g = tgc_backward(x, spec_, wts_, grad_out); break;
        }
        LayerGrads out{std::move(g.input), {to_vec(g.weight.data())}};
        if (spec_.has_bias) out.params.push_back(std::move(g.bias));
        return out;
    }

    void parameters(const std::string& prefix, std::vector<ParamRef>& out) override {
        out.push_back({prefix + "weight", wts_.w.data()});
        if (spec_.has_bias) out.push_back({prefix + "bias", wts_.bias});
    }

private:
    NodeKind kind_;
    ConvSpec spec_;
    ConvWeights wts_;
};

class DenseLayer final : public Layer {
public:
    DenseLayer(const LayerNode& node, Rng& rng)
        : tied_(node.kind == NodeKind::tfc),
          blocks_(tied_ ? node.blocks : 1),
          c_i_(node.c_i),
          c_o_(node.c_o),
          wts_(init_tfc_weights(node.c_i, node.c_o, blocks_, node.bias, rng)) {}

    std::string_view kind() const override { return tied_ ? "tfc" : "fc"; }

    Shape4 out_shape(Shape4 in) const override {
        if (in.h != 1 || in.w != 1 || in.c != c_i_) {
            throw ShapeError(std::string(kind()) + ": expects n x " + std::to_string(c_i_) + " x 1 x 1, got " + in.str());
        }
        return {in.n, c_o_, 1, 1};
    }

    Tensor4 forward(const Tensor4& x) const override {
        out_shape(x.shape());
        const Tensor2 in = as_matrix(x);
        return as_tensor4(tied_ ? tfc_forward(in, blocks_, wts_) : linear(in, wts_.w, wts_.bias));
    }

    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        const Tensor2 in = as_matrix(x);
        const Tensor2 gy = as_matrix(grad_out);
        DenseGrads g = tied_ ? tfc_backward(in, blocks_, wts_, gy) : linear_backward(in, wts_.w, !wts_.bias.empty(), gy);
        LayerGrads out{Tensor4(x.shape(), g.input.vec()), {to_vec(g.weight.data())}};
        if (!wts_.bias.empty()) out.params.push_back(std::move(g.bias));
        return out;
    }

    void parameters(const std::string& prefix, std::vector<ParamRef>& out) override {
        out.push_back({prefix + "weight", wts_.w.data()});
        if (!wts_.bias.empty()) out.push_back({prefix + "bias", wts_.bias});
    }

private:
    bool tied_;
    std::size_t blocks_, c_i_, c_o_;
    TfcWeights wts_;
};

class TiedSeLayer final : public Layer {
public:
    TiedSeLayer(const LayerNode& node, Rng& rng) : se_(init_tied_se(node.c_i, node.r, node.blocks, node.bias, rng)) {}

    std::string_view kind() const override { return "tied_se"; }
    Shape4 out_shape(Shape4 in) const override {
        if (in.c != se_.c) throw ShapeError("tied_se: channel mismatch, got " + in.str());
        return in;
    }
    Tensor4 forward(const Tensor4& x) const override { return tied_se_forward(x, se_); }

    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        TiedSeGrads g = tied_se_backward(x, se_, grad_out);
        LayerGrads out{std::move(g.input), {}};
        out.params.push_back(to_vec(g.reduce.w.data()));
        if (!se_.reduce.bias.empty()) out.params.push_back(std::move(g.reduce.bias));
        out.params.push_back(to_vec(g.expand.w.data()));
        if (!se_.expand.bias.empty()) out.params.push_back(std::move(g.expand.bias));
        return out;
    }

    void parameters(const std::string& prefix, std::vector<ParamRef>& out) override {
        out.push_back({prefix + "reduce.weight", se_.reduce.w.data()});
        if (!se_.reduce.bias.empty()) out.push_back({prefix + "reduce.bias", se_.reduce.bias});
        out.push_back({prefix + "expand.weight", se_.expand.w.data()});
        if (!se_.expand.bias.empty()) out.push_back({prefix + "expand.bias", se_.expand.bias});
    }

private:
    TiedSeSpec se_;
};

class ReluLayer final : public Layer {
public:
    std::string_view kind() const override { return "relu"; }
    Shape4 out_shape(Shape4 in) const override { return in; }
    Tensor4 forward(const Tensor4& x) const override { return relu(x); }
    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        return {relu_backward(x, grad_out), {}};
    }
    void parameters(const std::string&, std::vector<ParamRef>&) override {}
};

class GapLayer final : public Layer {
public:
    std::string_view kind() const override { return "gap"; }
    Shape4 out_shape(Shape4 in) const override { return {in.n, in.c, 1, 1}; }
    Tensor4 forward(const Tensor4& x) const override { return as_tensor4(global_avg_pool(x)); }
    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        return {global_avg_pool_backward(x.shape(), as_matrix(grad_out)), {}};
    }
    void parameters(const std::string&, std::vector<ParamRef>&) override {}
};

class FlattenLayer final : public Layer {
public:
    std::string_view kind() const override { return "flatten"; }
    Shape4 out_shape(Shape4 in) const override { return {in.n, in.c * in.h * in.w, 1, 1}; }
    Tensor4 forward(const Tensor4& x) const override { return x.reshaped(out_shape(x.shape())); }
    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        return {grad_out.reshaped(x.shape()), {}};
    }
    void parameters(const std::string&, std::vector<ParamRef>&) override {}
};

class BottleneckLayer final : public Layer {
public:
    BottleneckLayer(const LayerNode& node, Rng& rng) : kind_(node.kind) {
        const BottleneckParts p = bottleneck_parts(node);
        reduce_ = std::make_unique<ConvLayer>(p.reduce, rng);
        mid_ = std::make_unique<ConvLayer>(p.mid, rng);
        expand_ = std::make_unique<ConvLayer>(p.expand, rng);
        if (p.se) se_ = std::make_unique<TiedSeLayer>(*p.se, rng);
        if (p.shortcut) shortcut_ = std::make_unique<ConvLayer>(*p.shortcut, rng);
    }

    std::string_view kind() const override { return to_string(kind_); }

    Shape4 out_shape(Shape4 in) const override {
        const Shape4 s = expand_->out_shape(mid_->out_shape(reduce_->out_shape(in)));
        if ((shortcut_ ? shortcut_->out_shape(in) : in) != s) throw ShapeError("bottleneck: shortcut shape mismatch");
        return s;
    }

    Tensor4 forward(const Tensor4& x) const override { return relu(run(x).sum); }

    LayerGrads backward(const Tensor4& x, const Tensor4& grad_out) const override {
        const Pass f = run(x);
        const Tensor4 g_sum = relu_backward(f.sum, grad_out);

        LayerGrads se_g{g_sum, {}};
        if (se_) se_g = se_->backward(f.expanded, g_sum);
        LayerGrads ex_g = expand_->backward(f.mid_act, se_g.input);
        LayerGrads mid_g = mid_->backward(f.reduced_act, relu_backward(f.mid, ex_g.input));
        LayerGrads red_g = reduce_->backward(x, relu_backward(f.reduced, mid_g.input));

        LayerGrads out{std::move(red_g.input), {}};
        std::optional<LayerGrads> sc_g;
        if (shortcut_) {
            sc_g = shortcut_->backward(x, g_sum);
            add_into(out.input, sc_g->input);
        } else {
            add_into(out.input, g_sum);
        }
        for (Gradients* part : {&red_g.params, &mid_g.params, &ex_g.params, &se_g.params}) {
            for (auto& g : *part) out.params.push_back(std::move(g));
        }
        if (sc_g) for (auto& g : sc_g->params) out.params.push_back(std::move(g));
        return out;
    }

    void parameters(const std::string& prefix, std::vector<ParamRef>& out) override {
        reduce_->parameters(prefix + "reduce.", out);
        mid_->parameters(prefix + "mid.", out);
        expand_->parameters(prefix + "expand.", out);
        if (se_) se_->parameters(prefix + "se.", out);
        if (shortcut_) shortcut_->parameters(prefix + "shortcut.", out);
    }

private:
    struct Pass {
        Tensor4 reduced, reduced_act, mid, mid_act, expanded, sum;
    };

    Pass run(const Tensor4& x) const {
        Pass p;
        p.reduced = reduce_->forward(x);
        p.reduced_act = relu(p.reduced);
        p.mid = mid_->forward(p.reduced_act);
        p.mid_act = relu(p.mid);
        p.expanded = expand_->forward(p.mid_act);
        p.sum = se_ ? se_->forward(p.expanded) : p.expanded;
        add_into(p.sum, shortcut_ ? shortcut_->forward(x) : x);
        return p;
    }

    NodeKind kind_;
    std::unique_ptr<Layer> reduce_, mid_, expand_, se_, shortcut_;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerNode& node, Rng& rng) {
    node.validate();
    switch (node.kind) {
        case NodeKind::conv:
        case NodeKind::gconv:
        case NodeKind::tbc:
        case NodeKind::tgc:
            return std::make_unique<ConvLayer>(node, rng);
        case NodeKind::fc:
        case NodeKind::tfc:
            return std::make_unique<DenseLayer>(node, rng);
        case NodeKind::tied_se:
            return std::make_unique<TiedSeLayer>(node, rng);
        case NodeKind::relu:
            return std::make_unique<ReluLayer>();
        case NodeKind::gap:
            return std::make_unique<GapLayer>();
        case NodeKind::flatten:
            return std::make_unique<FlattenLayer>();
        case NodeKind::bottleneck:
        case NodeKind::tied_bottleneck:
            return std::make_unique<BottleneckLayer>(node, rng);
    }
    throw ValidationError(std::nullopt, "unknown layer kind");
}

Model Model::build(const ModelConfig& cfg) {
    validate_config(cfg);
    Model m;
    m.config_ = cfg;
    Rng rng(cfg.seed);
    for (const LayerNode& node : cfg.layers) m.layers_.push_back(make_layer(node, rng));
    return m;
}

Tensor4 Model::forward(const Tensor4& x) const {
    Tensor4 cur = x;
    for (const auto& layer : layers_) cur = layer->forward(cur);
    return cur;
}

Model::Trace Model::forward_trace(const Tensor4& x) const {
    Trace t;
    t.inputs.reserve(layers_.size());
    Tensor4 cur = x;
    for (const auto& layer : layers_) {
        t.inputs.push_back(cur);
        cur = layer->forward(cur);
    }
    t.output = std::move(cur);
    return t;
}

Gradients Model::backward(const Trace& trace, const Tensor4& grad_out, Tensor4* grad_input) const {
    if (trace.inputs.size() != layers_.size()) throw ShapeError("Model::backward: trace does not match model");
    if (grad_out.shape() != trace.output.shape()) {
        throw ShapeError("Model::backward: grad_out " + grad_out.shape().str() + " != output " +
                         trace.output.shape().str());
    }
    std::vector<Gradients> per_layer(layers_.size());
    Tensor4 g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        LayerGrads lg = layers_[i]->backward(trace.inputs[i], g);
        per_layer[i] = std::move(lg.params);
        g = std::move(lg.input);
    }
    if (grad_input) *grad_input = std::move(g);
    Gradients out;
    for (Gradients& lg : per_layer)
        for (auto& p : lg) out.push_back(std::move(p));
    return out;
}

std::vector<ParamRef> Model::parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->parameters(layer_display_name(config_.layers[i], i) + ".", out);
    }
    return out;
}

std::vector<ConstParamRef> Model::parameters() const {
    std::vector<ConstParamRef> out;
    for (const ParamRef& p : const_cast<Model*>(this)->parameters()) out.push_back({p.name, p.values});
    return out;
}

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->param_count();
    return n;
}

std::vector<double> Model::snapshot() const {
    std::vector<double> out;
    for (const ConstParamRef& p : parameters()) out.insert(out.end(), p.values.begin(), p.values.end());
    return out;
}

std::vector<Model::LayerSummary> Model::summary(std::size_t batch) const {
    std::vector<LayerSummary> out;
    Shape4 s = config_.input_shape(batch);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        s = layers_[i]->out_shape(s);
        out.push_back({layer_display_name(config_.layers[i], i), std::string(layers_[i]->kind()), s,
                       layers_[i]->param_count()});
    }
    return out;
}

}  // namespace tiedlab
