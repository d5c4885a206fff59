#include "tiedlab/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tiedlab {

using nlohmann::json;

namespace {

std::string sz(std::size_t v) { return std::to_string(v); }

std::string layer_label(std::size_t idx, const LayerNode& node) {
    return "layer " + sz(idx) + " (" + std::string(to_string(node.kind)) + ")";
}

}  // namespace

ValidationError::ValidationError(std::optional<std::size_t> layer, const std::string& what)
    : std::invalid_argument(what), layer_(layer) {}

std::string_view to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::conv: return "conv";
        case NodeKind::gconv: return "gconv";
        case NodeKind::tbc: return "tbc";
        case NodeKind::tgc: return "tgc";
        case NodeKind::fc: return "fc";
        case NodeKind::tfc: return "tfc";
        case NodeKind::tied_se: return "tied_se";
        case NodeKind::relu: return "relu";
        case NodeKind::gap: return "gap";
        case NodeKind::bottleneck: return "bottleneck";
        case NodeKind::tied_bottleneck: return "tied_bottleneck";
        case NodeKind::flatten: return "flatten";
    }
    return "unknown";
}

std::optional<NodeKind> node_kind_from_string(std::string_view s) {
    for (NodeKind k : {NodeKind::conv, NodeKind::gconv, NodeKind::tbc, NodeKind::tgc, NodeKind::fc, NodeKind::tfc,
                       NodeKind::tied_se, NodeKind::relu, NodeKind::gap, NodeKind::bottleneck,
                       NodeKind::tied_bottleneck, NodeKind::flatten}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

ConvSpec LayerNode::conv_spec() const {
    ConvSpec spec{c_i, c_o, k, stride, pad, 1, 1, bias};
    switch (kind) {
        case NodeKind::conv: break;
        case NodeKind::gconv: spec.groups = groups; break;
        case NodeKind::tbc: spec.blocks = blocks; break;
        case NodeKind::tgc:
            spec.groups = groups;
            spec.blocks = blocks;
            break;
        default:
            throw ValidationError(std::nullopt, std::string(to_string(kind)) + " is not a convolution");
    }
    return spec;
}

void LayerNode::validate() const {
    switch (kind) {
        case NodeKind::conv:
        case NodeKind::gconv:
        case NodeKind::tbc:
        case NodeKind::tgc:
            conv_spec().validate();
            if (kind == NodeKind::tgc && groups < 2) throw ShapeError("tgc: G must be >= 2");
            if (kind == NodeKind::gconv && groups < 2) throw ShapeError("gconv: G must be >= 2");
            break;
        case NodeKind::fc:
        case NodeKind::tfc: {
            const std::size_t b = kind == NodeKind::tfc ? blocks : 1;
            if (c_i == 0 || c_o == 0) throw ShapeError("fc: channel counts must be >= 1");
            if (b == 0 || c_i % b != 0 || c_o % b != 0) {
                throw ShapeError("tfc: c_i=" + sz(c_i) + " and c_o=" + sz(c_o) + " must be divisible by B=" + sz(b));
            }
            break;
        }
        case NodeKind::tied_se:
            if (c_i == 0 || r == 0 || blocks == 0 || c_i % (r * blocks) != 0) {
                throw ShapeError("tied_se: c=" + sz(c_i) + " must be divisible by r*B = " + sz(r) + "*" + sz(blocks));
            }
            break;
        case NodeKind::bottleneck:
        case NodeKind::tied_bottleneck: {
            if (c_i == 0 || planes == 0 || expansion == 0 || stride == 0) {
                throw ShapeError("bottleneck: c_i, planes, expansion and stride must be >= 1");
            }
            const BottleneckParts parts = bottleneck_parts(*this);
            parts.reduce.validate();
            parts.mid.validate();
            parts.expand.validate();
            if (parts.se) parts.se->validate();
            if (parts.shortcut) parts.shortcut->validate();
            break;
        }
        case NodeKind::relu:
        case NodeKind::gap:
        case NodeKind::flatten:
            break;
    }
}

std::string layer_display_name(const LayerNode& node, std::size_t index) {
    return node.name.empty() ? "L" + sz(index) : node.name;
}

BottleneckParts bottleneck_parts(const LayerNode& node) {
    if (node.kind != NodeKind::bottleneck && node.kind != NodeKind::tied_bottleneck) {
        throw ValidationError(std::nullopt, "bottleneck_parts: not a bottleneck node");
    }
    const bool tied = node.kind == NodeKind::tied_bottleneck;
    const std::size_t out_c = node.planes * node.expansion;

    auto conv = [&](std::size_t ci, std::size_t co, std::size_t k, std::size_t stride, std::size_t pad) {
        LayerNode n;
        n.kind = NodeKind::conv;
        n.c_i = ci;
        n.c_o = co;
        n.k = k;
        n.stride = stride;
        n.pad = pad;
        n.bias = node.bias;
        return n;
    };

    BottleneckParts p;
    p.reduce = conv(node.c_i, node.planes, 1, 1, 0);
    p.reduce.name = "reduce";
    p.mid = conv(node.planes, node.planes, 3, node.stride, 1);
    p.mid.name = "mid";
    if (tied) {
        p.mid.kind = NodeKind::tbc;
        p.mid.blocks = node.blocks;
    }
    p.expand = conv(node.planes, out_c, 1, 1, 0);
    p.expand.name = "expand";
    if (node.se) {
        LayerNode se;
        se.kind = NodeKind::tied_se;
        se.name = "se";
        se.c_i = out_c;
        se.r = node.r;
        se.blocks = tied ? node.blocks : 1;
        se.bias = node.bias;
        p.se = se;
    }
    if (node.c_i != out_c || node.stride != 1) {
        p.shortcut = conv(node.c_i, out_c, 1, node.stride, 0);
        p.shortcut->name = "shortcut";
    }
    return p;
}

LayerNode tied_bottleneck(std::size_t c_in, std::size_t planes, std::size_t blocks, std::size_t stride,
                          bool use_tied_se, std::size_t r) {
    LayerNode n;
    n.kind = NodeKind::tied_bottleneck;
    n.c_i = c_in;
    n.planes = planes;
    n.blocks = blocks;
    n.stride = stride;
    n.se = use_tied_se;
    n.r = r;
    if (blocks == 0 || planes % blocks != 0) {
        throw ValidationError(std::nullopt, "tied_bottleneck: planes=" + sz(planes) + " not divisible by B=" + sz(blocks));
    }
    n.validate();
    return n;
}

Shape4 node_out_shape(const LayerNode& node, Shape4 in) {
    node.validate();
    auto dense_input = [&](std::size_t want) {
        if (in.h != 1 || in.w != 1) {
            throw ShapeError("dense layer expects n x c x 1 x 1 input (add flatten or gap), got " + in.str());
        }
        if (in.c != want) throw ShapeError("input has " + sz(in.c) + " features, layer expects c_i=" + sz(want));
    };
    switch (node.kind) {
        case NodeKind::conv:
        case NodeKind::gconv:
        case NodeKind::tbc:
        case NodeKind::tgc:
            return node.conv_spec().out_shape(in);
        case NodeKind::fc:
        case NodeKind::tfc:
            dense_input(node.c_i);
            return {in.n, node.c_o, 1, 1};
        case NodeKind::tied_se:
            if (in.c != node.c_i) throw ShapeError("input has " + sz(in.c) + " channels, tied_se expects " + sz(node.c_i));
            return in;
        case NodeKind::relu:
            return in;
        case NodeKind::gap:
            return {in.n, in.c, 1, 1};
        case NodeKind::flatten:
            return {in.n, in.c * in.h * in.w, 1, 1};
        case NodeKind::bottleneck:
        case NodeKind::tied_bottleneck: {
            const BottleneckParts p = bottleneck_parts(node);
            Shape4 s = node_out_shape(p.reduce, in);
            s = node_out_shape(p.mid, s);
            s = node_out_shape(p.expand, s);
            if (p.shortcut) node_out_shape(*p.shortcut, in);
            return s;
        }
    }
    return in;
}

std::vector<Shape4> validate_config(const ModelConfig& cfg, std::size_t batch) {
    if (cfg.in_c == 0 || cfg.in_h == 0 || cfg.in_w == 0) {
        throw ValidationError(std::nullopt, "input shape must be positive");
    }
    std::vector<Shape4> shapes;
    Shape4 s = cfg.input_shape(batch);
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        try {
            s = node_out_shape(cfg.layers[i], s);
        } catch (const ShapeError& e) {
            throw ValidationError(i, layer_label(i, cfg.layers[i]) + ": " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(i, layer_label(i, cfg.layers[i]) + ": " + e.what());
        }
        shapes.push_back(s);
    }
    return shapes;
}

ModelConfig tied_twin(const ModelConfig& cfg, std::size_t blocks) {
    ModelConfig out = cfg;
    if (blocks <= 1) return out;
    for (LayerNode& n : out.layers) {
        const bool divisible = n.c_i % blocks == 0 && n.c_o % blocks == 0;
        if (n.kind == NodeKind::conv && divisible) {
            n.kind = NodeKind::tbc;
            n.blocks = blocks;
        } else if (n.kind == NodeKind::fc && divisible) {
            n.kind = NodeKind::tfc;
            n.blocks = blocks;
        } else if (n.kind == NodeKind::bottleneck && n.planes % blocks == 0) {
            n.kind = NodeKind::tied_bottleneck;
            n.blocks = blocks;
        }
    }
    return out;
}

ModelPair make_toy_pair(std::size_t blocks) {
    if (blocks != 1 && blocks != 2 && blocks != 4) {
        throw InputError("make_toy_pair: B must be 1, 2 or 4, got " + sz(blocks));
    }
    auto conv = [](std::size_t ci, std::size_t co, std::size_t k, std::size_t stride, std::size_t pad) {
        LayerNode n;
        n.kind = NodeKind::conv;
        n.c_i = ci;
        n.c_o = co;
        n.k = k;
        n.stride = stride;
        n.pad = pad;
        return n;
    };
    LayerNode relu;
    relu.kind = NodeKind::relu;
    LayerNode flatten;
    flatten.kind = NodeKind::flatten;
    LayerNode fc;
    fc.kind = NodeKind::fc;
    fc.c_i = 64 * 4 * 4;
    fc.c_o = 2;

    ModelConfig untied;
    untied.name = "toy_untied";
    untied.in_c = 1;
    untied.in_h = 16;
    untied.in_w = 16;
    untied.classes = 2;
    untied.seed = 1;
    untied.layers = {conv(1, 16, 3, 1, 1), relu, conv(16, 32, 2, 2, 0), relu, conv(32, 64, 2, 2, 0), relu, flatten, fc};

    ModelConfig tied = tied_twin(untied, blocks);
    tied.name = blocks == 1 ? untied.name : "toy_tied";
    return {tied, untied};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const std::map<NodeKind, std::set<std::string>>& allowed_keys() {
    static const std::map<NodeKind, std::set<std::string>> keys = [] {
        const std::set<std::string> conv{"kind", "name", "c_i", "c_o", "k", "stride", "pad", "bias"};
        std::map<NodeKind, std::set<std::string>> m;
        m[NodeKind::conv] = conv;
        auto with = [](std::set<std::string> s, std::initializer_list<const char*> extra) {
            for (const char* e : extra) s.insert(e);
            return s;
        };
        m[NodeKind::gconv] = with(conv, {"groups"});
        m[NodeKind::tbc] = with(conv, {"blocks"});
        m[NodeKind::tgc] = with(conv, {"groups", "blocks"});
        m[NodeKind::fc] = {"kind", "name", "c_i", "c_o", "bias"};
        m[NodeKind::tfc] = {"kind", "name", "c_i", "c_o", "blocks", "bias"};
        m[NodeKind::tied_se] = {"kind", "name", "c", "r", "blocks", "bias"};
        m[NodeKind::relu] = {"kind", "name"};
        m[NodeKind::gap] = {"kind", "name"};
        m[NodeKind::flatten] = {"kind", "name"};
        m[NodeKind::bottleneck] = {"kind", "name", "c_i", "planes", "stride", "se", "r", "expansion", "bias"};
        m[NodeKind::tied_bottleneck] = with(m[NodeKind::bottleneck], {"blocks"});
        return m;
    }();
    return keys;
}

const std::map<NodeKind, std::set<std::string>>& required_keys() {
    static const std::map<NodeKind, std::set<std::string>> keys{
        {NodeKind::conv, {"c_i", "c_o", "k"}},
        {NodeKind::gconv, {"c_i", "c_o", "k", "groups"}},
        {NodeKind::tbc, {"c_i", "c_o", "k", "blocks"}},
        {NodeKind::tgc, {"c_i", "c_o", "k", "groups", "blocks"}},
        {NodeKind::fc, {"c_i", "c_o"}},
        {NodeKind::tfc, {"c_i", "c_o", "blocks"}},
        {NodeKind::tied_se, {"c", "r"}},
        {NodeKind::relu, {}},
        {NodeKind::gap, {}},
        {NodeKind::flatten, {}},
        {NodeKind::bottleneck, {"c_i", "planes"}},
        {NodeKind::tied_bottleneck, {"c_i", "planes", "blocks"}},
    };
    return keys;
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& where) {
    const json& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ParseError(where + ": \"" + key + "\" must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& where) {
    const json& v = obj.at(key);
    if (!v.is_boolean()) throw ParseError(where + ": \"" + key + "\" must be true or false");
    return v.get<bool>();
}

LayerNode parse_layer(const json& j, std::size_t idx) {
    const std::string where = "layers[" + sz(idx) + "]";
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    if (!j.contains("kind") || !j["kind"].is_string()) throw ParseError(where + ": missing string \"kind\"");
    const std::string kind_str = j["kind"].get<std::string>();
    const auto kind = node_kind_from_string(kind_str);
    if (!kind) throw ParseError(where + ": unknown kind \"" + kind_str + "\"");

    const auto& allowed = allowed_keys().at(*kind);
    for (const auto& [key, _] : j.items()) {
        if (!allowed.contains(key)) throw ParseError(where + ": unknown key \"" + key + "\" for kind " + kind_str);
    }
    for (const std::string& key : required_keys().at(*kind)) {
        if (!j.contains(key)) throw ParseError(where + ": missing required key \"" + key + "\"");
    }

    LayerNode n;
    n.kind = *kind;
    if (j.contains("name")) {
        if (!j["name"].is_string()) throw ParseError(where + ": \"name\" must be a string");
        n.name = j["name"].get<std::string>();
    }
    auto count = [&](const char* key, std::size_t& dst) {
        if (j.contains(key)) dst = get_count(j, key, where);
    };
    count("c_i", n.c_i);
    count("c", n.c_i);
    count("c_o", n.c_o);
    count("k", n.k);
    count("stride", n.stride);
    count("pad", n.pad);
    count("groups", n.groups);
    count("blocks", n.blocks);
    count("r", n.r);
    count("planes", n.planes);
    count("expansion", n.expansion);
    if (j.contains("bias")) n.bias = get_bool(j, "bias", where);
    if (j.contains("se")) n.se = get_bool(j, "se", where);
    return n;
}

}  // namespace

ModelConfig parse_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError("JSON parse error at byte " + sz(e.byte) + ": " + e.what());
    }
    if (!doc.is_object()) throw ParseError("config: top level must be an object");
    static const std::set<std::string> top{"name", "input", "classes", "seed", "layers"};
    for (const auto& [key, _] : doc.items()) {
        if (!top.contains(key)) throw ParseError("config: unknown key \"" + key + "\"");
    }
    for (const char* key : {"input", "layers"}) {
        if (!doc.contains(key)) throw ParseError(std::string("config: missing required key \"") + key + "\"");
    }

    ModelConfig cfg;
    if (doc.contains("name")) {
        if (!doc["name"].is_string()) throw ParseError("config: \"name\" must be a string");
        cfg.name = doc["name"].get<std::string>();
    }
    const json& input = doc["input"];
    if (!input.is_array() || input.size() != 3) throw ParseError("config: \"input\" must be [c, h, w]");
    for (const json& v : input) {
        if (!v.is_number_integer() || v.get<long long>() <= 0) {
            throw ParseError("config: \"input\" entries must be positive integers");
        }
    }
    cfg.in_c = input[0].get<std::size_t>();
    cfg.in_h = input[1].get<std::size_t>();
    cfg.in_w = input[2].get<std::size_t>();
    if (doc.contains("classes")) cfg.classes = get_count(doc, "classes", "config");
    if (doc.contains("seed")) cfg.seed = doc["seed"].is_number_unsigned() ? doc["seed"].get<std::uint64_t>()
                                                                           : get_count(doc, "seed", "config");
    const json& layers = doc["layers"];
    if (!layers.is_array()) throw ParseError("config: \"layers\" must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) cfg.layers.push_back(parse_layer(layers[i], i));
    return cfg;
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ModelConfig& cfg) {
    json doc;
    doc["name"] = cfg.name;
    doc["input"] = {cfg.in_c, cfg.in_h, cfg.in_w};
    doc["classes"] = cfg.classes;
    doc["seed"] = cfg.seed;
    doc["layers"] = json::array();
    for (const LayerNode& n : cfg.layers) {
        json j;
        j["kind"] = std::string(to_string(n.kind));
        if (!n.name.empty()) j["name"] = n.name;
        switch (n.kind) {
            case NodeKind::conv:
            case NodeKind::gconv:
            case NodeKind::tbc:
            case NodeKind::tgc:
                j["c_i"] = n.c_i;
                j["c_o"] = n.c_o;
                j["k"] = n.k;
                j["stride"] = n.stride;
                j["pad"] = n.pad;
                if (n.kind == NodeKind::gconv || n.kind == NodeKind::tgc) j["groups"] = n.groups;
                if (n.kind == NodeKind::tbc || n.kind == NodeKind::tgc) j["blocks"] = n.blocks;
                j["bias"] = n.bias;
                break;
            case NodeKind::fc:
            case NodeKind::tfc:
                j["c_i"] = n.c_i;
                j["c_o"] = n.c_o;
                if (n.kind == NodeKind::tfc) j["blocks"] = n.blocks;
                j["bias"] = n.bias;
                break;
            case NodeKind::tied_se:
                j["c"] = n.c_i;
                j["r"] = n.r;
                j["blocks"] = n.blocks;
                j["bias"] = n.bias;
                break;
            case NodeKind::bottleneck:
            case NodeKind::tied_bottleneck:
                j["c_i"] = n.c_i;
                j["planes"] = n.planes;
                j["stride"] = n.stride;
                if (n.kind == NodeKind::tied_bottleneck) j["blocks"] = n.blocks;
                j["se"] = n.se;
                j["r"] = n.r;
                j["expansion"] = n.expansion;
                j["bias"] = n.bias;
                break;
            case NodeKind::relu:
            case NodeKind::gap:
            case NodeKind::flatten:
                break;
        }
        doc["layers"].push_back(j);
    }
    return doc.dump(2);
}

}  // namespace tiedlab
