#include "tiedlab/accounting.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace tiedlab {

std::uint64_t conv_weight_count(const ConvSpec& spec) {
    spec.validate();
    return static_cast<std::uint64_t>(spec.weight_rows()) * spec.weight_cols();
}

std::uint64_t param_count(const ConvSpec& spec) {
    return conv_weight_count(spec) + (spec.has_bias ? spec.weight_rows() : 0);
}

std::uint64_t macs_count(const ConvSpec& spec, Shape4 input) {
    spec.validate();
    const Shape4 out = spec.out_shape(input);
    const std::uint64_t per_output = static_cast<std::uint64_t>(spec.k) * spec.k * (spec.c_i / spec.partitions());
    return per_output * out.c * out.h * out.w * out.n;
}

namespace {

void check_blocks(std::size_t c_i, std::size_t c_o, std::size_t blocks) {
    if (blocks == 0 || c_i % blocks != 0 || c_o % blocks != 0) {
        throw ShapeError("fc: c_i=" + std::to_string(c_i) + " and c_o=" + std::to_string(c_o) +
                         " must be divisible by B=" + std::to_string(blocks));
    }
}

}  // namespace

std::uint64_t fc_weight_count(std::size_t c_i, std::size_t c_o, std::size_t blocks) {
    check_blocks(c_i, c_o, blocks);
    return static_cast<std::uint64_t>(c_i / blocks) * (c_o / blocks);
}

std::uint64_t fc_param_count(std::size_t c_i, std::size_t c_o, std::size_t blocks, bool has_bias) {
    return fc_weight_count(c_i, c_o, blocks) + (has_bias ? c_o / blocks : 0);
}

std::uint64_t fc_macs(std::size_t c_i, std::size_t c_o, std::size_t blocks, std::size_t batch) {
    return fc_weight_count(c_i, c_o, blocks) * blocks * batch;
}

std::uint64_t se_param_count(std::size_t c, std::size_t r, std::size_t blocks, bool has_bias) {
    if (r == 0 || blocks == 0 || c % (r * blocks) != 0) {
        throw ShapeError("se: c=" + std::to_string(c) + " must be divisible by r*B");
    }
    return fc_param_count(c, c / r, blocks, has_bias) + fc_param_count(c / r, c, blocks, has_bias);
}

std::uint64_t se_macs(std::size_t c, std::size_t r, std::size_t blocks, std::size_t batch) {
    if (r == 0 || blocks == 0 || c % (r * blocks) != 0) {
        throw ShapeError("se: c=" + std::to_string(c) + " must be divisible by r*B");
    }
    return fc_macs(c, c / r, blocks, batch) + fc_macs(c / r, c, blocks, batch);
}

std::uint64_t param_count(const LayerNode& node) {
    node.validate();
    switch (node.kind) {
        case NodeKind::conv:
        case NodeKind::gconv:
        case NodeKind::tbc:
        case NodeKind::tgc:
            return param_count(node.conv_spec());
        case NodeKind::fc:
            return fc_param_count(node.c_i, node.c_o, 1, node.bias);
        case NodeKind::tfc:
            return fc_param_count(node.c_i, node.c_o, node.blocks, node.bias);
        case NodeKind::tied_se:
            return se_param_count(node.c_i, node.r, node.blocks, node.bias);
        case NodeKind::bottleneck:
        case NodeKind::tied_bottleneck: {
            const BottleneckParts p = bottleneck_parts(node);
            std::uint64_t n = param_count(p.reduce) + param_count(p.mid) + param_count(p.expand);
            if (p.se) n += param_count(*p.se);
            if (p.shortcut) n += param_count(*p.shortcut);
            return n;
        }
        case NodeKind::relu:
        case NodeKind::gap:
        case NodeKind::flatten:
            return 0;
    }
    return 0;
}

std::uint64_t macs_count(const LayerNode& node, Shape4 input) {
    node_out_shape(node, input);
    switch (node.kind) {
        case NodeKind::conv:
        case NodeKind::gconv:
        case NodeKind::tbc:
        case NodeKind::tgc:
            return macs_count(node.conv_spec(), input);
        case NodeKind::fc:
            return fc_macs(node.c_i, node.c_o, 1, input.n);
        case NodeKind::tfc:
            return fc_macs(node.c_i, node.c_o, node.blocks, input.n);
        case NodeKind::tied_se:
            return se_macs(node.c_i, node.r, node.blocks, input.n);
        case NodeKind::bottleneck:
        case NodeKind::tied_bottleneck: {
            const BottleneckParts p = bottleneck_parts(node);
            std::uint64_t n = macs_count(p.reduce, input);
            const Shape4 s1 = node_out_shape(p.reduce, input);
            n += macs_count(p.mid, s1);
            const Shape4 s2 = node_out_shape(p.mid, s1);
            n += macs_count(p.expand, s2);
            if (p.se) n += macs_count(*p.se, node_out_shape(p.expand, s2));
            if (p.shortcut) n += macs_count(*p.shortcut, input);
            return n;
        }
        case NodeKind::relu:
        case NodeKind::gap:
        case NodeKind::flatten:
            return 0;
    }
    return 0;
}

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt_ratio(const std::optional<double>& r) {
    if (!r) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *r);
    return buf;
}

}  // namespace

CountReport model_report(const ModelConfig& cfg, Shape4 input, const ModelConfig* baseline) {
    CountReport rep;
    Shape4 s = input;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerNode& node = cfg.layers[i];
        CountRow row{layer_display_name(node, i), std::string(to_string(node.kind)), 0, 0, {}};
        try {
            row.params = param_count(node);
            row.macs = macs_count(node, s);
            s = node_out_shape(node, s);
        } catch (const std::invalid_argument& e) {
            throw ValidationError(i, "layer " + std::to_string(i) + " (" + row.kind + "): " + e.what());
        }
        row.out_shape = s;
        rep.total_params += row.params;
        rep.total_macs += row.macs;
        rep.rows.push_back(std::move(row));
    }
    rep.output = s;
    if (baseline) {
        if (baseline->layers.size() != cfg.layers.size()) {
            throw ValidationError(std::nullopt, "baseline has " + std::to_string(baseline->layers.size()) +
                                                    " layers, model has " + std::to_string(cfg.layers.size()));
        }
        const CountReport base = model_report(*baseline, input);
        rep.has_baseline = true;
        rep.baseline_params = base.total_params;
        rep.baseline_macs = base.total_macs;
        for (std::size_t i = 0; i < rep.rows.size(); ++i) {
            rep.ratios.push_back({ratio(rep.rows[i].params, base.rows[i].params), ratio(rep.rows[i].macs, base.rows[i].macs)});
        }
        rep.total_ratio = {ratio(rep.total_params, base.total_params), ratio(rep.total_macs, base.total_macs)};
    }
    return rep;
}

std::string CountReport::to_csv(bool flops) const {
    const std::uint64_t scale = flops ? 2 : 1;
    std::ostringstream os;
    os << "name,kind,params," << (flops ? "flops" : "macs") << ",out_shape";
    if (has_baseline) os << ",param_ratio,mac_ratio";
    os << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CountRow& r = rows[i];
        os << r.name << ',' << r.kind << ',' << r.params << ',' << r.macs * scale << ',' << r.out_shape.str();
        if (has_baseline) os << ',' << fmt_ratio(ratios[i].params) << ',' << fmt_ratio(ratios[i].macs);
        os << '\n';
    }
    os << "total,," << total_params << ',' << total_macs * scale << ',' << output.str();
    if (has_baseline) os << ',' << fmt_ratio(total_ratio.params) << ',' << fmt_ratio(total_ratio.macs);
    os << '\n';
    return os.str();
}

std::string CountReport::to_text(bool flops) const {
    const std::uint64_t scale = flops ? 2 : 1;
    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header{"name", "kind", "params", flops ? "flops" : "macs", "out_shape"};
    if (has_baseline) {
        header.push_back("param_ratio");
        header.push_back("mac_ratio");
    }
    table.push_back(header);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const CountRow& r = rows[i];
        std::vector<std::string> line{r.name, r.kind, std::to_string(r.params), std::to_string(r.macs * scale),
                                      r.out_shape.str()};
        if (has_baseline) {
            line.push_back(fmt_ratio(ratios[i].params));
            line.push_back(fmt_ratio(ratios[i].macs));
        }
        table.push_back(std::move(line));
    }
    std::vector<std::string> total{"total", "", std::to_string(total_params), std::to_string(total_macs * scale),
                                   output.str()};
    if (has_baseline) {
        total.push_back(fmt_ratio(total_ratio.params));
        total.push_back(fmt_ratio(total_ratio.macs));
    }
    table.push_back(std::move(total));

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& line : table)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    std::ostringstream os;
    for (const auto& line : table) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            const bool numeric = c >= 2 && c != 4;
            const std::size_t padn = width[c] - line[c].size();
            if (c) os << "  ";
            if (numeric) os << std::string(padn, ' ') << line[c];
            else os << line[c] << (c + 1 < line.size() ? std::string(padn, ' ') : "");
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace tiedlab
