#include "tiedlab/sampling.hpp"

#include <sstream>

namespace tiedlab {

namespace {

std::size_t input_extent(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    return (out - 1) * stride + k - 2 * pad;
}

}  // namespace

ConvCase random_conv_case(ConvFamily family, Rng& rng, const ConvSampling& opts) {
    ConvSpec spec;
    switch (family) {
        case ConvFamily::standard:
            break;
        case ConvFamily::grouped:
            spec.groups = pick(opts.groups, rng);
            break;
        case ConvFamily::tbc:
            spec.blocks = pick(opts.blocks, rng);
            break;
        case ConvFamily::tgc:
            spec.blocks = pick(opts.blocks, rng);
            spec.groups = spec.blocks * rng.range(1, 2);
            break;
    }
    const std::size_t parts = spec.partitions();
    spec.c_i = parts * rng.range(1, opts.max_channel_mult);
    spec.c_o = parts * rng.range(1, opts.max_channel_mult);
    spec.k = pick(opts.kernels, rng);
    spec.stride = rng.range(1, 2);
    spec.pad = rng.below(2) == 0 ? 0 : spec.k / 2;
    spec.has_bias = rng.below(2) == 1;

    Shape4 in;
    in.n = rng.range(1, opts.max_batch);
    in.c = spec.c_i;
    in.h = input_extent(rng.range(1, opts.max_out_dim), spec.k, spec.stride, spec.pad);
    in.w = input_extent(rng.range(1, opts.max_out_dim), spec.k, spec.stride, spec.pad);
    spec.validate();
    return {spec, in};
}

std::string describe(const ConvSpec& spec) {
    std::ostringstream os;
    os << "c_i=" << spec.c_i << " c_o=" << spec.c_o << " k=" << spec.k << " stride=" << spec.stride
       << " pad=" << spec.pad << " G=" << spec.groups << " B=" << spec.blocks << " bias=" << (spec.has_bias ? 1 : 0);
    return os.str();
}

}  // namespace tiedlab
