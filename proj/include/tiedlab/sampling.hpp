#pragma once

#include <string>
#include <vector>

#include "tiedlab/nn.hpp"
#include "tiedlab/tensor.hpp"

namespace tiedlab {

/// What flavour of conv spec to draw.
enum class ConvFamily { standard, grouped, tbc, tgc };

struct ConvSampling {
    std::vector<std::size_t> blocks{2, 4};  // candidate B (tbc, tgc)
    std::vector<std::size_t> groups{2, 3, 4};  // candidate G (grouped)
    std::vector<std::size_t> kernels{1, 3};
    std::size_t max_channel_mult = 3;  // channels = partitions * [1, max]
    std::size_t max_out_dim = 4;
    std::size_t max_batch = 2;
};

struct ConvCase {
    ConvSpec spec;
    Shape4 input;
};

/// Draws a legal spec and an input shape whose output dims are positive integers.
ConvCase random_conv_case(ConvFamily family, Rng& rng, const ConvSampling& opts = {});

std::string describe(const ConvSpec& spec);

template <typename T>
const T& pick(const std::vector<T>& options, Rng& rng) {
    return options[rng.below(options.size())];
}

}  // namespace tiedlab
