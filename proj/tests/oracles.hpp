#pragma once

// Independent reference implementations used only by tests. Nothing here calls
// im2col or matmul.

#include <vector>

#include "tiedlab/tensor.hpp"

namespace oracle {

/// Direct nested-loop grouped convolution. `w` is laid out as
/// [c_o][c_i/groups][k][k]; `bias` is empty or length c_o.
inline tiedlab::Tensor4 direct_conv(const tiedlab::Tensor4& x, const std::vector<double>& w,
                                    const std::vector<double>& bias, std::size_t c_o, std::size_t k,
                                    std::size_t stride, std::size_t pad, std::size_t groups = 1) {
    const std::size_t c_i = x.c();
    const std::size_t cig = c_i / groups, cog = c_o / groups;
    const std::size_t ho = (x.h() + 2 * pad - k) / stride + 1;
    const std::size_t wo = (x.w() + 2 * pad - k) / stride + 1;
    tiedlab::Tensor4 y(x.n(), c_o, ho, wo);
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t o = 0; o < c_o; ++o) {
            const std::size_t g = o / cog;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[o];
                    for (std::size_t ci = 0; ci < cig; ++ci)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long iy = long(oy * stride + ky) - long(pad);
                                const long ix = long(ox * stride + kx) - long(pad);
                                if (iy < 0 || ix < 0 || iy >= long(x.h()) || ix >= long(x.w())) continue;
                                acc += x.at(n, g * cig + ci, iy, ix) * w[((o * cig + ci) * k + ky) * k + kx];
                            }
                    y.at(n, o, oy, ox) = acc;
                }
        }
    return y;
}

inline std::vector<double> dense_matvec(const std::vector<std::vector<double>>& m, const std::vector<double>& x) {
    std::vector<double> y(m.size(), 0.0);
    for (std::size_t r = 0; r < m.size(); ++r)
        for (std::size_t c = 0; c < x.size(); ++c) y[r] += m[r][c] * x[c];
    return y;
}

}  // namespace oracle
