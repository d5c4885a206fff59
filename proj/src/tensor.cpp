#include "tiedlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tiedlab {

std::string Shape4::str() const {
    std::ostringstream os;
    os << n << 'x' << c << 'x' << h << 'x' << w;
    return os.str();
}

Tensor4::Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill)
    : shape_{n, c, h, w} {
    if (n == 0 || c == 0 || h == 0 || w == 0) {
        throw ShapeError("Tensor4: all dimensions must be >= 1, got " + shape_.str());
    }
    data_.assign(shape_.size(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
        throw ShapeError("Tensor4: all dimensions must be >= 1, got " + shape.str());
    }
    if (data_.size() != shape.size()) {
        throw ShapeError("Tensor4: data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape.str());
    }
}

Tensor4 Tensor4::reshaped(Shape4 shape) const {
    if (shape.size() != data_.size()) {
        throw ShapeError("Tensor4::reshaped: cannot view " + shape_.str() + " as " + shape.str());
    }
    return Tensor4(shape, data_);
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("Tensor2: dimensions must be >= 1, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
    }
    data_.assign(rows * cols, fill);
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("Tensor2: dimensions must be >= 1");
    }
    if (data_.size() != rows * cols) {
        throw ShapeError("Tensor2: data length " + std::to_string(data_.size()) + " does not match " +
                         shape_str());
    }
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 out(n, n);
    for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
    return out;
}

std::string Tensor2::shape_str() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

Tensor2 Tensor2::row_slice(std::size_t first, std::size_t count) const {
    if (first + count > rows_ || count == 0) {
        throw ShapeError("Tensor2::row_slice: rows [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + shape_str());
    }
    auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
    return Tensor2(count, cols_, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

std::uint64_t Rng::next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform() { return 2.0 * unit() - 1.0; }

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw InputError("Rng::below: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

void Rng::fill_uniform(std::span<double> out, double scale) {
    for (double& v : out) v = scale * uniform();
}

Tensor4 random_tensor4(Shape4 shape, Rng& rng, double scale) {
    Tensor4 t(shape);
    rng.fill_uniform(t.data(), scale);
    return t;
}

Tensor2 random_tensor2(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
    Tensor2 t(rows, cols);
    rng.fill_uniform(t.data(), scale);
    return t;
}

std::vector<double> random_vector(std::size_t len, Rng& rng, double scale) {
    std::vector<double> v(len);
    rng.fill_uniform(v, scale);
    return v;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ (" + a.shape_str() + " * " + b.shape_str() + ")");
    }
    const std::size_t m = a.rows(), kk = a.cols(), n = b.cols();
    Tensor2 c(m, n);
    const double* bp = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t p = 0; p < kk; ++p) {
            const double av = arow[p];
            const double* brow = bp + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t.at(c, r) = a.at(r, c);
    return t;
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k == 0 || stride == 0) throw ShapeError("conv: kernel size and stride must be >= 1");
    const std::size_t span = in + 2 * pad;
    if (span < k || (span - k) % stride != 0) {
        throw ShapeError("conv: output size (" + std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                         std::to_string(k) + ")/" + std::to_string(stride) + " + 1 is not a positive integer");
    }
    return (span - k) / stride + 1;
}

namespace {

// Calls fn(row, col, src_h, src_w, sample, channel) for every in-bounds patch entry.
template <typename Fn>
void for_each_patch(Shape4 s, std::size_t k, std::size_t stride, std::size_t pad, Fn&& fn) {
    const std::size_t oh = conv_out_dim(s.h, k, stride, pad);
    const std::size_t ow = conv_out_dim(s.w, k, stride, pad);
    for (std::size_t ch = 0; ch < s.c; ++ch) {
        for (std::size_t ki = 0; ki < k; ++ki) {
            for (std::size_t kj = 0; kj < k; ++kj) {
                const std::size_t row = (ch * k + ki) * k + kj;
                for (std::size_t n = 0; n < s.n; ++n) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ki) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.h)) continue;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kj) -
                                                      static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.w)) continue;
                            const std::size_t col = (n * oh + oy) * ow + ox;
                            fn(row, col, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), n, ch);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor2 im2col(const Tensor4& x, std::size_t k, std::size_t stride, std::size_t pad) {
    const Shape4 s = x.shape();
    const std::size_t oh = conv_out_dim(s.h, k, stride, pad);
    const std::size_t ow = conv_out_dim(s.w, k, stride, pad);
    Tensor2 cols(s.c * k * k, s.n * oh * ow);
    for_each_patch(s, k, stride, pad,
                   [&](std::size_t row, std::size_t col, std::size_t iy, std::size_t ix, std::size_t n,
                       std::size_t ch) { cols.at(row, col) = x.at(n, ch, iy, ix); });
    return cols;
}

Tensor4 col2im(const Tensor2& cols, Shape4 shape, std::size_t k, std::size_t stride, std::size_t pad) {
    const std::size_t oh = conv_out_dim(shape.h, k, stride, pad);
    const std::size_t ow = conv_out_dim(shape.w, k, stride, pad);
    if (cols.rows() != shape.c * k * k || cols.cols() != shape.n * oh * ow) {
        throw ShapeError("col2im: patch matrix " + cols.shape_str() + " does not match image " + shape.str());
    }
    Tensor4 x(shape);
    for_each_patch(shape, k, stride, pad,
                   [&](std::size_t row, std::size_t col, std::size_t iy, std::size_t ix, std::size_t n,
                       std::size_t ch) { x.at(n, ch, iy, ix) += cols.at(row, col); });
    return x;
}

std::vector<Tensor4> split_channels(const Tensor4& x, std::size_t parts) {
    if (parts == 0 || x.c() % parts != 0) {
        throw ShapeError("split_channels: c=" + std::to_string(x.c()) + " is not divisible by parts=" +
                         std::to_string(parts));
    }
    const std::size_t cp = x.c() / parts;
    const std::size_t plane = x.h() * x.w();
    std::vector<Tensor4> out;
    out.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        Tensor4 t(x.n(), cp, x.h(), x.w());
        for (std::size_t n = 0; n < x.n(); ++n) {
            const double* src = &x.data()[(n * x.c() + p * cp) * plane];
            std::copy(src, src + cp * plane, &t.data()[n * cp * plane]);
        }
        out.push_back(std::move(t));
    }
    return out;
}

Tensor4 concat_channels(std::span<const Tensor4> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape4 first = parts.front().shape();
    std::size_t total_c = 0;
    for (const Tensor4& p : parts) {
        if (p.n() != first.n || p.h() != first.h || p.w() != first.w) {
            throw ShapeError("concat_channels: " + p.shape().str() + " incompatible with " + first.str());
        }
        total_c += p.c();
    }
    const std::size_t plane = first.h * first.w;
    Tensor4 out(first.n, total_c, first.h, first.w);
    for (std::size_t n = 0; n < first.n; ++n) {
        std::size_t c0 = 0;
        for (const Tensor4& p : parts) {
            const double* src = &p.data()[n * p.c() * plane];
            std::copy(src, src + p.c() * plane, &out.data()[(n * total_c + c0) * plane]);
            c0 += p.c();
        }
    }
    return out;
}

// In N x C x H x W row-major layout, block j of sample i is already the contiguous
// range that sample i*b + j occupies in the folded tensor, so both directions are
// pure reinterpretations.
Tensor4 fold_blocks_to_batch(const Tensor4& x, std::size_t b) {
    if (b == 0 || x.c() % b != 0) {
        throw ShapeError("fold_blocks_to_batch: c=" + std::to_string(x.c()) + " is not divisible by B=" +
                         std::to_string(b));
    }
    return x.reshaped({x.n() * b, x.c() / b, x.h(), x.w()});
}

Tensor4 unfold_batch_to_blocks(const Tensor4& x, std::size_t b) {
    if (b == 0 || x.n() % b != 0) {
        throw ShapeError("unfold_batch_to_blocks: batch " + std::to_string(x.n()) + " is not divisible by B=" +
                         std::to_string(b));
    }
    return x.reshaped({x.n() / b, x.c() * b, x.h(), x.w()});
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_rel_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("max_rel_error: length mismatch");
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return scale > 0.0 ? diff / scale : diff;
}

}  // namespace tiedlab
