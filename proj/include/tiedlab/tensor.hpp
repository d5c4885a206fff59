#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tiedlab {

/// Thrown when tensor or layer dimensions are inconsistent.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for out-of-range user input that is not a shape problem (labels, counts).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Shape4 {
    std::size_t n = 1, c = 1, h = 1, w = 1;

    std::size_t size() const { return n * c * h * w; }
    std::string str() const;
    friend bool operator==(const Shape4&, const Shape4&) = default;
};

/// Dense N x C x H x W tensor of doubles, row-major.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, double fill = 0.0);
    Tensor4(Shape4 shape, std::vector<double> data);
    explicit Tensor4(Shape4 shape, double fill = 0.0) : Tensor4(shape.n, shape.c, shape.h, shape.w, fill) {}

    std::size_t n() const { return shape_.n; }
    std::size_t c() const { return shape_.c; }
    std::size_t h() const { return shape_.h; }
    std::size_t w() const { return shape_.w; }
    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& vec() const { return data_; }

    /// Same data reinterpreted under a shape with equal element count.
    Tensor4 reshaped(Shape4 shape) const;

    friend bool operator==(const Tensor4&, const Tensor4&) = default;

private:
    Shape4 shape_{0, 0, 0, 0};
    std::vector<double> data_;
};

/// Dense row-major matrix of doubles.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2 identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::string shape_str() const;

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& vec() const { return data_; }

    /// Rows [first, first + count) as a new matrix.
    Tensor2 row_slice(std::size_t first, std::size_t count) const;

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// splitmix64 stream. uniform() maps the top 53 bits to [-1, 1).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    /// Uniform double in [-1, 1).
    double uniform();
    /// Uniform double in [0, 1).
    double unit();
    /// Uniform integer in [0, bound) via rejection sampling; bound > 0.
    std::uint64_t below(std::uint64_t bound);
    /// Uniform integer in [lo, hi].
    std::size_t range(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

    void fill_uniform(std::span<double> out, double scale = 1.0);

private:
    std::uint64_t state_;
};

Tensor4 random_tensor4(Shape4 shape, Rng& rng, double scale = 1.0);
Tensor2 random_tensor2(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0);
std::vector<double> random_vector(std::size_t len, Rng& rng, double scale = 1.0);

// Kernels. All are pure; none mutate their inputs.

/// C = A * B. Each C(i,j) is accumulated from 0.0 over p = 0..K-1 in ascending
/// order; the i-p-j loop nest preserves that order per element, so results are
/// bitwise reproducible.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

/// Lowers x to a (c*k*k) x (n*H'*W') patch matrix. Rows: channel, kernel row,
/// kernel col. Columns: sample, output row, output col. Zero padding.
Tensor2 im2col(const Tensor4& x, std::size_t k, std::size_t stride, std::size_t pad);

/// Adjoint of im2col: scatters-adds patch columns back into an image of `shape`.
Tensor4 col2im(const Tensor2& cols, Shape4 shape, std::size_t k, std::size_t stride, std::size_t pad);

/// Output spatial extent of a k-window; throws ShapeError when not a positive integer.
std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad);

std::vector<Tensor4> split_channels(const Tensor4& x, std::size_t parts);
Tensor4 concat_channels(std::span<const Tensor4> parts);

/// n x c x h x w -> (n*b) x (c/b) x h x w; output sample i*b + j holds block j of input sample i.
Tensor4 fold_blocks_to_batch(const Tensor4& x, std::size_t b);
/// Inverse of fold_blocks_to_batch.
Tensor4 unfold_batch_to_blocks(const Tensor4& x, std::size_t b);

double dot(std::span<const double> a, std::span<const double> b);

/// max|a - b| / max|b|, or max|a - b| when b is identically zero.
double max_rel_error(std::span<const double> a, std::span<const double> b);

}  // namespace tiedlab
