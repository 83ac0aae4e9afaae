#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bimind::num {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Most operations view a tensor as a matrix of `rows() x cols()`, where
/// `cols()` is the last extent and `rows()` is the product of the rest. A
/// rank-1 tensor of n entries is therefore a 1 x n row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
    std::size_t rows() const noexcept { return cols() == 0 ? 0 : numel() / cols(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    void fill(double value);
    bool all_finite() const noexcept;
    Tensor reshaped(Shape shape) const;

    /// Elementwise `this += other`; shapes must hold the same number of entries.
    void accumulate(const Tensor& other);

private:
    Shape shape_;
    std::vector<double> data_;
};

bool same_shape(const Tensor& a, const Tensor& b) noexcept;
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);

} // namespace bimind::num
