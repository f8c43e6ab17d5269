#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace lrd {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

/// Dense row-major tensor of doubles. Shape is non-empty and every dim is >= 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor identity(std::size_t n);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    /// i.i.d. N(0, stddev^2) entries.
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t ndim() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Matrix view helpers; only valid for 2-D tensors.
    std::size_t rows() const;
    std::size_t cols() const;
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    /// Same data, new shape of equal volume.
    Tensor reshaped(Shape shape) const;

    double frobenius_norm() const;
    double sum() const;
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// ||a - b||_F / ||b||_F, with the convention 0 when both are zero.
double relative_error(const Tensor& approx, const Tensor& reference);

}  // namespace lrd
