#include "lrd/tensor.hpp"

#include <cmath>
#include <numeric>

#include "lrd/error.hpp"

namespace lrd {

const char* category_name(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::argument: return "argument";
        case ErrorCategory::config: return "config";
        case ErrorCategory::data: return "data";
        case ErrorCategory::io: return "io";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::internal: return "internal";
    }
    return "internal";
}

std::size_t shape_volume(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {
void check_shape(const Shape& shape) {
    if (shape.empty()) throw ArgumentError("tensor shape must be non-empty");
    for (auto d : shape)
        if (d == 0) throw ArgumentError("tensor dims must be >= 1, got " + shape_to_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_volume(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_volume(shape_))
        throw ArgumentError("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data_) v = dist(rng);
    return t;
}

std::size_t Tensor::rows() const {
    if (ndim() != 2) throw ArgumentError("expected a matrix, got shape " + shape_to_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) throw ArgumentError("expected a matrix, got shape " + shape_to_string(shape_));
    return shape_[1];
}

Tensor Tensor::reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_volume(shape) != data_.size())
        throw ArgumentError("cannot reshape " + shape_to_string(shape_) + " to " +
                            shape_to_string(shape));
    return Tensor(std::move(shape), data_);
}

double Tensor::frobenius_norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return std::sqrt(acc);
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double relative_error(const Tensor& approx, const Tensor& reference) {
    if (approx.size() != reference.size())
        throw ArgumentError("relative_error: size mismatch " + shape_to_string(approx.shape()) +
                            " vs " + shape_to_string(reference.shape()));
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < approx.size(); ++i) {
        double d = approx[i] - reference[i];
        diff += d * d;
        ref += reference[i] * reference[i];
    }
    if (ref == 0.0) return diff == 0.0 ? 0.0 : std::sqrt(diff);
    return std::sqrt(diff / ref);
}

}  // namespace lrd
