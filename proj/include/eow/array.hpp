#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "eow/rng.hpp"

namespace eow {

// Raised when an operation produces or receives non-finite values, or when
// shapes/domains are violated at runtime.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major f64 array. Rank 1 or 2 is all the pipeline needs; values
// are immutable once recorded on a tape.
class Array {
public:
    Array() = default;

    explicit Array(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), 0.0);
    }

    Array(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != checked_numel(shape_))
            throw ShapeError("Array: data length does not match shape");
    }

    static Array scalar(double v) { return Array({1}, {v}); }

    static Array zeros(std::vector<int> shape) { return Array(std::move(shape)); }

    static Array full(std::vector<int> shape, double v) {
        Array a(std::move(shape));
        for (auto& x : a.data_) x = v;
        return a;
    }

    static Array randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Array a(std::move(shape));
        for (auto& x : a.data_) x = stddev * rng.normal();
        return a;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return int(shape_.size()); }
    std::size_t numel() const { return data_.size(); }

    int rows() const { return rank() == 2 ? shape_[0] : (rank() == 1 ? 1 : fail_rank()); }
    int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : fail_rank()); }

    bool is_scalar() const { return numel() == 1; }
    double scalar_value() const {
        if (!is_scalar()) throw ShapeError("Array: not a scalar");
        return data_[0];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(int r, int c) { return data_[std::size_t(r) * cols() + c]; }
    double at(int r, int c) const { return data_[std::size_t(r) * cols() + c]; }

    bool same_shape(const Array& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    static std::size_t checked_numel(const std::vector<int>& shape) {
        if (shape.empty()) throw ShapeError("Array: empty shape");
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("Array: nonpositive dimension");
            n *= std::size_t(d);
        }
        return n;
    }

    [[noreturn]] int fail_rank() const { throw ShapeError("Array: rank-2 accessor on rank-" + std::to_string(rank()) + " array"); }

    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace eow
