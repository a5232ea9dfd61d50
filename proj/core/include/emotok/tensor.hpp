#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "emotok/errors.hpp"

namespace emotok {

// Dense row-major tensor of 64-bit floats. Immutable-by-convention value
// type: library operations return fresh tensors instead of mutating inputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw ParameterError("tensor shape does not match data length");
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor from_vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
        return Tensor({rows, cols}, std::move(data));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> span() const { return {data_.data(), data_.size()}; }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at3(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at3(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    // Scalar read for rank-0 / single-element tensors.
    double value() const {
        if (data_.size() != 1) throw ParameterError("tensor is not a scalar");
        return data_[0];
    }

    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        if (count(new_shape) != data_.size()) {
            throw ParameterError("reshape changes element count");
        }
        return Tensor(std::move(new_shape), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;

    // Exact element-wise equality (bit-identity checks in tests).
    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Seeded initializers. All randomness in the library flows through
// std::mt19937_64 so runs are reproducible across platforms.
Tensor random_uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng);
Tensor random_normal(std::vector<std::size_t> shape, double mean, double stddev, std::mt19937_64& rng);

// Glorot-style uniform init in +-sqrt(6/(fan_in+fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape,
                      std::mt19937_64& rng);

// Plain dense products used by both forward paths and gradient rules.
Tensor mat_mul(const Tensor& a, const Tensor& b);        // (m,k)x(k,n)
Tensor mat_mul_at(const Tensor& a, const Tensor& b);     // a^T x b, a:(k,m)
Tensor mat_mul_bt(const Tensor& a, const Tensor& b);     // a x b^T, b:(n,k)
Tensor mat_transpose(const Tensor& a);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace emotok
