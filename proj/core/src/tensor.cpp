#include "emotok/tensor.hpp"

#include <cmath>

namespace emotok {

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor random_uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Tensor random_normal(std::vector<std::size_t> shape, double mean, double stddev,
                     std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(mean, stddev);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    return t;
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape,
                      std::mt19937_64& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return random_uniform(std::move(shape), -bound, bound, rng);
}

Tensor mat_mul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ParameterError("mat_mul: incompatible shapes");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor mat_mul_at(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw ParameterError("mat_mul_at: incompatible shapes");
    }
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data() + p * m;
        const double* brow = b.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor mat_mul_bt(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw ParameterError("mat_mul_bt: incompatible shapes");
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            orow[j] = s;
        }
    }
    return out;
}

Tensor mat_transpose(const Tensor& a) {
    if (a.rank() != 2) throw ParameterError("mat_transpose: rank-2 required");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

}  // namespace emotok
