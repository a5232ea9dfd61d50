#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "emotok/params.hpp"
#include "emotok/tensor.hpp"

namespace emotok::numerics {

// cos(a,b) = dot/(|a||b|), clamped to [-1,1] against rounding.
// Throws DegenerateInputError on a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Temperature softmax with max-subtraction. tau must be positive.
std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0);

// KL(target || predicted) with 0*log0 := 0. Both arguments must sum to 1
// within 1e-6; predicted must be positive wherever target is positive.
double kl_divergence(std::span<const double> target, std::span<const double> predicted);

// -log softmax(logits)[target_index], evaluated via log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t target_index);

// SGD with momentum: v <- momentum*v + g; p <- p - lr*v.
struct SgdState {
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::map<std::string, Tensor> velocity;
};

// Single-tensor update rule. velocity must match param's shape (zeros on
// first use).
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdState& state);

// Store-level step over all trainable parameters present in grads.
// Missing velocity entries are created as zeros.
void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads,
              SgdState& state);

}  // namespace emotok::numerics
