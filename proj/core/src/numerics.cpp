#include "emotok/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace emotok::numerics {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ParameterError("cosine_similarity: length mismatch");
    }
    if (a.empty()) {
        throw ParameterError("cosine_similarity: empty input");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateInputError("cosine_similarity: zero-norm input");
    }
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
    if (temperature <= 0.0) {
        throw ParameterError("softmax: temperature must be positive");
    }
    if (logits.empty()) {
        throw ParameterError("softmax: empty input");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

double kl_divergence(std::span<const double> target, std::span<const double> predicted) {
    if (target.size() != predicted.size() || target.empty()) {
        throw ParameterError("kl_divergence: length mismatch");
    }
    double st = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        st += target[i];
        sp += predicted[i];
    }
    if (std::abs(st - 1.0) > 1e-6 || std::abs(sp - 1.0) > 1e-6) {
        throw ParameterError("kl_divergence: arguments must sum to 1 within 1e-6");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0.0) continue;  // 0*log0 := 0
        if (predicted[i] <= 0.0) {
            throw DegenerateInputError(
                "kl_divergence: predicted is zero where target is positive (divergence undefined)");
        }
        kl += target[i] * std::log(target[i] / predicted[i]);
    }
    return kl;
}

double cross_entropy(std::span<const double> logits, std::size_t target_index) {
    if (target_index >= logits.size()) {
        throw ParameterError("cross_entropy: target index out of range");
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    // -log softmax[t] = logsumexp - logit[t]
    return (mx + std::log(sum)) - logits[target_index];
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdState& state) {
    if (!param.same_shape(grad)) {
        throw ParameterError("sgd_step: parameter/gradient shape mismatch");
    }
    if (velocity.numel() == 0) {
        velocity = Tensor::zeros(param.shape());
    }
    if (!velocity.same_shape(param)) {
        throw ParameterError("sgd_step: velocity shape mismatch");
    }
    for (std::size_t i = 0; i < param.numel(); ++i) {
        velocity[i] = state.momentum * velocity[i] + grad[i];
        param[i] -= state.learning_rate * velocity[i];
    }
}

void sgd_step(ParameterStore& params, const std::map<std::string, Tensor>& grads,
              SgdState& state) {
    for (const auto& [name, grad] : grads) {
        if (!params.has(name) || !params.trainable(name)) continue;
        Tensor& p = params.get(name);
        sgd_step(p, grad, state.velocity[name], state);
    }
}

}  // namespace emotok::numerics
