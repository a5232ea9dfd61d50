#include "emotok/unify.hpp"

#include <algorithm>

#include "emotok/errors.hpp"

namespace emotok::unify {

std::pair<std::size_t, std::size_t> global_token_length(
    std::span<const skeldata::DatasetManifest> manifests, std::size_t channels,
    std::size_t frames) {
    if (manifests.empty()) throw ParameterError("global_token_length: no manifests");
    std::size_t max_joints = 0;
    for (const auto& m : manifests) max_joints = std::max(max_joints, m.joint_count);
    return {max_joints * channels, frames * channels};
}

MaskedTokens unify_tokens(const Tensor& raw, std::size_t length) {
    if (raw.rank() != 1) throw ParameterError("unify_tokens: raw must be a vector");
    if (raw.numel() > length) {
        throw ParameterError("unify_tokens: raw length " + std::to_string(raw.numel()) +
                             " exceeds L=" + std::to_string(length));
    }
    MaskedTokens out;
    out.valid_length = raw.numel();
    out.values = Tensor({length});
    out.mask = Tensor({length});
    for (std::size_t i = 0; i < raw.numel(); ++i) {
        out.mask[i] = 1.0;
        out.values[i] = raw[i];
    }
    // z' = z (*) M; already zero past valid_length, product keeps it exact.
    for (std::size_t i = 0; i < length; ++i) out.values[i] *= out.mask[i];
    return out;
}

Tensor masked_mean(const MaskedTokens& tokens, std::size_t channels) {
    if (channels == 0 || tokens.valid_length % channels != 0) {
        throw ParameterError("masked_mean: valid_length not divisible by channels");
    }
    const std::size_t positions = tokens.valid_length / channels;
    if (positions == 0) throw ParameterError("masked_mean: empty valid region");
    Tensor out({channels});
    for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t c = 0; c < channels; ++c) {
            out[c] += tokens.values[p * channels + c];
        }
    }
    for (std::size_t c = 0; c < channels; ++c) out[c] /= static_cast<double>(positions);
    return out;
}

ad::NodePtr unify_node(const ad::NodePtr& positions, std::size_t total_positions) {
    if (positions->value.rank() != 2) {
        throw ParameterError("unify_node: positions must be (P, C)");
    }
    const std::size_t valid = positions->value.dim(0);
    const std::size_t cols = positions->value.dim(1);
    if (valid > total_positions) throw ParameterError("unify_node: overflow");
    auto padded = ad::pad_rows(positions, total_positions);
    Tensor mask({total_positions, cols});
    for (std::size_t i = 0; i < valid * cols; ++i) mask[i] = 1.0;
    return ad::mul_const(padded, mask);
}

ad::NodePtr masked_mean_node(const ad::NodePtr& unified, std::size_t valid_positions) {
    if (unified->value.rank() != 2) throw ParameterError("masked_mean_node: need (P, C)");
    if (valid_positions == 0 || valid_positions > unified->value.dim(0)) {
        throw ParameterError("masked_mean_node: bad valid region");
    }
    return ad::mean_rows(ad::slice_rows(unified, 0, valid_positions));
}

}  // namespace emotok::unify
