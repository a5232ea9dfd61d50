#pragma once

#include <span>
#include <utility>
#include <vector>

#include "emotok/autodiff.hpp"
#include "emotok/skeldata.hpp"
#include "emotok/tensor.hpp"

namespace emotok::unify {

// Token vector padded to the global length L with its retention mask:
// values[i] == 0 and mask[i] == 0 for i >= valid_length; mask[i] == 1 below.
struct MaskedTokens {
    Tensor values;  // (L)
    Tensor mask;    // (L), entries in {0,1}
    std::size_t valid_length = 0;
};

// How the decoder treats padded token positions.
enum class PaddingPolicy {
    DropFromContext,  // padded slots never enter the context (default)
    ZeroVectors,      // padded slots enter as zero vectors
};

// (L_spatial, L_temporal) over a manifest collection:
// L_spatial = max(J) * C, L_temporal = T * C (uniform after resampling).
std::pair<std::size_t, std::size_t> global_token_length(
    std::span<const skeldata::DatasetManifest> manifests, std::size_t channels,
    std::size_t frames = 64);

// Zero-pad to L and apply the retention mask (z' = z (*) M).
MaskedTokens unify_tokens(const Tensor& raw, std::size_t length);

// Mean over the valid region viewed as (valid_length/C, C) positions.
Tensor masked_mean(const MaskedTokens& tokens, std::size_t channels);

// Autodiff counterpart: pad a (P, C) position matrix to total_positions rows
// and multiply by the mask so no gradient reaches padded slots.
ad::NodePtr unify_node(const ad::NodePtr& positions, std::size_t total_positions);

// Mean over the first valid_positions rows of a unified (P, C) node.
ad::NodePtr masked_mean_node(const ad::NodePtr& unified, std::size_t valid_positions);

}  // namespace emotok::unify
