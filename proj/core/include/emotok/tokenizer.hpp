#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emotok/autodiff.hpp"
#include "emotok/params.hpp"
#include "emotok/tensor.hpp"

namespace emotok::tokenizer {

// Output of the multi-granularity tokenizer for one sequence.
struct TokenBundle {
    Tensor semantic;  // (semantic_dim)
    Tensor spatial;   // (J*C), joint-major
    Tensor temporal;  // (T*C), frame-major
    std::size_t frames = 0;
    std::size_t joints = 0;
    std::size_t channels = 0;
};

struct TokenizerConfig {
    std::size_t channels = 64;       // must match the encoder's base channels
    std::size_t semantic_dim = 768;  // width of the pooled global token
};

// Three token constructors over a feature map F: (T, J, C):
//   semantic: mean over T and J, then an affine map C -> semantic_dim
//   spatial:  mean over T, then a shared 1x1 channel mix (C x C) per joint
//   temporal: mean over J, then a shared 1x1 channel mix per frame
class SkeletonTokenizer {
public:
    static constexpr const char* kPrefix = "tokenizer/";

    explicit SkeletonTokenizer(TokenizerConfig config) : config_(config) {}

    const TokenizerConfig& config() const { return config_; }

    void init_params(ParameterStore& params, std::uint64_t seed) const;
    std::vector<std::string> param_names() const;

    // Node builders. Spatial/temporal results stay as (positions, C)
    // matrices; flattening them row-major gives the spec's vectors.
    ad::NodePtr semantic_node(const ad::NodePtr& features, const ad::LeafMap& leaves) const;
    ad::NodePtr spatial_node(const ad::NodePtr& features, const ad::LeafMap& leaves) const;
    ad::NodePtr temporal_node(const ad::NodePtr& features, const ad::LeafMap& leaves) const;

    // Plain evaluation producing flattened vectors.
    TokenBundle tokenize(const Tensor& features, const ParameterStore& params) const;

private:
    TokenizerConfig config_;
};

}  // namespace emotok::tokenizer
