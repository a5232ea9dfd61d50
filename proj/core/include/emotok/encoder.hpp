#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "emotok/autodiff.hpp"
#include "emotok/params.hpp"
#include "emotok/skeldata.hpp"
#include "emotok/tensor.hpp"

namespace emotok::encoder {

// Joint topology plus the degree-normalized adjacency used by every layer:
// A_hat = D^-1 (A + I), rows sum to 1.
struct JointGraph {
    std::size_t joint_count = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    Tensor normalized_adjacency;  // (J, J)
};

JointGraph build_joint_graph(std::size_t joint_count,
                             const std::vector<std::pair<std::size_t, std::size_t>>& edges);

// Default topology for synthetic skeletons: a single kinematic chain.
JointGraph chain_graph(std::size_t joint_count);

struct EncoderConfig {
    std::size_t base_channels = 64;
    std::size_t layer_count = 3;
    std::size_t temporal_kernel = 3;
    bool frozen = true;  // downstream stages never update a frozen encoder
};

// Graph-convolutional encoder over 64-frame sequences. Layer l mixes
// channels, propagates over the joint graph, adds a depthwise temporal
// convolution of the mixed features, and applies ReLU:
//   M = H W_l;  H' = relu(A_hat M + tconv(M, K_l))
// Channel-mixing weights are joint-count independent, so one parameter set
// serves every dataset; only the adjacency is per-dataset.
class Encoder {
public:
    static constexpr const char* kPrefix = "encoder/";

    explicit Encoder(EncoderConfig config) : config_(std::move(config)) {}

    const EncoderConfig& config() const { return config_; }
    EncoderConfig& config() { return config_; }

    void freeze() { config_.frozen = true; }
    void unfreeze() { config_.frozen = false; }

    // Registers weights under "encoder/". trainable == !frozen.
    void init_params(ParameterStore& params, std::uint64_t seed) const;

    // Marks encoder parameters (non-)trainable to match the frozen flag.
    void apply_freeze_state(ParameterStore& params) const;

    std::vector<std::string> param_names() const;

    // Autodiff forward. input: (T, J, 3) node; returns (T, J, C) node.
    ad::NodePtr forward(const ad::NodePtr& input, const JointGraph& graph,
                        const ad::LeafMap& leaves) const;

    // Plain forward on a 64-frame sequence; returns the (64, J, C) FeatureMap.
    Tensor encode(const skeldata::SkeletonSequence& seq64, const JointGraph& graph,
                  const ParameterStore& params) const;

private:
    EncoderConfig config_;
};

}  // namespace emotok::encoder
