#include "emotok/encoder.hpp"

#include <cmath>

#include "emotok/errors.hpp"

namespace emotok::encoder {

JointGraph build_joint_graph(std::size_t joint_count,
                             const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    if (joint_count == 0) throw ParameterError("joint graph: zero joints");
    Tensor adj({joint_count, joint_count});
    for (std::size_t j = 0; j < joint_count; ++j) adj.at2(j, j) = 1.0;  // self-loops
    for (const auto& [a, b] : edges) {
        if (a >= joint_count || b >= joint_count) {
            throw TopologyError("joint graph: edge references joint out of range");
        }
        adj.at2(a, b) = 1.0;
        adj.at2(b, a) = 1.0;
    }
    // Connectivity check over A + I.
    std::vector<bool> seen(joint_count, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        for (std::size_t u = 0; u < joint_count; ++u) {
            if (adj.at2(v, u) != 0.0 && !seen[u]) {
                seen[u] = true;
                stack.push_back(u);
            }
        }
    }
    for (std::size_t j = 0; j < joint_count; ++j) {
        if (!seen[j]) throw TopologyError("joint graph: disconnected (joint " +
                                          std::to_string(j) + " unreachable)");
    }
    JointGraph g;
    g.joint_count = joint_count;
    g.edges = edges;
    g.normalized_adjacency = Tensor({joint_count, joint_count});
    for (std::size_t j = 0; j < joint_count; ++j) {
        double degree = 0.0;
        for (std::size_t k = 0; k < joint_count; ++k) degree += adj.at2(j, k);
        for (std::size_t k = 0; k < joint_count; ++k) {
            g.normalized_adjacency.at2(j, k) = adj.at2(j, k) / degree;
        }
    }
    return g;
}

JointGraph chain_graph(std::size_t joint_count) {
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t j = 0; j + 1 < joint_count; ++j) edges.emplace_back(j, j + 1);
    return build_joint_graph(joint_count, edges);
}

namespace {
std::string layer_name(std::size_t layer, const char* what) {
    return std::string(Encoder::kPrefix) + "layer" + std::to_string(layer) + "/" + what;
}
}  // namespace

void Encoder::init_params(ParameterStore& params, std::uint64_t seed) const {
    if (config_.base_channels < 1 || config_.layer_count < 1) {
        throw ParameterError("encoder config: channels and layers must be >= 1");
    }
    if (config_.temporal_kernel % 2 == 0) {
        throw ParameterError("encoder config: temporal kernel must be odd");
    }
    std::mt19937_64 rng(seed);
    std::size_t in_ch = 3;
    for (std::size_t l = 0; l < config_.layer_count; ++l) {
        const std::size_t out_ch = config_.base_channels;
        params.add(layer_name(l, "mix"),
                   glorot_uniform(in_ch, out_ch, {in_ch, out_ch}, rng), !config_.frozen);
        params.add(layer_name(l, "tconv"),
                   glorot_uniform(config_.temporal_kernel, out_ch,
                                  {config_.temporal_kernel, out_ch}, rng),
                   !config_.frozen);
        in_ch = out_ch;
    }
}

void Encoder::apply_freeze_state(ParameterStore& params) const {
    params.set_trainable_prefix(kPrefix, !config_.frozen);
}

std::vector<std::string> Encoder::param_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < config_.layer_count; ++l) {
        names.push_back(layer_name(l, "mix"));
        names.push_back(layer_name(l, "tconv"));
    }
    return names;
}

ad::NodePtr Encoder::forward(const ad::NodePtr& input, const JointGraph& graph,
                             const ad::LeafMap& leaves) const {
    if (input->value.rank() != 3 || input->value.dim(2) != 3) {
        throw ParameterError("encoder: input must be (T, J, 3)");
    }
    if (input->value.dim(1) != graph.joint_count) {
        throw ParameterError("encoder: sequence joints do not match graph");
    }
    const std::size_t T = input->value.dim(0);
    const std::size_t J = graph.joint_count;
    ad::NodePtr h = input;
    std::size_t in_ch = 3;
    for (std::size_t l = 0; l < config_.layer_count; ++l) {
        const std::size_t out_ch = config_.base_channels;
        const auto& mix = leaves.at(layer_name(l, "mix"));
        const auto& tconv = leaves.at(layer_name(l, "tconv"));
        auto mixed = ad::reshape(ad::matmul(ad::reshape(h, {T * J, in_ch}), mix),
                                 {T, J, out_ch});
        auto spatial = ad::graph_mix(mixed, graph.normalized_adjacency);
        auto temporal = ad::temporal_conv_depthwise(mixed, tconv);
        h = ad::relu(ad::add(spatial, temporal));
        in_ch = out_ch;
    }
    return h;
}

Tensor Encoder::encode(const skeldata::SkeletonSequence& seq64, const JointGraph& graph,
                       const ParameterStore& params) const {
    if (seq64.frame_count() != 64) {
        throw ParameterError("encoder: expected a 64-frame sequence, got " +
                             std::to_string(seq64.frame_count()));
    }
    auto leaves = ad::make_constant_leaves(params);
    auto out = forward(ad::constant(seq64.frames), graph, leaves);
    return out->value;
}

}  // namespace emotok::encoder
