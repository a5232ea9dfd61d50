#include "emotok/tokenizer.hpp"

#include "emotok/errors.hpp"

namespace emotok::tokenizer {

namespace {
void check_features(const Tensor& f, std::size_t channels) {
    if (f.rank() != 3) throw ParameterError("tokenizer: features must be (T, J, C)");
    if (f.dim(2) != channels) {
        throw ParameterError("tokenizer: feature channels " + std::to_string(f.dim(2)) +
                             " do not match config " + std::to_string(channels));
    }
}
}  // namespace

void SkeletonTokenizer::init_params(ParameterStore& params, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    const std::size_t c = config_.channels, d = config_.semantic_dim;
    params.add(std::string(kPrefix) + "fc_w", glorot_uniform(c, d, {c, d}, rng));
    params.add(std::string(kPrefix) + "fc_b", Tensor::zeros({d}));
    params.add(std::string(kPrefix) + "conv_spatial", glorot_uniform(c, c, {c, c}, rng));
    params.add(std::string(kPrefix) + "conv_temporal", glorot_uniform(c, c, {c, c}, rng));
}

std::vector<std::string> SkeletonTokenizer::param_names() const {
    return {std::string(kPrefix) + "fc_w", std::string(kPrefix) + "fc_b",
            std::string(kPrefix) + "conv_spatial", std::string(kPrefix) + "conv_temporal"};
}

ad::NodePtr SkeletonTokenizer::semantic_node(const ad::NodePtr& features,
                                             const ad::LeafMap& leaves) const {
    check_features(features->value, config_.channels);
    auto pooled = ad::pool_mean(features, ad::PoolAxis::Both);  // (C)
    auto row = ad::reshape(pooled, {1, config_.channels});
    auto mapped = ad::matmul(row, leaves.at(std::string(kPrefix) + "fc_w"));
    auto biased = ad::add_rowvec(mapped, leaves.at(std::string(kPrefix) + "fc_b"));
    return ad::reshape(biased, {config_.semantic_dim});
}

ad::NodePtr SkeletonTokenizer::spatial_node(const ad::NodePtr& features,
                                            const ad::LeafMap& leaves) const {
    check_features(features->value, config_.channels);
    auto pooled = ad::pool_mean(features, ad::PoolAxis::Time);  // (J, C)
    return ad::matmul(pooled, leaves.at(std::string(kPrefix) + "conv_spatial"));
}

ad::NodePtr SkeletonTokenizer::temporal_node(const ad::NodePtr& features,
                                             const ad::LeafMap& leaves) const {
    check_features(features->value, config_.channels);
    auto pooled = ad::pool_mean(features, ad::PoolAxis::Joint);  // (T, C)
    return ad::matmul(pooled, leaves.at(std::string(kPrefix) + "conv_temporal"));
}

TokenBundle SkeletonTokenizer::tokenize(const Tensor& features,
                                        const ParameterStore& params) const {
    check_features(features, config_.channels);
    auto leaves = ad::make_constant_leaves(params);
    auto f = ad::constant(features);
    TokenBundle bundle;
    bundle.frames = features.dim(0);
    bundle.joints = features.dim(1);
    bundle.channels = features.dim(2);
    bundle.semantic = semantic_node(f, leaves)->value;
    bundle.spatial = spatial_node(f, leaves)->value.reshaped({bundle.joints * bundle.channels});
    bundle.temporal =
        temporal_node(f, leaves)->value.reshaped({bundle.frames * bundle.channels});
    return bundle;
}

}  // namespace emotok::tokenizer
