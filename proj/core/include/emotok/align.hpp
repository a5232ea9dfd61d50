#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "emotok/autodiff.hpp"
#include "emotok/encoder.hpp"
#include "emotok/params.hpp"
#include "emotok/skeldata.hpp"
#include "emotok/tensor.hpp"
#include "emotok/tokenizer.hpp"

namespace emotok::align {

// Emotion label -> unit-normalized text-encoder vector, ingested from file.
struct TextEmbeddingTable {
    std::size_t dim = 0;
    std::map<std::string, Tensor> vectors;
    std::string provenance;

    const Tensor& at(const std::string& label) const;
    bool has(const std::string& label) const { return vectors.count(label) != 0; }
};

// File format: header "label_count dim", then one line per label:
// "<label> v1 ... v_dim". Vectors are L2-normalized on load.
TextEmbeddingTable load_text_embeddings(const std::filesystem::path& path,
                                        const std::vector<std::string>& required_labels);
void write_text_embeddings(const TextEmbeddingTable& table, const std::filesystem::path& path);

// Seeded random unit vectors standing in for a text encoder's outputs.
TextEmbeddingTable make_synthetic_table(const std::vector<std::string>& labels, std::size_t dim,
                                        std::uint64_t seed);

struct ContrastiveBatch {
    Tensor skeleton;                  // (N, D)
    Tensor text;                      // (N, D), paired by row
    std::vector<std::string> labels;  // (N)
    double temperature = 0.07;
};

// Row-stochastic target: y[i][j] > 0 iff labels match, rows sum to 1.
Tensor target_matrix(const std::vector<std::string>& labels);

// Eq. 3: P_s2t[i][j] = softmax_j cos(z^s_i, z^t_j)/tau, and the transpose
// direction. Rows sum to 1.
std::pair<Tensor, Tensor> similarity_distributions(const ContrastiveBatch& batch);

// Eq. 4 with row-normalized targets:
// 1/2 * mean_i [KL(y_i || P_s2t[i]) + KL(y_i || P_t2s[i])].
double contrastive_loss(const ContrastiveBatch& batch, const Tensor& targets);

// Eq. 6: mean cross-entropy of logits against labels plus the contrastive
// term on semantic tokens. class_order maps labels to logit columns.
double loss_se(const Tensor& z_g, const Tensor& logits, const std::vector<std::string>& labels,
               const TextEmbeddingTable& table, double tau,
               const std::vector<std::string>& class_order);

// Eq. 5: cross-entropy plus half the sum of contrastive terms on the
// reduced spatial and temporal tokens (already pooled to text_dim).
double loss_st(const Tensor& z_s_reduced, const Tensor& z_t_reduced, const Tensor& z_g,
               const Tensor& logits, const std::vector<std::string>& labels,
               const TextEmbeddingTable& table, double tau,
               const std::vector<std::string>& class_order);

// Autodiff builder shared by both losses.
ad::NodePtr contrastive_loss_node(const ad::NodePtr& skeleton, const Tensor& text,
                                  const Tensor& targets, double tau);

enum class LossKind { SemanticOnly, SpatioTemporal };  // L_se vs L_st

struct AlignConfig {
    encoder::EncoderConfig encoder;
    std::size_t semantic_dim = 768;
    std::size_t text_dim = 768;
    double tau = 0.07;
};

// Encoder + tokenizer + alignment heads over a fixed manifest collection.
// Channel-mixing weights are shared across datasets; per-dataset joint
// graphs carry the topology, and spatial tokens are unified to the global
// length before pooling.
class AlignModel {
public:
    AlignModel(AlignConfig config, std::vector<skeldata::DatasetManifest> manifests);

    void init_params(ParameterStore& params, std::uint64_t seed) const;

    const AlignConfig& config() const { return config_; }
    const std::vector<std::string>& class_order() const { return class_order_; }
    const encoder::Encoder& skeleton_encoder() const { return encoder_; }
    encoder::Encoder& skeleton_encoder() { return encoder_; }
    const tokenizer::SkeletonTokenizer& skeleton_tokenizer() const { return tokenizer_; }
    std::size_t spatial_positions() const { return spatial_positions_; }
    const encoder::JointGraph& graph_for(std::size_t joint_count) const;

    struct SampleNodes {
        ad::NodePtr semantic;           // (semantic_dim)
        ad::NodePtr spatial_unified;    // (L_s/C, C), masked
        ad::NodePtr temporal;           // (T, C)
        std::size_t valid_spatial = 0;  // joints
    };
    SampleNodes build_sample(const skeldata::SkeletonSequence& seq64,
                             const ad::LeafMap& leaves) const;

    struct BatchLoss {
        ad::NodePtr total;
        double ce = 0.0;
        double con = 0.0;
        std::size_t correct = 0;  // argmax(logits) == label
    };
    BatchLoss batch_loss(const std::vector<const skeldata::SkeletonSequence*>& batch,
                         const TextEmbeddingTable& table, const ad::LeafMap& leaves,
                         LossKind kind) const;

    // Plain classification of one sequence via the z_g head.
    std::string classify(const skeldata::SkeletonSequence& seq64,
                         const ParameterStore& params) const;

    // Semantic token for one sequence (used by the decoder bridge).
    Tensor semantic_token(const skeldata::SkeletonSequence& seq64,
                          const ParameterStore& params) const;
    // Unified masked spatial positions + temporal positions.
    std::pair<Tensor, Tensor> spatiotemporal_tokens(const skeldata::SkeletonSequence& seq64,
                                                    const ParameterStore& params) const;

private:
    AlignConfig config_;
    std::vector<skeldata::DatasetManifest> manifests_;
    encoder::Encoder encoder_;
    tokenizer::SkeletonTokenizer tokenizer_;
    std::map<std::size_t, encoder::JointGraph> graphs_;
    std::vector<std::string> class_order_;
    std::size_t spatial_positions_ = 0;  // L_spatial / C
};

struct PretrainSchedule {
    std::size_t epochs = 20;
    double base_lr = 0.1;
    double momentum = 0.9;
    std::size_t warmup_epochs = 5;
    std::vector<std::size_t> decay_epochs = {10, 15};
    double decay_factor = 0.1;
    std::size_t batch_size = 16;

    // §4.2 constants: 200 epochs, decay at 100/150/175, batch 64.
    static PretrainSchedule paper_scale();
};

// Linear warmup from base_lr/10 over the first warmup_epochs, then a
// decay_factor multiplier at each configured epoch. epoch is 1-based.
double scheduled_lr(const PretrainSchedule& schedule, std::size_t epoch);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double ce = 0.0;
    double con = 0.0;
    double accuracy = 0.0;
};

struct PretrainOptions {
    LossKind loss = LossKind::SemanticOnly;
    PretrainSchedule schedule;
    std::uint64_t seed = 0;
    std::size_t start_epoch = 1;  // resume support
    std::filesystem::path metrics_log;  // append-only when nonempty
};

struct PretrainResult {
    std::vector<EpochMetrics> history;
};

// SGD-with-momentum training of encoder + tokenizer + heads over the chosen
// loss. Sequences are resampled to 64 frames up front. Deterministic under
// (datasets, seed). Throws DivergenceError on NaN loss.
PretrainResult pretrain(const AlignModel& model, ParameterStore& params,
                        const std::vector<skeldata::LoadedDataset>& datasets,
                        const TextEmbeddingTable& table, const PretrainOptions& options);

}  // namespace emotok::align
