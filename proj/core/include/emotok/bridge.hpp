#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emotok/autodiff.hpp"
#include "emotok/evalkit.hpp"
#include "emotok/params.hpp"
#include "emotok/tensor.hpp"
#include "emotok/unify.hpp"

namespace emotok::bridge {

// ---- projection into decoder space ----

struct ProjectionLayer {
    Tensor weight;  // (d_llm, d_in)
    Tensor bias;    // (d_llm)
};

// Affine map token -> decoder embedding space.
Tensor project(const Tensor& token, const ProjectionLayer& layer);

// ---- prompts ----

enum class PromptKind { Recognition, Description };

enum class SlotKind { Semantic, SpatioTemporal };

struct SkeletonSlot {
    SlotKind kind = SlotKind::Semantic;
    Tensor vector;  // semantic_dim or channel_dim wide
};

struct PromptExchange {
    PromptKind kind = PromptKind::Recognition;
    std::string label;                  // Description only
    std::string rendered_prompt;        // byte-exact template text
    std::string expected_completion;    // supervision target (empty at inference)
    std::vector<SkeletonSlot> skeleton_tokens;
    std::string sample_id;
};

// Byte-exact conversation templates. Description requires a label; when a
// lexicon is supplied the label must resolve to a known emotion.
PromptExchange assemble_prompt(PromptKind kind, const std::string& label = "",
                               const evalkit::LabelLexicon* lexicon = nullptr);

// ---- LoRA ----

struct LoraAdapter {
    Tensor a;  // (r, d_in)
    Tensor b;  // (d_out, r), zero-initialized
    std::size_t rank = 64;
    double alpha = 16.0;
    double dropout = 0.05;

    double scaling() const { return alpha / static_cast<double>(rank); }
};

// W_frozen x + (alpha/r) B (A x); dropout is a training-time concern and not
// applied here.
Tensor lora_forward(const Tensor& w_frozen, const LoraAdapter& adapter, const Tensor& x);

struct LoraSpec {
    std::size_t rank = 64;
    double alpha = 16.0;
    double dropout = 0.05;
};

// ---- word-level vocabulary ----

// Word-level tokens with punctuation split off; the conversation markers
// (#Human:, #Assistant:, <Skeleton>, </Skeleton>, <SkeletonFeature>) stay atomic.
class Vocabulary {
public:
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kEos = "<eos>";

    static std::vector<std::string> split(const std::string& text);
    static Vocabulary build(const std::vector<std::string>& corpus);
    static Vocabulary from_words(const std::vector<std::string>& words);  // checkpoint restore

    std::size_t size() const { return words_.size(); }
    int id_of(const std::string& word) const;  // unk id for unknown words
    const std::string& word(std::size_t id) const { return words_.at(id); }
    int unk_id() const { return unk_id_; }
    int eos_id() const { return eos_id_; }

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;  // spacing-aware join

    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
    int unk_id_ = 0;
    int eos_id_ = 0;
};

// ---- the tiny decoder ----

struct TinyDecoderConfig {
    std::size_t d_model = 256;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t context = 128;  // text positions + skeleton token slots
    std::size_t ff_mult = 4;
    std::uint64_t seed = 7;
};

struct BridgeConfig {
    TinyDecoderConfig decoder;
    std::size_t semantic_dim = 768;  // width of semantic skeleton tokens
    std::size_t channel_dim = 64;    // width of spatio-temporal token slots
    LoraSpec lora;
    unify::PaddingPolicy padding = unify::PaddingPolicy::DropFromContext;
};

struct GenerateOptions {
    std::size_t max_tokens = 32;
    std::optional<std::uint64_t> sample_seed;  // greedy when unset
    double sample_temperature = 1.0;
    bool use_adapters = true;
};

struct TrainConfig {
    std::size_t steps = 600;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::filesystem::path metrics_log;  // append-only when nonempty

    // §4.2 constants, kept wired through the config surface.
    static TrainConfig paper_scale_description();  // 10,000 steps, batch 16, lr 1e-5
    static TrainConfig paper_scale_recognition();  // 800,000 steps, batch 64, lr 1e-5
};

struct TrainResult {
    std::vector<double> loss_curve;  // per step
};

// Word-level causal transformer with LoRA-adapted attention query/value
// projections, plus per-granularity projections from skeleton token space
// into the embedding space. The frozen/trainable split lives in the
// ParameterStore flags: "decoder/" is the base, "lora/" the adapters,
// "bridge/" the projections.
class SkeletonAwareDecoder {
public:
    static constexpr const char* kDecoderPrefix = "decoder/";
    static constexpr const char* kLoraPrefix = "lora/";
    static constexpr const char* kBridgePrefix = "bridge/";

    SkeletonAwareDecoder(BridgeConfig config, Vocabulary vocab);

    const BridgeConfig& config() const { return config_; }
    const Vocabulary& vocab() const { return vocab_; }

    // Base weights (trainable until frozen) + projections. LoRA B matrices
    // start at zero so adapters are inert before training.
    void init_params(ParameterStore& params) const;

    // Base training on teacher-forced exchanges with skeleton slots zeroed
    // (the desk-scale stand-in for a pretrained base model). Trains
    // "decoder/" only; Adam.
    TrainResult pretrain_base(ParameterStore& params, const std::vector<PromptExchange>& exchanges,
                              const TrainConfig& config) const;

    // Eq. 2 fine-tuning: next-token cross-entropy over completion tokens
    // only; updates adapters + projections, base stays bit-identical.
    TrainResult finetune(ParameterStore& params, const std::vector<PromptExchange>& exchanges,
                         const TrainConfig& config) const;

    // Scalar loss node for one exchange (gradient-check surface).
    // zero_slots replaces skeleton slots with zero embeddings (base
    // pretraining); use_adapters attaches the LoRA terms. The projection
    // applies whenever slots are not zeroed.
    ad::NodePtr exchange_loss_node(const PromptExchange& exchange, const ad::LeafMap& leaves,
                                   bool use_adapters, bool zero_slots, bool training,
                                   std::mt19937_64* dropout_rng) const;

    std::string generate(const ParameterStore& params, const PromptExchange& exchange,
                         const GenerateOptions& options = {}) const;

    // Names of everything the fine-tuning stage may update.
    std::vector<std::string> adapter_param_names() const;

private:
    struct ContextItem {
        int token_id = -1;    // >= 0 for text tokens
        int slot_index = -1;  // >= 0 for skeleton slots
    };

    std::vector<ContextItem> prompt_items(const PromptExchange& exchange) const;
    ad::NodePtr embed_sequence(const std::vector<ContextItem>& items,
                               const std::vector<SkeletonSlot>& slots, const ad::LeafMap& leaves,
                               bool project_slots) const;
    ad::NodePtr forward_logits(const std::vector<ContextItem>& items,
                               const std::vector<SkeletonSlot>& slots, const ad::LeafMap& leaves,
                               bool use_adapters, bool zero_slots, bool training,
                               std::mt19937_64* dropout_rng) const;

    TrainResult train_loop(ParameterStore& params, const std::vector<PromptExchange>& exchanges,
                           const TrainConfig& config, bool adapters_only) const;

    BridgeConfig config_;
    Vocabulary vocab_;
};

// Adapter checkpoint: versioned container holding r/alpha/dropout and the
// A/B tensors (plus projections).
void save_adapters(const ParameterStore& params, const LoraSpec& spec,
                   const std::filesystem::path& path);
void load_adapters(ParameterStore& params, const std::filesystem::path& path);

}  // namespace emotok::bridge
