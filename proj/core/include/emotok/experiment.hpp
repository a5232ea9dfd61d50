#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emotok/align.hpp"
#include "emotok/bridge.hpp"
#include "emotok/evalkit.hpp"
#include "emotok/llm_client.hpp"
#include "emotok/skeldata.hpp"

namespace emotok::cli {

enum class Granularity { Semantic, SpatioTemporal };
enum class Strategy { Separate, Joint };
enum class TaskOrder { DescriptionThenRecognition, RecognitionThenDescription };
enum class Backend { Tiny, Remote };

// One experiment, fully specified. Snapshotted into each run directory as
// config.json; unknown keys in a config file are rejected.
struct ExperimentConfig {
    std::vector<std::string> manifests;
    std::string text_embeddings;  // path; empty -> synthesized from (labels, seed)
    std::string lexicon;          // path; empty -> built-in defaults

    Granularity granularity = Granularity::Semantic;
    Strategy strategy = Strategy::Joint;
    TaskOrder order = TaskOrder::DescriptionThenRecognition;
    align::LossKind loss = align::LossKind::SemanticOnly;
    unify::PaddingPolicy padding = unify::PaddingPolicy::DropFromContext;
    evalkit::OutputFormat format = evalkit::OutputFormat::B;
    Backend backend = Backend::Tiny;

    double tau = 0.07;
    std::size_t channels = 64;
    std::size_t encoder_layers = 3;
    std::size_t temporal_kernel = 3;
    std::size_t semantic_dim = 768;
    std::size_t text_dim = 768;

    std::size_t d_model = 256;
    std::size_t decoder_layers = 2;
    std::size_t decoder_heads = 4;
    std::size_t decoder_context = 128;
    std::size_t lora_rank = 64;
    double lora_alpha = 16.0;
    double lora_dropout = 0.05;

    // desk-scale schedules; --paper-scale swaps in the published constants
    std::size_t pretrain_epochs = 20;
    double pretrain_lr = 0.02;
    double pretrain_momentum = 0.9;
    std::size_t warmup_epochs = 5;
    std::vector<std::size_t> decay_epochs = {10, 15};
    std::size_t pretrain_batch = 16;

    std::size_t base_steps = 400;
    std::size_t base_batch = 8;
    double base_lr = 3e-3;
    std::size_t finetune_steps = 600;
    std::size_t finetune_batch = 8;
    double finetune_lr = 2e-3;

    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    bool paper_scale = false;

    std::string remote_host = "127.0.0.1";
    int remote_port = 8080;
    std::string remote_path = "/v1/generate";

    std::string out_dir = "runs";
};

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);

// Layout of one immutable run directory.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path inputs_hash() const { return root / "inputs.sha256"; }
    std::filesystem::path align_ckpt(const std::string& dataset = "") const {
        return root / "checkpoints" /
               (dataset.empty() ? "align.ckpt" : "align_" + dataset + ".ckpt");
    }
    std::filesystem::path decoder_base_ckpt(const std::string& dataset = "") const {
        return root / "checkpoints" /
               (dataset.empty() ? "decoder_base.ckpt" : "decoder_base_" + dataset + ".ckpt");
    }
    std::filesystem::path adapters_ckpt(const std::string& stage,
                                        const std::string& dataset = "") const {
        return root / "checkpoints" /
               ("adapters_" + stage + (dataset.empty() ? "" : "_" + dataset) + ".ckpt");
    }
    std::filesystem::path metrics_log(const std::string& stage) const {
        return root / ("metrics_" + stage + ".log");
    }
    std::filesystem::path report(const std::string& task) const {
        return root / ("report_" + task + ".json");
    }
    std::filesystem::path stage_order_file() const { return root / "stage_order.txt"; }
    std::filesystem::path finalized() const { return root / "FINALIZED"; }

    bool is_finalized() const { return std::filesystem::exists(finalized()); }
    void ensure_writable() const;  // throws on a finalized run
    void create() const;
};

// Shared state for one experiment: datasets, lexicon, text table, and the
// alignment models (one under the joint strategy, one per dataset when
// separate).
class Pipeline {
public:
    explicit Pipeline(ExperimentConfig config);

    const ExperimentConfig& config() const { return config_; }
    const evalkit::LabelLexicon& lexicon() const { return lexicon_; }
    const align::TextEmbeddingTable& text_table() const { return table_; }
    const std::vector<skeldata::LoadedDataset>& datasets() const { return datasets_; }
    const std::vector<std::string>& model_names() const { return model_names_; }
    align::AlignModel& model(std::size_t i) { return *models_[i]; }
    std::size_t model_count() const { return models_.size(); }

    // Datasets covered by model i (all of them under joint training).
    std::vector<const skeldata::LoadedDataset*> datasets_for(std::size_t model_index) const;

    std::string inputs_digest() const;

    // ---- stages ----
    void pretrain(const RunPaths& run, bool resume);
    void finetune(const RunPaths& run);

    struct EvalSummary {
        double recognition_accuracy = 0.0;
        double rouge1 = 0.0;
        double rougeL = 0.0;
        double bleu = 0.0;
        double meteor = 0.0;
        std::size_t recognition_records = 0;
        std::size_t description_records = 0;
    };
    EvalSummary evaluate(const RunPaths& run, const std::string& split, bool finalize = true);

    struct DescribeResult {
        std::string label;  // canonical or "Error"
        std::string description;
    };
    DescribeResult describe(const RunPaths& run, const std::filesystem::path& sample_path);

    // ---- helpers shared with tests ----
    bridge::PromptExchange make_exchange(std::size_t model_index,
                                         const skeldata::SkeletonSequence& seq64,
                                         const ParameterStore& align_params,
                                         bridge::PromptKind kind) const;
    std::string reference_description(const std::string& dataset_label) const;
    std::string recognition_completion(const std::string& dataset_label) const;
    std::unique_ptr<bridge::SkeletonAwareDecoder> make_decoder() const;

    align::PretrainSchedule pretrain_schedule() const;
    bridge::TrainConfig base_train_config() const;
    bridge::TrainConfig finetune_config(bridge::PromptKind stage) const;

private:
    struct ModelParams {
        ParameterStore store;
    };

    std::vector<bridge::PromptExchange> build_exchanges(std::size_t model_index,
                                                        const ParameterStore& align_params,
                                                        bridge::PromptKind kind,
                                                        const std::string& split) const;
    std::vector<skeldata::LoadedDataset> pretrain_datasets(std::size_t model_index) const;
    std::vector<const skeldata::SkeletonSequence*> split_sequences(
        const skeldata::LoadedDataset& ds, const std::string& split) const;

    ExperimentConfig config_;
    evalkit::LabelLexicon lexicon_;
    align::TextEmbeddingTable table_;
    std::vector<skeldata::LoadedDataset> datasets_;
    std::vector<std::unique_ptr<align::AlignModel>> models_;
    std::vector<std::string> model_names_;  // "" for joint, dataset name otherwise
};

// ---- command entry points (the CLI is a thin wrapper over these) ----

struct SynthOptions {
    std::string profile = "emilya-like";  // emilya-like | kdae-like | egbm-like | custom
    std::size_t joints = 16;              // custom profile only
    double fps = 60.0;
    std::vector<std::string> labels;
    std::size_t samples_per_label = 8;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "data";
    bool emit_embeddings = true;
    std::size_t embedding_dim = 768;
};

// Writes dataset + text embeddings + default lexicon; returns manifest path.
std::filesystem::path cmd_synth(const SynthOptions& options);

// Loads and validates a manifest; returns a printable report.
std::string cmd_ingest(const std::filesystem::path& manifest);

RunPaths open_run(const ExperimentConfig& config, const std::string& run_name);

}  // namespace emotok::cli
