#include "emotok/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emotok/checkpoint.hpp"
#include "emotok/errors.hpp"
#include "emotok/hash.hpp"

namespace emotok::cli {

namespace {

using nlohmann::json;

template <typename T>
std::string enum_name(T value, std::initializer_list<std::pair<T, const char*>> table) {
    for (const auto& [v, n] : table) {
        if (v == value) return n;
    }
    throw ParameterError("unknown enum value");
}

template <typename T>
T enum_value(const std::string& name, std::initializer_list<std::pair<T, const char*>> table,
             const char* what) {
    for (const auto& [v, n] : table) {
        if (name == n) return v;
    }
    throw ParameterError(std::string("unknown ") + what + ": " + name);
}

const std::initializer_list<std::pair<Granularity, const char*>> kGranularity = {
    {Granularity::Semantic, "semantic"}, {Granularity::SpatioTemporal, "spatiotemporal"}};
const std::initializer_list<std::pair<Strategy, const char*>> kStrategy = {
    {Strategy::Separate, "separate"}, {Strategy::Joint, "joint"}};
const std::initializer_list<std::pair<TaskOrder, const char*>> kOrder = {
    {TaskOrder::DescriptionThenRecognition, "d2r"},
    {TaskOrder::RecognitionThenDescription, "r2d"}};
const std::initializer_list<std::pair<align::LossKind, const char*>> kLoss = {
    {align::LossKind::SemanticOnly, "se"}, {align::LossKind::SpatioTemporal, "st"}};
const std::initializer_list<std::pair<unify::PaddingPolicy, const char*>> kPadding = {
    {unify::PaddingPolicy::DropFromContext, "drop"}, {unify::PaddingPolicy::ZeroVectors, "zero"}};
const std::initializer_list<std::pair<Backend, const char*>> kBackend = {
    {Backend::Tiny, "tiny"}, {Backend::Remote, "remote"}};

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["manifests"] = c.manifests;
    j["text_embeddings"] = c.text_embeddings;
    j["lexicon"] = c.lexicon;
    j["granularity"] = enum_name(c.granularity, kGranularity);
    j["strategy"] = enum_name(c.strategy, kStrategy);
    j["order"] = enum_name(c.order, kOrder);
    j["loss"] = enum_name(c.loss, kLoss);
    j["padding"] = enum_name(c.padding, kPadding);
    j["format"] = evalkit::format_name(c.format);
    j["backend"] = enum_name(c.backend, kBackend);
    j["tau"] = c.tau;
    j["channels"] = c.channels;
    j["encoder_layers"] = c.encoder_layers;
    j["temporal_kernel"] = c.temporal_kernel;
    j["semantic_dim"] = c.semantic_dim;
    j["text_dim"] = c.text_dim;
    j["d_model"] = c.d_model;
    j["decoder_layers"] = c.decoder_layers;
    j["decoder_heads"] = c.decoder_heads;
    j["decoder_context"] = c.decoder_context;
    j["lora_rank"] = c.lora_rank;
    j["lora_alpha"] = c.lora_alpha;
    j["lora_dropout"] = c.lora_dropout;
    j["pretrain_epochs"] = c.pretrain_epochs;
    j["pretrain_lr"] = c.pretrain_lr;
    j["pretrain_momentum"] = c.pretrain_momentum;
    j["warmup_epochs"] = c.warmup_epochs;
    j["decay_epochs"] = c.decay_epochs;
    j["pretrain_batch"] = c.pretrain_batch;
    j["base_steps"] = c.base_steps;
    j["base_batch"] = c.base_batch;
    j["base_lr"] = c.base_lr;
    j["finetune_steps"] = c.finetune_steps;
    j["finetune_batch"] = c.finetune_batch;
    j["finetune_lr"] = c.finetune_lr;
    j["train_fraction"] = c.train_fraction;
    j["seed"] = c.seed;
    j["paper_scale"] = c.paper_scale;
    j["remote_host"] = c.remote_host;
    j["remote_port"] = c.remote_port;
    j["remote_path"] = c.remote_path;
    j["out_dir"] = c.out_dir;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    // Reject unknown keys so typos never silently fall back to defaults.
    const json reference = config_to_json(ExperimentConfig{});
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!reference.contains(it.key())) {
            throw DataError("config: unknown key '" + it.key() + "'");
        }
    }
    ExperimentConfig c;
    json merged = reference;
    merged.update(j);
    merged.at("manifests").get_to(c.manifests);
    merged.at("text_embeddings").get_to(c.text_embeddings);
    merged.at("lexicon").get_to(c.lexicon);
    c.granularity = enum_value<Granularity>(merged.at("granularity"), kGranularity, "granularity");
    c.strategy = enum_value<Strategy>(merged.at("strategy"), kStrategy, "strategy");
    c.order = enum_value<TaskOrder>(merged.at("order"), kOrder, "order");
    c.loss = enum_value<align::LossKind>(merged.at("loss"), kLoss, "loss");
    c.padding = enum_value<unify::PaddingPolicy>(merged.at("padding"), kPadding, "padding");
    c.format = evalkit::parse_output_format(merged.at("format").get<std::string>());
    c.backend = enum_value<Backend>(merged.at("backend"), kBackend, "backend");
    merged.at("tau").get_to(c.tau);
    merged.at("channels").get_to(c.channels);
    merged.at("encoder_layers").get_to(c.encoder_layers);
    merged.at("temporal_kernel").get_to(c.temporal_kernel);
    merged.at("semantic_dim").get_to(c.semantic_dim);
    merged.at("text_dim").get_to(c.text_dim);
    merged.at("d_model").get_to(c.d_model);
    merged.at("decoder_layers").get_to(c.decoder_layers);
    merged.at("decoder_heads").get_to(c.decoder_heads);
    merged.at("decoder_context").get_to(c.decoder_context);
    merged.at("lora_rank").get_to(c.lora_rank);
    merged.at("lora_alpha").get_to(c.lora_alpha);
    merged.at("lora_dropout").get_to(c.lora_dropout);
    merged.at("pretrain_epochs").get_to(c.pretrain_epochs);
    merged.at("pretrain_lr").get_to(c.pretrain_lr);
    merged.at("pretrain_momentum").get_to(c.pretrain_momentum);
    merged.at("warmup_epochs").get_to(c.warmup_epochs);
    merged.at("decay_epochs").get_to(c.decay_epochs);
    merged.at("pretrain_batch").get_to(c.pretrain_batch);
    merged.at("base_steps").get_to(c.base_steps);
    merged.at("base_batch").get_to(c.base_batch);
    merged.at("base_lr").get_to(c.base_lr);
    merged.at("finetune_steps").get_to(c.finetune_steps);
    merged.at("finetune_batch").get_to(c.finetune_batch);
    merged.at("finetune_lr").get_to(c.finetune_lr);
    merged.at("train_fraction").get_to(c.train_fraction);
    merged.at("seed").get_to(c.seed);
    merged.at("paper_scale").get_to(c.paper_scale);
    merged.at("remote_host").get_to(c.remote_host);
    merged.at("remote_port").get_to(c.remote_port);
    merged.at("remote_path").get_to(c.remote_path);
    merged.at("out_dir").get_to(c.out_dir);
    return c;
}

// Reference descriptions per canonical label. Deliberately free of lexicon
// forms: a model that answers a recognition prompt with description text
// should land on "Error", mirroring the hallucination failure mode.
const std::map<std::string, std::string>& description_corpus() {
    static const std::map<std::string, std::string> corpus = {
        {"Neutral",
         "The posture stays upright and the arms hang loosely at the sides with even steady "
         "steps."},
        {"Happiness",
         "The arms swing freely and the steps are light and quick with an open lifted chest."},
        {"Anger", "The fists are clenched and the torso leans forward with sharp fast gestures."},
        {"Panic",
         "The body turns rapidly from side to side with abrupt jerky motions and hurried steps."},
        {"Fear", "The shoulders are raised and the body shrinks backward away from the open "
                 "space."},
        {"Anxiety",
         "The hands fidget near the chest and the weight shifts restlessly from foot to foot."},
        {"Sadness", "The head hangs low and the arms stay close to the body with slow heavy "
                    "steps."},
        {"Shame", "The gaze drops toward the floor and the torso folds inward while the arms "
                  "cross the chest."},
        {"Disgust",
         "The head turns away and the hands push outward as if rejecting something nearby."},
        {"Surprise",
         "The arms fly outward and the body straightens suddenly with a quick step back."},
    };
    return corpus;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write config: " + path.string());
    out << config_to_json(config).dump(2) << "\n";
}

void RunPaths::ensure_writable() const {
    if (is_finalized()) {
        throw ParameterError("run directory is finalized (immutable): " + root.string());
    }
}

void RunPaths::create() const {
    std::filesystem::create_directories(root / "checkpoints");
}

// ---- Pipeline ----

Pipeline::Pipeline(ExperimentConfig config) : config_(std::move(config)) {
    if (config_.manifests.empty()) throw ParameterError("config: no dataset manifests");
    for (const auto& path : config_.manifests) {
        datasets_.push_back(skeldata::load_dataset(path));
    }
    lexicon_ = config_.lexicon.empty() ? evalkit::LabelLexicon::defaults()
                                       : evalkit::LabelLexicon::load(config_.lexicon);

    std::set<std::string> label_union;
    for (const auto& ds : datasets_) {
        label_union.insert(ds.manifest.labels.begin(), ds.manifest.labels.end());
    }
    std::vector<std::string> labels(label_union.begin(), label_union.end());
    table_ = config_.text_embeddings.empty()
                 ? align::make_synthetic_table(labels, config_.text_dim, config_.seed ^ 0x7e87)
                 : align::load_text_embeddings(config_.text_embeddings, labels);
    if (table_.dim != config_.text_dim) {
        throw ParameterError("text embedding width " + std::to_string(table_.dim) +
                             " does not match config text_dim " +
                             std::to_string(config_.text_dim));
    }

    align::AlignConfig acfg;
    acfg.encoder.base_channels = config_.channels;
    acfg.encoder.layer_count = config_.encoder_layers;
    acfg.encoder.temporal_kernel = config_.temporal_kernel;
    acfg.encoder.frozen = false;  // alignment pretraining trains the encoder
    acfg.semantic_dim = config_.semantic_dim;
    acfg.text_dim = config_.text_dim;
    acfg.tau = config_.tau;

    if (config_.strategy == Strategy::Joint) {
        std::vector<skeldata::DatasetManifest> manifests;
        for (const auto& ds : datasets_) manifests.push_back(ds.manifest);
        models_.push_back(std::make_unique<align::AlignModel>(acfg, manifests));
        model_names_.push_back("");
    } else {
        for (const auto& ds : datasets_) {
            models_.push_back(std::make_unique<align::AlignModel>(
                acfg, std::vector<skeldata::DatasetManifest>{ds.manifest}));
            model_names_.push_back(ds.manifest.name);
        }
    }
}

std::vector<const skeldata::LoadedDataset*> Pipeline::datasets_for(
    std::size_t model_index) const {
    std::vector<const skeldata::LoadedDataset*> out;
    if (config_.strategy == Strategy::Joint) {
        for (const auto& ds : datasets_) out.push_back(&ds);
    } else {
        out.push_back(&datasets_[model_index]);
    }
    return out;
}

std::string Pipeline::inputs_digest() const {
    std::string combined;
    for (const auto& path : config_.manifests) {
        combined += sha256_file_hex(path);
        const auto base = std::filesystem::path(path).parent_path();
        const auto manifest = skeldata::load_manifest(path);
        for (const auto& s : manifest.samples) combined += sha256_file_hex(base / s.path);
    }
    if (!config_.text_embeddings.empty()) combined += sha256_file_hex(config_.text_embeddings);
    if (!config_.lexicon.empty()) combined += sha256_file_hex(config_.lexicon);
    return sha256_hex(combined);
}

align::PretrainSchedule Pipeline::pretrain_schedule() const {
    if (config_.paper_scale) return align::PretrainSchedule::paper_scale();
    align::PretrainSchedule s;
    s.epochs = config_.pretrain_epochs;
    s.base_lr = config_.pretrain_lr;
    s.momentum = config_.pretrain_momentum;
    s.warmup_epochs = config_.warmup_epochs;
    s.decay_epochs = config_.decay_epochs;
    s.batch_size = config_.pretrain_batch;
    return s;
}

bridge::TrainConfig Pipeline::base_train_config() const {
    bridge::TrainConfig c;
    c.steps = config_.base_steps;
    c.batch_size = config_.base_batch;
    c.learning_rate = config_.base_lr;
    c.seed = config_.seed ^ 0xb45e;
    return c;
}

bridge::TrainConfig Pipeline::finetune_config(bridge::PromptKind stage) const {
    if (config_.paper_scale) {
        return stage == bridge::PromptKind::Description
                   ? bridge::TrainConfig::paper_scale_description()
                   : bridge::TrainConfig::paper_scale_recognition();
    }
    bridge::TrainConfig c;
    c.steps = config_.finetune_steps;
    c.batch_size = config_.finetune_batch;
    c.learning_rate = config_.finetune_lr;
    c.seed = config_.seed ^ (stage == bridge::PromptKind::Description ? 0xd15c : 0x4ec0);
    return c;
}

std::string Pipeline::reference_description(const std::string& dataset_label) const {
    const auto canonical = lexicon_.canonical_of(dataset_label).value_or(dataset_label);
    auto it = description_corpus().find(canonical);
    if (it != description_corpus().end()) return it->second;
    return "The movement pattern of this person stands out from an ordinary walk.";
}

std::string Pipeline::recognition_completion(const std::string& dataset_label) const {
    const auto canonical = lexicon_.canonical_of(dataset_label);
    const std::string surface = canonical ? lexicon_.surface_of(*canonical) : dataset_label;
    return evalkit::render_output_format(config_.format, surface);
}

std::unique_ptr<bridge::SkeletonAwareDecoder> Pipeline::make_decoder() const {
    // Corpus: both prompt templates plus every supervision sentence the
    // pipeline can emit, in lexicon order. Deterministic, so the vocabulary
    // is identical across runs and strategies.
    std::vector<std::string> corpus;
    corpus.push_back(bridge::assemble_prompt(bridge::PromptKind::Recognition).rendered_prompt);
    for (const auto& canonical : lexicon_.canonicals()) {
        const std::string& surface = lexicon_.surface_of(canonical);
        corpus.push_back(
            bridge::assemble_prompt(bridge::PromptKind::Description, surface, &lexicon_)
                .rendered_prompt);
        corpus.push_back(evalkit::render_output_format(evalkit::OutputFormat::A, surface));
        corpus.push_back(evalkit::render_output_format(evalkit::OutputFormat::B, surface));
        corpus.push_back(evalkit::render_output_format(evalkit::OutputFormat::C, surface));
        corpus.push_back(reference_description(canonical));
    }
    bridge::BridgeConfig bcfg;
    bcfg.decoder.d_model = config_.d_model;
    bcfg.decoder.layers = config_.decoder_layers;
    bcfg.decoder.heads = config_.decoder_heads;
    bcfg.decoder.context = config_.decoder_context;
    bcfg.decoder.seed = config_.seed ^ 0xdec0;
    bcfg.semantic_dim = config_.semantic_dim;
    bcfg.channel_dim = config_.channels;
    bcfg.lora.rank = config_.lora_rank;
    bcfg.lora.alpha = config_.lora_alpha;
    bcfg.lora.dropout = config_.lora_dropout;
    bcfg.padding = config_.padding;
    return std::make_unique<bridge::SkeletonAwareDecoder>(bcfg,
                                                          bridge::Vocabulary::build(corpus));
}

bridge::PromptExchange Pipeline::make_exchange(std::size_t model_index,
                                               const skeldata::SkeletonSequence& seq64,
                                               const ParameterStore& align_params,
                                               bridge::PromptKind kind) const {
    const auto& model = *models_[model_index];
    bridge::PromptExchange exchange;
    if (kind == bridge::PromptKind::Recognition) {
        exchange = bridge::assemble_prompt(bridge::PromptKind::Recognition);
        exchange.expected_completion = recognition_completion(seq64.label);
    } else {
        const auto canonical = lexicon_.canonical_of(seq64.label);
        const std::string surface =
            canonical ? lexicon_.surface_of(*canonical) : seq64.label;
        exchange = bridge::assemble_prompt(bridge::PromptKind::Description, surface, &lexicon_);
        exchange.expected_completion = reference_description(seq64.label);
    }
    exchange.sample_id = seq64.sample_id;

    if (config_.granularity == Granularity::Semantic) {
        bridge::SkeletonSlot slot;
        slot.kind = bridge::SlotKind::Semantic;
        slot.vector = model.semantic_token(seq64, align_params);
        exchange.skeleton_tokens.push_back(std::move(slot));
        return exchange;
    }
    auto [spatial, temporal] = model.spatiotemporal_tokens(seq64, align_params);
    const std::size_t c = config_.channels;
    const std::size_t spatial_rows = config_.padding == unify::PaddingPolicy::DropFromContext
                                         ? seq64.joint_count
                                         : spatial.dim(0);
    for (std::size_t p = 0; p < spatial_rows; ++p) {
        bridge::SkeletonSlot slot;
        slot.kind = bridge::SlotKind::SpatioTemporal;
        slot.vector = Tensor({c}, {spatial.data() + p * c, spatial.data() + (p + 1) * c});
        exchange.skeleton_tokens.push_back(std::move(slot));
    }
    for (std::size_t t = 0; t < temporal.dim(0); ++t) {
        bridge::SkeletonSlot slot;
        slot.kind = bridge::SlotKind::SpatioTemporal;
        slot.vector = Tensor({c}, {temporal.data() + t * c, temporal.data() + (t + 1) * c});
        exchange.skeleton_tokens.push_back(std::move(slot));
    }
    return exchange;
}

std::vector<const skeldata::SkeletonSequence*> Pipeline::split_sequences(
    const skeldata::LoadedDataset& ds, const std::string& split) const {
    std::vector<const skeldata::SkeletonSequence*> out;
    if (split == "all") {
        for (const auto& seq : ds.sequences) out.push_back(&seq);
        return out;
    }
    skeldata::SplitSpec spec;
    spec.train_fraction = config_.train_fraction;
    spec.seed = config_.seed;
    auto [train, test] = skeldata::split_train_test(ds.manifest, spec);
    const auto& ids = split == "train" ? train : test;
    if (split != "train" && split != "test") {
        throw ParameterError("unknown split: " + split);
    }
    for (auto i : ids) out.push_back(&ds.sequences[i]);
    return out;
}

std::vector<bridge::PromptExchange> Pipeline::build_exchanges(std::size_t model_index,
                                                              const ParameterStore& align_params,
                                                              bridge::PromptKind kind,
                                                              const std::string& split) const {
    std::vector<bridge::PromptExchange> exchanges;
    for (const auto* ds : datasets_for(model_index)) {
        for (const auto* seq : split_sequences(*ds, split)) {
            auto seq64 = skeldata::resample_to_frames(*seq, 64);
            exchanges.push_back(make_exchange(model_index, seq64, align_params, kind));
        }
    }
    return exchanges;
}

void Pipeline::pretrain(const RunPaths& run, bool resume) {
    run.ensure_writable();
    run.create();
    for (std::size_t i = 0; i < models_.size(); ++i) {
        const std::string& name = model_names_[i];
        ParameterStore store;
        align::PretrainOptions options;
        options.loss = config_.loss;
        options.schedule = pretrain_schedule();
        options.seed = config_.seed + i;
        options.metrics_log = run.metrics_log(name.empty() ? "pretrain" : "pretrain_" + name);

        const auto ckpt_path = run.align_ckpt(name);
        std::size_t done = 0;
        if (resume && std::filesystem::exists(ckpt_path)) {
            Checkpoint ckpt = Checkpoint::load(ckpt_path);
            ckpt.restore_into(store);
            done = std::stoul(ckpt.meta.at("epoch"));
            options.start_epoch = done + 1;
        } else {
            models_[i]->init_params(store, config_.seed + i);
        }
        if (done >= options.schedule.epochs) continue;
        options.schedule.epochs -= done;

        auto result = align::pretrain(*models_[i], store, pretrain_datasets(i), table_, options);

        Checkpoint ckpt = Checkpoint::from_store(store);
        ckpt.meta["kind"] = "align";
        ckpt.meta["epoch"] = std::to_string(done + result.history.size());
        ckpt.meta["loss"] = enum_name(config_.loss, kLoss);
        ckpt.save(ckpt_path);
    }
}

std::vector<skeldata::LoadedDataset> Pipeline::pretrain_datasets(std::size_t model_index) const {
    // Alignment pretraining uses the training split only.
    std::vector<skeldata::LoadedDataset> out;
    for (const auto* ds : datasets_for(model_index)) {
        skeldata::LoadedDataset subset;
        subset.manifest = ds->manifest;
        for (const auto* seq : split_sequences(*ds, "train")) subset.sequences.push_back(*seq);
        out.push_back(std::move(subset));
    }
    return out;
}

void Pipeline::finetune(const RunPaths& run) {
    if (config_.backend == Backend::Remote) {
        throw ParameterError(
            "finetune requires the tiny decoder backend; remote decoders are inference-only");
    }
    run.ensure_writable();
    run.create();
    auto decoder = make_decoder();
    for (std::size_t i = 0; i < models_.size(); ++i) {
        const std::string& name = model_names_[i];
        const auto align_path = run.align_ckpt(name);
        if (!std::filesystem::exists(align_path)) {
            throw DataError("missing pretrain checkpoint: " + align_path.string() +
                            " (run `emotok pretrain` first)");
        }
        ParameterStore align_params;
        Checkpoint::load(align_path).restore_into(align_params);

        ParameterStore dstore;
        const auto base_path = run.decoder_base_ckpt(name);
        if (std::filesystem::exists(base_path)) {
            Checkpoint ckpt = Checkpoint::load(base_path);
            ckpt.restore_into(dstore);
        } else {
            decoder->init_params(dstore);
            std::vector<bridge::PromptExchange> base_set;
            for (auto kind :
                 {bridge::PromptKind::Recognition, bridge::PromptKind::Description}) {
                for (auto& e : build_exchanges(i, align_params, kind, "train")) {
                    base_set.push_back(std::move(e));
                }
            }
            auto cfg = base_train_config();
            cfg.metrics_log = run.metrics_log(name.empty() ? "base" : "base_" + name);
            decoder->pretrain_base(dstore, base_set, cfg);
            Checkpoint ckpt = Checkpoint::from_store(dstore);
            ckpt.meta["kind"] = "decoder-base";
            std::string words;
            for (const auto& w : decoder->vocab().words()) {
                if (!words.empty()) words += " ";
                words += w;
            }
            ckpt.meta["vocab"] = words;
            ckpt.save(base_path);
        }

        std::vector<bridge::PromptKind> stages;
        if (config_.order == TaskOrder::DescriptionThenRecognition) {
            stages = {bridge::PromptKind::Description, bridge::PromptKind::Recognition};
        } else {
            stages = {bridge::PromptKind::Recognition, bridge::PromptKind::Description};
        }
        for (auto stage : stages) {
            const std::string stage_name =
                stage == bridge::PromptKind::Description ? "description" : "recognition";
            auto exchanges = build_exchanges(i, align_params, stage, "train");
            auto cfg = finetune_config(stage);
            cfg.metrics_log = run.metrics_log("finetune_" + stage_name +
                                              (name.empty() ? "" : "_" + name));
            decoder->finetune(dstore, exchanges, cfg);
            bridge::LoraSpec spec{config_.lora_rank, config_.lora_alpha, config_.lora_dropout};
            bridge::save_adapters(dstore, spec, run.adapters_ckpt(stage_name, name));
        }
        bridge::LoraSpec spec{config_.lora_rank, config_.lora_alpha, config_.lora_dropout};
        bridge::save_adapters(dstore, spec, run.adapters_ckpt("final", name));
    }
    std::ofstream order_file(run.stage_order_file());
    order_file << (config_.order == TaskOrder::DescriptionThenRecognition ? "D->R" : "R->D")
               << "\n";
}

Pipeline::EvalSummary Pipeline::evaluate(const RunPaths& run, const std::string& split,
                                         bool finalize) {
    auto decoder = make_decoder();
    std::vector<evalkit::GenerationRecord> recognition_records;
    std::vector<evalkit::GenerationRecord> description_records;

    bridge::RemoteEndpoint endpoint;
    endpoint.host = config_.remote_host;
    endpoint.port = config_.remote_port;
    endpoint.path = config_.remote_path;

    for (std::size_t i = 0; i < models_.size(); ++i) {
        const std::string& name = model_names_[i];
        ParameterStore align_params;
        Checkpoint::load(run.align_ckpt(name)).restore_into(align_params);

        ParameterStore dstore;
        if (config_.backend == Backend::Tiny) {
            const auto base_path = run.decoder_base_ckpt(name);
            if (!std::filesystem::exists(base_path)) {
                throw DataError("missing decoder checkpoint: " + base_path.string());
            }
            Checkpoint::load(base_path).restore_into(dstore);
            const auto adapters_path = run.adapters_ckpt("final", name);
            if (std::filesystem::exists(adapters_path)) {
                bridge::load_adapters(dstore, adapters_path);
            }
        }

        auto generate = [&](const bridge::PromptExchange& exchange) -> std::string {
            if (config_.backend == Backend::Tiny) {
                bridge::GenerateOptions options;
                options.max_tokens = 48;
                return decoder->generate(dstore, exchange, options);
            }
            bridge::RemoteOptions options;
            options.max_tokens = 48;
            return bridge::remote_decode(endpoint, exchange.rendered_prompt,
                                         exchange.skeleton_tokens, options);
        };

        for (const auto* ds : datasets_for(i)) {
            for (const auto* seq : split_sequences(*ds, split)) {
                auto seq64 = skeldata::resample_to_frames(*seq, 64);

                evalkit::GenerationRecord rec;
                rec.sample_id = seq->sample_id;
                rec.task = "recognition";
                rec.reference_label = seq->label;
                auto rx = make_exchange(i, seq64, align_params, bridge::PromptKind::Recognition);
                try {
                    rec.generated = generate(rx);
                } catch (const TransportError& e) {
                    rec.generated = "";
                    rec.scores["transport_error"] = 1.0;
                }
                rec.extracted = rec.generated.empty()
                                    ? std::string(evalkit::kErrorLabel)
                                    : evalkit::extract_label(rec.generated, lexicon_);
                recognition_records.push_back(std::move(rec));

                evalkit::GenerationRecord drec;
                drec.sample_id = seq->sample_id;
                drec.task = "description";
                drec.reference_label = seq->label;
                drec.reference_description = reference_description(seq->label);
                auto dx = make_exchange(i, seq64, align_params, bridge::PromptKind::Description);
                try {
                    drec.generated = generate(dx);
                } catch (const TransportError& e) {
                    drec.generated = "";
                    drec.scores["transport_error"] = 1.0;
                }
                drec.extracted = evalkit::kErrorLabel;
                if (!drec.generated.empty()) {
                    auto rs = evalkit::rouge(drec.generated, drec.reference_description);
                    drec.scores["rouge1"] = rs.rouge1_f;
                    drec.scores["rougeL"] = rs.rougeL_f;
                    drec.scores["bleu"] = evalkit::bleu(drec.generated,
                                                        drec.reference_description);
                    drec.scores["meteor"] = evalkit::meteor_simplified(
                        drec.generated, drec.reference_description, lexicon_);
                }
                description_records.push_back(std::move(drec));
            }
        }
    }

    if (recognition_records.empty()) {
        throw ParameterError("evaluation split '" + split + "' is empty");
    }

    EvalSummary summary;
    summary.recognition_accuracy = evalkit::accuracy(recognition_records, lexicon_);
    summary.recognition_records = recognition_records.size();
    summary.description_records = description_records.size();
    for (const auto& r : description_records) {
        auto score = [&r](const char* key) {
            auto it = r.scores.find(key);
            return it == r.scores.end() ? 0.0 : it->second;
        };
        summary.rouge1 += score("rouge1");
        summary.rougeL += score("rougeL");
        summary.bleu += score("bleu");
        summary.meteor += score("meteor");
    }
    if (!description_records.empty()) {
        const auto n = static_cast<double>(description_records.size());
        summary.rouge1 /= n;
        summary.rougeL /= n;
        summary.bleu /= n;
        summary.meteor /= n;
    }

    auto write_report = [&](const std::string& task,
                            const std::vector<evalkit::GenerationRecord>& records, json extra) {
        json j;
        j["task"] = task;
        j["split"] = split;
        j["aggregate"] = std::move(extra);
        auto items = json::array();
        for (const auto& r : records) {
            json item;
            item["sample_id"] = r.sample_id;
            item["generated"] = r.generated;
            item["extracted"] = r.extracted;
            item["reference_label"] = r.reference_label;
            if (!r.reference_description.empty()) {
                item["reference_description"] = r.reference_description;
            }
            item["scores"] = r.scores;
            items.push_back(std::move(item));
        }
        j["records"] = std::move(items);
        std::ofstream out(run.report(task));
        if (!out) throw DataError("cannot write report for " + task);
        out << j.dump(2) << "\n";
    };
    run.ensure_writable();
    write_report("recognition", recognition_records,
                 json{{"accuracy", summary.recognition_accuracy}});
    write_report("description", description_records,
                 json{{"rouge1", summary.rouge1},
                      {"rougeL", summary.rougeL},
                      {"bleu", summary.bleu},
                      {"meteor", summary.meteor}});
    if (finalize) {
        std::ofstream marker(run.finalized());
        marker << "finalized\n";
    }
    return summary;
}

Pipeline::DescribeResult Pipeline::describe(const RunPaths& run,
                                            const std::filesystem::path& sample_path) {
    auto seq = skeldata::load_sample(sample_path, "adhoc", sample_path.stem().string());
    auto seq64 = skeldata::resample_to_frames(seq, 64);

    const std::string& name = model_names_[0];
    ParameterStore align_params;
    Checkpoint::load(run.align_ckpt(name)).restore_into(align_params);

    auto decoder = make_decoder();
    ParameterStore dstore;
    bridge::RemoteEndpoint endpoint;
    endpoint.host = config_.remote_host;
    endpoint.port = config_.remote_port;
    endpoint.path = config_.remote_path;
    if (config_.backend == Backend::Tiny) {
        Checkpoint::load(run.decoder_base_ckpt(name)).restore_into(dstore);
        const auto adapters_path = run.adapters_ckpt("final", name);
        if (std::filesystem::exists(adapters_path)) bridge::load_adapters(dstore, adapters_path);
    }
    auto generate = [&](const bridge::PromptExchange& exchange) {
        if (config_.backend == Backend::Tiny) {
            bridge::GenerateOptions options;
            options.max_tokens = 48;
            return decoder->generate(dstore, exchange, options);
        }
        bridge::RemoteOptions options;
        options.max_tokens = 48;
        return bridge::remote_decode(endpoint, exchange.rendered_prompt,
                                     exchange.skeleton_tokens, options);
    };

    DescribeResult result;
    auto rx = make_exchange(0, seq64, align_params, bridge::PromptKind::Recognition);
    result.label = evalkit::extract_label(generate(rx), lexicon_);

    // The description prompt needs a label: use the recognized one, falling
    // back to the alignment classifier when recognition failed.
    std::string prompt_label = result.label;
    if (prompt_label == evalkit::kErrorLabel) {
        prompt_label = models_[0]->classify(seq64, align_params);
        prompt_label = lexicon_.canonical_of(prompt_label).value_or(prompt_label);
    }
    const std::string surface =
        lexicon_.has_canonical(prompt_label) ? lexicon_.surface_of(prompt_label) : prompt_label;

    auto dx = bridge::assemble_prompt(bridge::PromptKind::Description, surface, &lexicon_);
    dx.skeleton_tokens = rx.skeleton_tokens;
    result.description = generate(dx);
    return result;
}

// ---- commands ----

std::filesystem::path cmd_synth(const SynthOptions& options) {
    skeldata::SynthProfile profile;
    if (options.profile == "emilya-like") {
        profile = skeldata::emilya_like_profile(options.seed);
    } else if (options.profile == "kdae-like") {
        profile = skeldata::kdae_like_profile(options.seed);
    } else if (options.profile == "egbm-like") {
        profile = skeldata::egbm_like_profile(options.seed);
    } else if (options.profile == "custom") {
        profile.name = "custom";
        profile.joint_count = options.joints;
        profile.fps = options.fps;
        profile.labels = options.labels;
        profile.seed = options.seed;
    } else {
        throw ParameterError("unknown profile: " + options.profile +
                             " (expected emilya-like|kdae-like|egbm-like|custom)");
    }
    if (options.samples_per_label > 0) profile.samples_per_label = options.samples_per_label;

    auto dataset = skeldata::synthesize_dataset(profile);
    auto manifest_path = skeldata::write_dataset(dataset, options.out_dir);
    if (options.emit_embeddings) {
        auto table = align::make_synthetic_table(profile.labels, options.embedding_dim,
                                                 options.seed ^ 0x7e87);
        align::write_text_embeddings(table, options.out_dir / "text_embeddings.txt");
    }
    evalkit::LabelLexicon::defaults().save(options.out_dir / "lexicon.txt");
    return manifest_path;
}

std::string cmd_ingest(const std::filesystem::path& manifest) {
    auto dataset = skeldata::load_dataset(manifest);
    std::size_t min_frames = dataset.sequences.front().frame_count();
    std::size_t max_frames = min_frames;
    for (const auto& seq : dataset.sequences) {
        min_frames = std::min(min_frames, seq.frame_count());
        max_frames = std::max(max_frames, seq.frame_count());
    }
    std::ostringstream os;
    os << "dataset " << dataset.manifest.name << "\n"
       << "  joints: " << dataset.manifest.joint_count << "\n"
       << "  fps: " << dataset.manifest.fps << "\n"
       << "  labels:";
    for (const auto& l : dataset.manifest.labels) os << " " << l;
    os << "\n  samples: " << dataset.sequences.size() << " (frames " << min_frames << ".."
       << max_frames << ")\n  status: valid\n";
    return os.str();
}

RunPaths open_run(const ExperimentConfig& config, const std::string& run_name) {
    std::string name = run_name;
    if (name.empty()) {
        name = "run-" + sha256_hex(config_to_json(config).dump()).substr(0, 8);
    }
    RunPaths run{std::filesystem::path(config.out_dir) / name};
    run.create();
    if (!std::filesystem::exists(run.config())) {
        save_config(config, run.config());
    }
    return run;
}

}  // namespace emotok::cli
