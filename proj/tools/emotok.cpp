#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "emotok/errors.hpp"
#include "emotok/experiment.hpp"

namespace cli = emotok::cli;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string from_run;
    std::string run_name;
    std::string out_dir;
    std::string backend, order, granularity, strategy, format;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool paper_scale = false;
};

void add_global_flags(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_path, "Experiment config JSON");
    cmd->add_option("--from-run", g.from_run, "Reuse the config snapshot of an existing run");
    cmd->add_option("--run-name", g.run_name, "Run directory name (derived from config if unset)");
    cmd->add_option("--out-dir", g.out_dir, "Override config out_dir");
    cmd->add_option("--seed", g.seed, "Override config seed")->each([&g](const std::string&) {
        g.seed_set = true;
    });
    cmd->add_flag("--paper-scale", g.paper_scale,
                  "Use the published training constants instead of desk-scale schedules");
    cmd->add_option("--backend", g.backend, "tiny|remote");
    cmd->add_option("--order", g.order, "d2r|r2d");
    cmd->add_option("--granularity", g.granularity, "semantic|spatiotemporal");
    cmd->add_option("--strategy", g.strategy, "separate|joint");
    cmd->add_option("--format", g.format, "Output format A|B|C");
}

cli::ExperimentConfig resolve_config(const GlobalArgs& g) {
    cli::ExperimentConfig config;
    if (!g.from_run.empty()) {
        config = cli::load_config(std::filesystem::path(g.from_run) / "config.json");
    } else if (!g.config_path.empty()) {
        config = cli::load_config(g.config_path);
    } else {
        throw emotok::ParameterError("either --config or --from-run is required");
    }
    if (!g.out_dir.empty()) config.out_dir = g.out_dir;
    if (g.seed_set) config.seed = g.seed;
    if (g.paper_scale) config.paper_scale = true;
    if (!g.backend.empty()) {
        if (g.backend == "tiny") config.backend = cli::Backend::Tiny;
        else if (g.backend == "remote") config.backend = cli::Backend::Remote;
        else throw emotok::ParameterError("unknown backend: " + g.backend);
    }
    if (!g.order.empty()) {
        if (g.order == "d2r") config.order = cli::TaskOrder::DescriptionThenRecognition;
        else if (g.order == "r2d") config.order = cli::TaskOrder::RecognitionThenDescription;
        else throw emotok::ParameterError("unknown order: " + g.order);
    }
    if (!g.granularity.empty()) {
        if (g.granularity == "semantic") config.granularity = cli::Granularity::Semantic;
        else if (g.granularity == "spatiotemporal")
            config.granularity = cli::Granularity::SpatioTemporal;
        else throw emotok::ParameterError("unknown granularity: " + g.granularity);
    }
    if (!g.strategy.empty()) {
        if (g.strategy == "separate") config.strategy = cli::Strategy::Separate;
        else if (g.strategy == "joint") config.strategy = cli::Strategy::Joint;
        else throw emotok::ParameterError("unknown strategy: " + g.strategy);
    }
    if (!g.format.empty()) config.format = emotok::evalkit::parse_output_format(g.format);
    return config;
}

cli::RunPaths resolve_run(const cli::ExperimentConfig& config, const GlobalArgs& g) {
    if (!g.from_run.empty()) return cli::RunPaths{g.from_run};
    return cli::open_run(config, g.run_name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emotok: skeleton-based emotion recognition and description pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic skeleton dataset");
    cli::SynthOptions synth_options;
    std::string synth_out = "data";
    synth->add_option("--profile", synth_options.profile,
                      "emilya-like|kdae-like|egbm-like|custom");
    synth->add_option("--joints", synth_options.joints, "Joint count (custom profile)");
    synth->add_option("--fps", synth_options.fps, "Frame rate (custom profile)");
    synth->add_option("--labels", synth_options.labels, "Labels (custom profile)");
    synth->add_option("--samples-per-label", synth_options.samples_per_label, "Samples per label");
    synth->add_option("--seed", synth_options.seed, "Generator seed");
    synth->add_option("--out-dir", synth_out, "Output directory");
    synth->add_option("--embedding-dim", synth_options.embedding_dim,
                      "Width of the emitted text embeddings");
    synth->add_flag("!--no-embeddings", synth_options.emit_embeddings,
                    "Skip writing text_embeddings.txt");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Load and validate a dataset manifest");
    std::string ingest_manifest;
    ingest->add_option("--manifest", ingest_manifest, "Manifest path")->required();

    // pretrain / finetune / eval / describe
    GlobalArgs pretrain_args, finetune_args, eval_args, describe_args;
    auto* pretrain = app.add_subcommand("pretrain", "Skeleton-language alignment pretraining");
    add_global_flags(pretrain, pretrain_args);
    bool resume = false;
    pretrain->add_flag("--resume", resume, "Continue from the run's align checkpoint");

    auto* finetune = app.add_subcommand("finetune", "LoRA fine-tuning of the decoder");
    add_global_flags(finetune, finetune_args);

    auto* eval = app.add_subcommand("eval", "Generate on a split and score with the protocol");
    add_global_flags(eval, eval_args);
    std::string eval_split = "test";
    bool no_finalize = false;
    eval->add_option("--split", eval_split, "train|test|all");
    eval->add_flag("--no-finalize", no_finalize, "Do not mark the run directory immutable");

    auto* describe = app.add_subcommand("describe", "Label + description for one sample file");
    add_global_flags(describe, describe_args);
    std::string describe_sample;
    describe->add_option("--sample", describe_sample, "Sample file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            synth_options.out_dir = synth_out;
            auto manifest = cli::cmd_synth(synth_options);
            std::cout << "wrote " << manifest.string() << "\n";
            return 0;
        }
        if (ingest->parsed()) {
            std::cout << cli::cmd_ingest(ingest_manifest);
            return 0;
        }
        if (pretrain->parsed()) {
            auto config = resolve_config(pretrain_args);
            auto run = resolve_run(config, pretrain_args);
            cli::Pipeline pipeline(config);
            std::ofstream(run.inputs_hash()) << pipeline.inputs_digest() << "\n";
            pipeline.pretrain(run, resume);
            std::cout << "pretrain complete: " << run.root.string() << "\n";
            return 0;
        }
        if (finetune->parsed()) {
            auto config = resolve_config(finetune_args);
            auto run = resolve_run(config, finetune_args);
            cli::Pipeline pipeline(config);
            pipeline.finetune(run);
            std::cout << "finetune complete: " << run.root.string() << "\n";
            return 0;
        }
        if (eval->parsed()) {
            auto config = resolve_config(eval_args);
            auto run = resolve_run(config, eval_args);
            cli::Pipeline pipeline(config);
            auto summary = pipeline.evaluate(run, eval_split, !no_finalize);
            std::printf("recognition accuracy: %.4f (%zu records)\n",
                        summary.recognition_accuracy, summary.recognition_records);
            std::printf("description rouge1=%.4f rougeL=%.4f bleu=%.4f meteor=%.4f (%zu records)\n",
                        summary.rouge1, summary.rougeL, summary.bleu, summary.meteor,
                        summary.description_records);
            return 0;
        }
        if (describe->parsed()) {
            auto config = resolve_config(describe_args);
            auto run = resolve_run(config, describe_args);
            cli::Pipeline pipeline(config);
            auto result = pipeline.describe(run, describe_sample);
            std::cout << "label: " << result.label << "\n";
            std::cout << "description: " << result.description << "\n";
            return 0;
        }
    } catch (const emotok::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
