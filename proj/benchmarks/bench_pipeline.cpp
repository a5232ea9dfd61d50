#include <benchmark/benchmark.h>

#include "emotok/align.hpp"
#include "emotok/bridge.hpp"
#include "emotok/encoder.hpp"
#include "emotok/skeldata.hpp"
#include "emotok/tokenizer.hpp"

using namespace emotok;

namespace {
skeldata::SkeletonSequence sample_sequence(std::size_t joints) {
    skeldata::SynthProfile profile;
    profile.joint_count = joints;
    profile.labels = {"Joy"};
    profile.samples_per_label = 1;
    profile.min_frames = 80;
    profile.max_frames = 80;
    auto ds = skeldata::synthesize_dataset(profile);
    return skeldata::resample_to_frames(ds.sequences[0], 64);
}
}  // namespace

static void BM_EncoderForward(benchmark::State& state) {
    const auto joints = static_cast<std::size_t>(state.range(0));
    encoder::EncoderConfig config;
    config.base_channels = 64;
    config.layer_count = 3;
    config.frozen = false;
    encoder::Encoder enc(config);
    ParameterStore params;
    enc.init_params(params, 5);
    auto graph = encoder::chain_graph(joints);
    auto seq = sample_sequence(joints);
    for (auto _ : state) {
        benchmark::DoNotOptimize(enc.encode(seq, graph, params));
    }
}
BENCHMARK(BM_EncoderForward)->Arg(24)->Arg(28);

static void BM_TokenizerForward(benchmark::State& state) {
    encoder::EncoderConfig config;
    config.base_channels = 64;
    config.frozen = false;
    encoder::Encoder enc(config);
    ParameterStore params;
    enc.init_params(params, 5);
    tokenizer::SkeletonTokenizer tok({64, 768});
    tok.init_params(params, 6);
    auto graph = encoder::chain_graph(28);
    auto features = enc.encode(sample_sequence(28), graph, params);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tok.tokenize(features, params));
    }
}
BENCHMARK(BM_TokenizerForward);

static void BM_DecoderGenerateStep(benchmark::State& state) {
    bridge::BridgeConfig config;
    config.decoder.d_model = 64;
    config.decoder.layers = 2;
    config.decoder.heads = 4;
    config.decoder.context = 64;
    config.semantic_dim = 128;
    config.lora.rank = 8;
    auto vocab = bridge::Vocabulary::build(
        {bridge::assemble_prompt(bridge::PromptKind::Recognition).rendered_prompt,
         "This is a happy person."});
    bridge::SkeletonAwareDecoder decoder(config, vocab);
    ParameterStore params;
    decoder.init_params(params);
    auto exchange = bridge::assemble_prompt(bridge::PromptKind::Recognition);
    bridge::SkeletonSlot slot;
    slot.kind = bridge::SlotKind::Semantic;
    slot.vector = Tensor::full({128}, 0.25);
    exchange.skeleton_tokens.push_back(slot);
    bridge::GenerateOptions options;
    options.max_tokens = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(decoder.generate(params, exchange, options));
    }
}
BENCHMARK(BM_DecoderGenerateStep);
