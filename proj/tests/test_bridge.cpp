#include <doctest.h>

#include <filesystem>
#include <random>

#include "emotok/bridge.hpp"
#include "emotok/checkpoint.hpp"
#include "emotok/gradcheck.hpp"

using namespace emotok;
namespace br = emotok::bridge;

TEST_CASE("projection layer") {
    br::ProjectionLayer layer;
    layer.weight = Tensor::zeros({3, 2});
    layer.bias = Tensor::zeros({3});
    CHECK(br::project(Tensor::from_vector({1.0, 2.0}), layer) == Tensor::zeros({3}));

    layer.weight = Tensor::identity(2);
    layer.bias = Tensor::zeros({2});
    CHECK(br::project(Tensor::from_vector({4.0, -1.0}), layer) ==
          Tensor::from_vector({4.0, -1.0}));

    // paper dims: 768 -> 4096
    br::ProjectionLayer paper;
    paper.weight = Tensor::zeros({4096, 768});
    paper.bias = Tensor::zeros({4096});
    CHECK(br::project(Tensor::zeros({768}), paper).numel() == 4096);

    CHECK_THROWS_AS(br::project(Tensor::from_vector({1.0, 2.0, 3.0}), layer), ParameterError);
}

TEST_CASE("prompt templates are byte-exact") {
    auto rec = br::assemble_prompt(br::PromptKind::Recognition);
    CHECK(rec.rendered_prompt ==
          "#Human: <Skeleton> <SkeletonFeature> </Skeleton> Can you tell me the emotion of this "
          "person? #Assistant:");
    CHECK(rec.rendered_prompt.find('[') == std::string::npos);  // no label slot

    auto lex = evalkit::LabelLexicon::defaults();
    auto desc = br::assemble_prompt(br::PromptKind::Description, "shame", &lex);
    CHECK(desc.rendered_prompt ==
          "#Human: <Skeleton> <SkeletonFeature> </Skeleton> The emotion of this person is "
          "[shame], please tell me some reasons for it. #Assistant:");
    CHECK(desc.label == "shame");

    CHECK_THROWS_AS(br::assemble_prompt(br::PromptKind::Description), ParameterError);
    CHECK_THROWS_AS(br::assemble_prompt(br::PromptKind::Description, "bliss", &lex),
                    ParameterError);
}

TEST_CASE("lora_forward") {
    SUBCASE("zero B leaves the frozen path untouched") {
        std::mt19937_64 rng(3);
        Tensor w = random_uniform({3, 4}, -1.0, 1.0, rng);
        br::LoraAdapter adapter;
        adapter.rank = 2;
        adapter.a = random_uniform({2, 4}, -1.0, 1.0, rng);
        adapter.b = Tensor::zeros({3, 2});
        Tensor x = random_uniform({4}, -1.0, 1.0, rng);

        Tensor expected({3});
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 4; ++j) expected[i] += w.at2(i, j) * x[j];
        }
        CHECK(br::lora_forward(w, adapter, x) == expected);
    }

    SUBCASE("rank 64 with alpha 16 scales by 0.25") {
        br::LoraAdapter adapter;
        adapter.rank = 64;
        adapter.alpha = 16.0;
        CHECK(adapter.scaling() == doctest::Approx(0.25));
    }

    SUBCASE("rank-1 hand computation on a 2-vector") {
        // W = [[1,0],[0,1]], A = [1, 2], B = [3, 4]^T, alpha/r = 2
        Tensor w = Tensor::identity(2);
        br::LoraAdapter adapter;
        adapter.rank = 1;
        adapter.alpha = 2.0;
        adapter.a = Tensor::matrix(1, 2, {1.0, 2.0});
        adapter.b = Tensor::matrix(2, 1, {3.0, 4.0});
        Tensor x = Tensor::from_vector({5.0, 6.0});
        // Ax = 17; scaled B*Ax = 2*[51, 68]; plus Wx = [5, 6]
        auto y = br::lora_forward(w, adapter, x);
        CHECK(y[0] == doctest::Approx(5.0 + 2.0 * 51.0));
        CHECK(y[1] == doctest::Approx(6.0 + 2.0 * 68.0));
    }
}

TEST_CASE("vocabulary") {
    SUBCASE("markers stay atomic and punctuation splits") {
        auto tokens = br::Vocabulary::split(
            "#Human: <Skeleton> <SkeletonFeature> </Skeleton> The emotion is [shame], ok? "
            "#Assistant:");
        std::vector<std::string> expected{"#Human:", "<Skeleton>", "<SkeletonFeature>",
                                          "</Skeleton>", "The", "emotion", "is", "[", "shame",
                                          "]", ",", "ok", "?", "#Assistant:"};
        CHECK(tokens == expected);
    }

    SUBCASE("encode/decode round-trips template sentences") {
        auto vocab = br::Vocabulary::build({"This is a happy person.",
                                            "The emotion of this person is [shame], please."});
        for (const std::string s : {"This is a happy person.",
                                    "The emotion of this person is [shame], please."}) {
            CHECK(vocab.decode(vocab.encode(s)) == s);
        }
    }

    SUBCASE("unknown words map to <unk>") {
        auto vocab = br::Vocabulary::build({"alpha beta"});
        auto ids = vocab.encode("alpha gamma");
        CHECK(ids[0] == vocab.id_of("alpha"));
        CHECK(ids[1] == vocab.unk_id());
    }

    SUBCASE("word list round-trips through from_words") {
        auto vocab = br::Vocabulary::build({"This is a test."});
        auto rebuilt = br::Vocabulary::from_words(vocab.words());
        CHECK(rebuilt.size() == vocab.size());
        CHECK(rebuilt.encode("This is a test.") == vocab.encode("This is a test."));
    }
}

namespace {
struct DecoderFixture {
    br::BridgeConfig config;
    std::unique_ptr<br::SkeletonAwareDecoder> decoder;
    std::vector<br::PromptExchange> exchanges;

    explicit DecoderFixture(std::size_t d_model = 32, std::size_t rank = 4) {
        const std::vector<std::string> surfaces{"happy", "sad"};
        std::vector<std::string> corpus{
            br::assemble_prompt(br::PromptKind::Recognition).rendered_prompt};
        for (const auto& s : surfaces) corpus.push_back("This is a " + s + " person.");

        config.decoder.d_model = d_model;
        config.decoder.layers = 2;
        config.decoder.heads = 2;
        config.decoder.context = 40;
        config.decoder.seed = 11;
        config.semantic_dim = 8;
        config.channel_dim = 4;
        config.lora.rank = rank;
        config.lora.alpha = 2.0 * static_cast<double>(rank);
        config.lora.dropout = 0.05;
        decoder = std::make_unique<br::SkeletonAwareDecoder>(config,
                                                             br::Vocabulary::build(corpus));

        std::mt19937_64 rng(7);
        std::normal_distribution<double> noise(0.0, 0.05);
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t i = 0; i < 6; ++i) {
                auto ex = br::assemble_prompt(br::PromptKind::Recognition);
                ex.expected_completion = "This is a " + surfaces[c] + " person.";
                br::SkeletonSlot slot;
                slot.kind = br::SlotKind::Semantic;
                slot.vector = Tensor({8});
                for (std::size_t d = 0; d < 8; ++d) {
                    slot.vector[d] = (d % 2 == c ? 1.0 : -1.0) + noise(rng);
                }
                ex.skeleton_tokens.push_back(slot);
                exchanges.push_back(ex);
            }
        }
    }
};
}  // namespace

TEST_CASE("zero-initialized adapters leave generation token-identical") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);

    br::GenerateOptions with, without;
    with.use_adapters = true;
    without.use_adapters = false;
    for (const auto& ex : fx.exchanges) {
        CHECK(fx.decoder->generate(params, ex, with) ==
              fx.decoder->generate(params, ex, without));
    }
}

TEST_CASE("greedy decoding is deterministic; sampling is seed-deterministic") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    const auto& ex = fx.exchanges[0];
    CHECK(fx.decoder->generate(params, ex, {}) == fx.decoder->generate(params, ex, {}));

    br::GenerateOptions sampled;
    sampled.sample_seed = 99;
    sampled.sample_temperature = 0.8;
    CHECK(fx.decoder->generate(params, ex, sampled) ==
          fx.decoder->generate(params, ex, sampled));
}

TEST_CASE("Eq. 2 loss covers completion tokens only") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    auto leaves = ad::make_leaves(params);

    // structural check at the loss-op level: masked rows' targets are free
    std::mt19937_64 rng(5);
    auto logits = ad::leaf(random_uniform({4, 6}, -1.0, 1.0, rng));
    std::vector<bool> mask{false, false, true, true};
    auto a = ad::cross_entropy_rows(logits, {0, 1, 2, 3}, &mask);
    auto b = ad::cross_entropy_rows(logits, {5, 2, 2, 3}, &mask);  // prompt targets perturbed
    CHECK(a->value.value() == b->value.value());

    // and the exchange-level loss is finite and positive at init
    auto loss = fx.decoder->exchange_loss_node(fx.exchanges[0], leaves, true, false, false, nullptr);
    CHECK(loss->value.value() > 0.0);
}

TEST_CASE("Eq. 2 gradient through projection and adapters passes finite differences") {
    DecoderFixture fx(16, 2);
    ParameterStore params;
    fx.decoder->init_params(params);
    // adapter-only trainability, as in fine-tuning
    params.set_trainable_prefix(br::SkeletonAwareDecoder::kDecoderPrefix, false);

    // make B nonzero so the adapter path carries signal
    std::mt19937_64 rng(13);
    for (const auto& name : fx.decoder->adapter_param_names()) {
        if (name.find("_b") != std::string::npos && params.get(name).rank() == 2) {
            params.get(name) = random_uniform(params.get(name).shape(), -0.1, 0.1, rng);
        }
    }

    auto build = [&]() {
        auto leaves = ad::make_leaves(params);
        return std::pair{
            fx.decoder->exchange_loss_node(fx.exchanges[0], leaves, true, false, false, nullptr),
            leaves};
    };
    auto loss = [&]() { return build().first->value.value(); };
    auto [root, leaves] = build();
    ad::backward(root);
    auto grads = ad::collect_grads(leaves);
    // gradients exist exactly for adapters + projections
    for (const auto& name : fx.decoder->adapter_param_names()) {
        CHECK(grads.count(name) == 1);
    }
    CHECK(grads.count("decoder/emb") == 0);
    auto report = numerics::finite_diff_check(loss, params, grads, 1e-6, 1e-4);
    INFO("worst ", report.worst_param, " rel ", report.max_rel_error);
    CHECK(report.pass);
}

TEST_CASE("fine-tuning learns slot-conditioned completions and freezes the base") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);

    br::TrainConfig base_cfg;
    base_cfg.steps = 150;
    base_cfg.batch_size = 6;
    base_cfg.learning_rate = 4e-3;
    base_cfg.seed = 21;
    auto base_result = fx.decoder->pretrain_base(params, fx.exchanges, base_cfg);
    CHECK(base_result.loss_curve.back() < base_result.loss_curve.front());

    // snapshot the frozen base
    std::map<std::string, Tensor> base_weights;
    for (const auto& [name, entry] : params.entries()) {
        if (name.rfind("decoder/", 0) == 0) base_weights[name] = entry.value;
    }

    br::TrainConfig ft_cfg;
    ft_cfg.steps = 250;
    ft_cfg.batch_size = 6;
    ft_cfg.learning_rate = 3e-3;
    ft_cfg.seed = 22;
    fx.decoder->finetune(params, fx.exchanges, ft_cfg);

    // frozen-base invariant: bit-identical decoder weights
    for (const auto& [name, w] : base_weights) {
        CHECK(params.get(name) == w);
    }

    std::size_t exact = 0;
    for (const auto& ex : fx.exchanges) {
        if (fx.decoder->generate(params, ex, {}) == ex.expected_completion) ++exact;
    }
    CHECK(exact >= 11);  // >= 11/12 reproduced
}

TEST_CASE("adapter checkpoints round-trip") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    std::mt19937_64 rng(31);
    for (const auto& name : fx.decoder->adapter_param_names()) {
        params.get(name) = random_uniform(params.get(name).shape(), -0.5, 0.5, rng);
    }
    auto path = std::filesystem::temp_directory_path() / "emotok_adapters_test.ckpt";
    br::save_adapters(params, fx.config.lora, path);

    ParameterStore fresh;
    fx.decoder->init_params(fresh);
    br::load_adapters(fresh, path);
    for (const auto& name : fx.decoder->adapter_param_names()) {
        CHECK(fresh.get(name) == params.get(name));
    }
    std::filesystem::remove(path);

    // non-adapter checkpoints are rejected
    Checkpoint junk;
    junk.meta["kind"] = "align";
    auto junk_path = std::filesystem::temp_directory_path() / "emotok_junk.ckpt";
    junk.save(junk_path);
    CHECK_THROWS_AS(br::load_adapters(fresh, junk_path), DataError);
    std::filesystem::remove(junk_path);
}

TEST_CASE("training rejects bad inputs") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    br::TrainConfig cfg;
    CHECK_THROWS_AS(fx.decoder->finetune(params, {}, cfg), ParameterError);

    auto no_completion = fx.exchanges[0];
    no_completion.expected_completion.clear();
    CHECK_THROWS_AS(fx.decoder->finetune(params, {no_completion}, cfg), ParameterError);
}

TEST_CASE("paper-scale fine-tuning constants round-trip through the config") {
    auto desc = br::TrainConfig::paper_scale_description();
    CHECK(desc.steps == 10000);
    CHECK(desc.batch_size == 16);
    CHECK(desc.learning_rate == doctest::Approx(1e-5));
    auto rec = br::TrainConfig::paper_scale_recognition();
    CHECK(rec.steps == 800000);
    CHECK(rec.batch_size == 64);
    CHECK(rec.learning_rate == doctest::Approx(1e-5));
}

TEST_CASE("context overflow is reported") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    auto ex = fx.exchanges[0];
    for (int i = 0; i < 40; ++i) {
        br::SkeletonSlot slot;
        slot.kind = br::SlotKind::Semantic;
        slot.vector = Tensor::zeros({8});
        ex.skeleton_tokens.push_back(slot);
    }
    auto leaves = ad::make_leaves(params);
    CHECK_THROWS_AS(fx.decoder->exchange_loss_node(ex, leaves, true, false, false, nullptr),
                    ParameterError);
}

TEST_CASE("spatio-temporal slots project through the channel-width projection") {
    DecoderFixture fx;
    ParameterStore params;
    fx.decoder->init_params(params);
    auto ex = br::assemble_prompt(br::PromptKind::Recognition);
    ex.expected_completion = "This is a happy person.";
    for (int i = 0; i < 3; ++i) {
        br::SkeletonSlot slot;
        slot.kind = br::SlotKind::SpatioTemporal;
        slot.vector = Tensor::full({4}, 0.5);
        ex.skeleton_tokens.push_back(slot);
    }
    CHECK_NOTHROW(fx.decoder->generate(params, ex, {}));

    // mismatched slot width is rejected
    ex.skeleton_tokens[0].vector = Tensor::full({5}, 0.5);
    CHECK_THROWS_AS(fx.decoder->generate(params, ex, {}), ParameterError);
}
