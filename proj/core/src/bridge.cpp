#include "emotok/bridge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "emotok/checkpoint.hpp"
#include "emotok/errors.hpp"

namespace emotok::bridge {

Tensor project(const Tensor& token, const ProjectionLayer& layer) {
    if (layer.weight.rank() != 2 || token.rank() != 1 ||
        layer.weight.dim(1) != token.dim(0) || layer.bias.dim(0) != layer.weight.dim(0)) {
        throw ParameterError("project: dimension mismatch");
    }
    const std::size_t out = layer.weight.dim(0), in = layer.weight.dim(1);
    Tensor y({out});
    for (std::size_t i = 0; i < out; ++i) {
        double s = layer.bias[i];
        const double* row = layer.weight.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) s += row[j] * token[j];
        y[i] = s;
    }
    return y;
}

PromptExchange assemble_prompt(PromptKind kind, const std::string& label,
                               const evalkit::LabelLexicon* lexicon) {
    PromptExchange exchange;
    exchange.kind = kind;
    if (kind == PromptKind::Recognition) {
        exchange.rendered_prompt =
            "#Human: <Skeleton> <SkeletonFeature> </Skeleton> Can you tell me the emotion of "
            "this person? #Assistant:";
        return exchange;
    }
    if (label.empty()) {
        throw ParameterError("assemble_prompt: Description requires a label");
    }
    if (lexicon && !lexicon->canonical_of(label)) {
        throw ParameterError("assemble_prompt: label '" + label + "' is not in the lexicon");
    }
    exchange.label = label;
    exchange.rendered_prompt =
        "#Human: <Skeleton> <SkeletonFeature> </Skeleton> The emotion of this person is [" +
        label + "], please tell me some reasons for it. #Assistant:";
    return exchange;
}

Tensor lora_forward(const Tensor& w_frozen, const LoraAdapter& adapter, const Tensor& x) {
    if (w_frozen.rank() != 2 || x.rank() != 1 || w_frozen.dim(1) != x.dim(0)) {
        throw ParameterError("lora_forward: base shape mismatch");
    }
    const std::size_t d_out = w_frozen.dim(0), d_in = w_frozen.dim(1);
    if (adapter.a.rank() != 2 || adapter.b.rank() != 2 || adapter.a.dim(0) != adapter.rank ||
        adapter.a.dim(1) != d_in || adapter.b.dim(0) != d_out ||
        adapter.b.dim(1) != adapter.rank) {
        throw ParameterError("lora_forward: adapter shape mismatch");
    }
    Tensor y({d_out});
    for (std::size_t i = 0; i < d_out; ++i) {
        double s = 0.0;
        const double* row = w_frozen.data() + i * d_in;
        for (std::size_t j = 0; j < d_in; ++j) s += row[j] * x[j];
        y[i] = s;
    }
    // (alpha/r) * B (A x)
    Tensor ax({adapter.rank});
    for (std::size_t r = 0; r < adapter.rank; ++r) {
        double s = 0.0;
        const double* row = adapter.a.data() + r * d_in;
        for (std::size_t j = 0; j < d_in; ++j) s += row[j] * x[j];
        ax[r] = s;
    }
    const double scaling = adapter.scaling();
    for (std::size_t i = 0; i < d_out; ++i) {
        double s = 0.0;
        const double* row = adapter.b.data() + i * adapter.rank;
        for (std::size_t r = 0; r < adapter.rank; ++r) s += row[r] * ax[r];
        y[i] += scaling * s;
    }
    return y;
}

// ---- vocabulary ----

namespace {
const std::vector<std::string>& markers() {
    static const std::vector<std::string> m = {"#Human:", "#Assistant:", "<Skeleton>",
                                               "</Skeleton>", "<SkeletonFeature>"};
    return m;
}

bool is_marker(const std::string& piece) {
    const auto& m = markers();
    return std::find(m.begin(), m.end(), piece) != m.end();
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\'';
}
}  // namespace

std::vector<std::string> Vocabulary::split(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        const std::string piece = text.substr(i, j - i);
        i = j;
        if (is_marker(piece)) {
            tokens.push_back(piece);
            continue;
        }
        std::string current;
        for (char c : piece) {
            if (is_word_char(c)) {
                current.push_back(c);
            } else {
                if (!current.empty()) {
                    tokens.push_back(current);
                    current.clear();
                }
                tokens.emplace_back(1, c);
            }
        }
        if (!current.empty()) tokens.push_back(current);
    }
    return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
    Vocabulary v;
    auto add = [&v](const std::string& w) {
        if (v.index_.count(w)) return;
        v.index_.emplace(w, static_cast<int>(v.words_.size()));
        v.words_.push_back(w);
    };
    add(kUnk);
    add(kEos);
    for (const auto& m : markers()) add(m);
    for (const auto& text : corpus) {
        for (const auto& tok : split(text)) add(tok);
    }
    v.unk_id_ = v.index_.at(kUnk);
    v.eos_id_ = v.index_.at(kEos);
    return v;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words) {
        if (v.index_.count(w)) throw ParameterError("vocabulary: duplicate word " + w);
        v.index_.emplace(w, static_cast<int>(v.words_.size()));
        v.words_.push_back(w);
    }
    if (!v.index_.count(kUnk) || !v.index_.count(kEos)) {
        throw ParameterError("vocabulary: word list lacks <unk>/<eos>");
    }
    v.unk_id_ = v.index_.at(kUnk);
    v.eos_id_ = v.index_.at(kEos);
    return v;
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? unk_id_ : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& tok : split(text)) ids.push_back(id_of(tok));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    static const std::string no_space_before = ".,!?;:)]";
    static const std::string no_space_after = "([";
    std::string out;
    bool suppress_space = true;
    for (int id : ids) {
        if (id == eos_id_) break;
        const std::string& w = word(static_cast<std::size_t>(id));
        const bool attach = w.size() == 1 && no_space_before.find(w[0]) != std::string::npos;
        if (!out.empty() && !suppress_space && !attach) out.push_back(' ');
        out += w;
        suppress_space = w.size() == 1 && no_space_after.find(w[0]) != std::string::npos;
    }
    return out;
}

// ---- decoder ----

namespace {
std::string dname(const char* what) { return std::string(SkeletonAwareDecoder::kDecoderPrefix) + what; }
std::string dlayer(std::size_t l, const char* what) {
    return std::string(SkeletonAwareDecoder::kDecoderPrefix) + "layer" + std::to_string(l) + "/" +
           what;
}
std::string llayer(std::size_t l, const char* what) {
    return std::string(SkeletonAwareDecoder::kLoraPrefix) + "layer" + std::to_string(l) + "/" +
           what;
}
std::string bname(const char* what) { return std::string(SkeletonAwareDecoder::kBridgePrefix) + what; }
}  // namespace

SkeletonAwareDecoder::SkeletonAwareDecoder(BridgeConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
    if (config_.decoder.d_model % config_.decoder.heads != 0) {
        throw ParameterError("decoder: d_model must be divisible by heads");
    }
    if (config_.lora.rank == 0) throw ParameterError("decoder: LoRA rank must be positive");
    if (vocab_.size() < 3) throw ParameterError("decoder: vocabulary too small");
}

void SkeletonAwareDecoder::init_params(ParameterStore& params) const {
    std::mt19937_64 rng(config_.decoder.seed);
    const std::size_t d = config_.decoder.d_model;
    const std::size_t v = vocab_.size();
    const std::size_t ff = config_.decoder.ff_mult * d;

    params.add(dname("emb"), random_normal({v, d}, 0.0, 0.08, rng));
    params.add(dname("pos"), random_normal({config_.decoder.context, d}, 0.0, 0.08, rng));
    for (std::size_t l = 0; l < config_.decoder.layers; ++l) {
        params.add(dlayer(l, "ln1_g"), Tensor::full({d}, 1.0));
        params.add(dlayer(l, "wq"), glorot_uniform(d, d, {d, d}, rng));
        params.add(dlayer(l, "wk"), glorot_uniform(d, d, {d, d}, rng));
        params.add(dlayer(l, "wv"), glorot_uniform(d, d, {d, d}, rng));
        params.add(dlayer(l, "wo"), glorot_uniform(d, d, {d, d}, rng));
        params.add(dlayer(l, "ln2_g"), Tensor::full({d}, 1.0));
        params.add(dlayer(l, "fc1"), glorot_uniform(d, ff, {d, ff}, rng));
        params.add(dlayer(l, "fc2"), glorot_uniform(ff, d, {ff, d}, rng));
    }
    params.add(dname("final_g"), Tensor::full({d}, 1.0));
    params.add(dname("lm_head"), glorot_uniform(d, v, {d, v}, rng));

    // Adapters: A gaussian, B zero so W_eff == W_frozen before any step.
    const std::size_t r = config_.lora.rank;
    for (std::size_t l = 0; l < config_.decoder.layers; ++l) {
        params.add(llayer(l, "q_a"), random_normal({r, d}, 0.0, 0.02, rng));
        params.add(llayer(l, "q_b"), Tensor::zeros({d, r}));
        params.add(llayer(l, "v_a"), random_normal({r, d}, 0.0, 0.02, rng));
        params.add(llayer(l, "v_b"), Tensor::zeros({d, r}));
    }

    params.add(bname("proj_semantic/w"),
               glorot_uniform(config_.semantic_dim, d, {d, config_.semantic_dim}, rng));
    params.add(bname("proj_semantic/b"), Tensor::zeros({d}));
    params.add(bname("proj_st/w"),
               glorot_uniform(config_.channel_dim, d, {d, config_.channel_dim}, rng));
    params.add(bname("proj_st/b"), Tensor::zeros({d}));
}

std::vector<std::string> SkeletonAwareDecoder::adapter_param_names() const {
    std::vector<std::string> names;
    for (std::size_t l = 0; l < config_.decoder.layers; ++l) {
        names.push_back(llayer(l, "q_a"));
        names.push_back(llayer(l, "q_b"));
        names.push_back(llayer(l, "v_a"));
        names.push_back(llayer(l, "v_b"));
    }
    names.push_back(bname("proj_semantic/w"));
    names.push_back(bname("proj_semantic/b"));
    names.push_back(bname("proj_st/w"));
    names.push_back(bname("proj_st/b"));
    return names;
}

std::vector<SkeletonAwareDecoder::ContextItem> SkeletonAwareDecoder::prompt_items(
    const PromptExchange& exchange) const {
    std::vector<ContextItem> items;
    for (const auto& tok : Vocabulary::split(exchange.rendered_prompt)) {
        if (tok == "<SkeletonFeature>") {
            for (std::size_t s = 0; s < exchange.skeleton_tokens.size(); ++s) {
                ContextItem item;
                item.slot_index = static_cast<int>(s);
                items.push_back(item);
            }
        } else {
            ContextItem item;
            item.token_id = vocab_.id_of(tok);
            items.push_back(item);
        }
    }
    return items;
}

ad::NodePtr SkeletonAwareDecoder::embed_sequence(const std::vector<ContextItem>& items,
                                                 const std::vector<SkeletonSlot>& slots,
                                                 const ad::LeafMap& leaves,
                                                 bool project_slots) const {
    const std::size_t d = config_.decoder.d_model;
    if (items.size() > config_.decoder.context) {
        throw ParameterError("decoder: sequence of " + std::to_string(items.size()) +
                             " items exceeds context " + std::to_string(config_.decoder.context));
    }
    const auto& emb = leaves.at(dname("emb"));
    std::vector<ad::NodePtr> parts;
    std::vector<std::size_t> run;
    auto flush_run = [&]() {
        if (run.empty()) return;
        parts.push_back(ad::row_gather(emb, run));
        run.clear();
    };
    for (const auto& item : items) {
        if (item.token_id >= 0) {
            run.push_back(static_cast<std::size_t>(item.token_id));
            continue;
        }
        flush_run();
        const auto& slot = slots.at(static_cast<std::size_t>(item.slot_index));
        if (!project_slots) {
            parts.push_back(ad::constant(Tensor({1, d})));
            continue;
        }
        const char* proj = slot.kind == SlotKind::Semantic ? "proj_semantic" : "proj_st";
        const auto& w = leaves.at(bname((std::string(proj) + "/w").c_str()));
        const auto& b = leaves.at(bname((std::string(proj) + "/b").c_str()));
        if (slot.vector.numel() != w->value.dim(1)) {
            throw ParameterError("decoder: skeleton slot width " +
                                 std::to_string(slot.vector.numel()) +
                                 " does not match projection input " +
                                 std::to_string(w->value.dim(1)));
        }
        auto x = ad::constant(slot.vector.reshaped({1, slot.vector.numel()}));
        parts.push_back(ad::add_rowvec(ad::matmul(x, ad::transpose(w)), b));
    }
    flush_run();
    auto x = ad::concat_rows(parts);
    auto pos = ad::slice_rows(leaves.at(dname("pos")), 0, items.size());
    return ad::add(x, pos);
}

namespace {
Tensor causal_mask(std::size_t n) {
    Tensor m({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m.at2(i, j) = -1e9;
    return m;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, std::mt19937_64& rng) {
    Tensor m({rows, cols});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < m.numel(); ++i) m[i] = u(rng) < keep ? 1.0 / keep : 0.0;
    return m;
}
}  // namespace

ad::NodePtr SkeletonAwareDecoder::forward_logits(const std::vector<ContextItem>& items,
                                                 const std::vector<SkeletonSlot>& slots,
                                                 const ad::LeafMap& leaves, bool use_adapters,
                                                 bool zero_slots, bool training,
                                                 std::mt19937_64* dropout_rng) const {
    const std::size_t d = config_.decoder.d_model;
    const std::size_t heads = config_.decoder.heads;
    const std::size_t head_dim = d / heads;
    const std::size_t n = items.size();
    auto x = embed_sequence(items, slots, leaves, /*project_slots=*/!zero_slots);
    const Tensor mask = causal_mask(n);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const double lora_scale = config_.lora.alpha / static_cast<double>(config_.lora.rank);

    auto lora_term = [&](const ad::NodePtr& xn, std::size_t layer, const char* which) {
        auto a = leaves.at(llayer(layer, (std::string(which) + "_a").c_str()));
        auto b = leaves.at(llayer(layer, (std::string(which) + "_b").c_str()));
        auto ax = ad::matmul(xn, ad::transpose(a));  // (n, r)
        if (training && dropout_rng && config_.lora.dropout > 0.0) {
            ax = ad::mul_const(ax, dropout_mask(n, config_.lora.rank, config_.lora.dropout,
                                                *dropout_rng));
        }
        return ad::scale(ad::matmul(ax, ad::transpose(b)), lora_scale);
    };

    for (std::size_t l = 0; l < config_.decoder.layers; ++l) {
        auto xn = ad::rmsnorm_rows(x, leaves.at(dlayer(l, "ln1_g")));
        auto q = ad::matmul(xn, leaves.at(dlayer(l, "wq")));
        auto k = ad::matmul(xn, leaves.at(dlayer(l, "wk")));
        auto v = ad::matmul(xn, leaves.at(dlayer(l, "wv")));
        if (use_adapters) {
            q = ad::add(q, lora_term(xn, l, "q"));
            v = ad::add(v, lora_term(xn, l, "v"));
        }
        std::vector<ad::NodePtr> head_outputs;
        for (std::size_t h = 0; h < heads; ++h) {
            auto qh = ad::slice_cols(q, h * head_dim, head_dim);
            auto kh = ad::slice_cols(k, h * head_dim, head_dim);
            auto vh = ad::slice_cols(v, h * head_dim, head_dim);
            auto logits = ad::add_const(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt),
                                        mask);
            head_outputs.push_back(ad::matmul(ad::softmax_rows(logits), vh));
        }
        auto attn = ad::matmul(ad::concat_cols(head_outputs), leaves.at(dlayer(l, "wo")));
        x = ad::add(x, attn);
        auto xn2 = ad::rmsnorm_rows(x, leaves.at(dlayer(l, "ln2_g")));
        auto mlp = ad::matmul(ad::relu(ad::matmul(xn2, leaves.at(dlayer(l, "fc1")))),
                              leaves.at(dlayer(l, "fc2")));
        x = ad::add(x, mlp);
    }
    auto xf = ad::rmsnorm_rows(x, leaves.at(dname("final_g")));
    return ad::matmul(xf, leaves.at(dname("lm_head")));
}

ad::NodePtr SkeletonAwareDecoder::exchange_loss_node(const PromptExchange& exchange,
                                                     const ad::LeafMap& leaves, bool use_adapters,
                                                     bool zero_slots, bool training,
                                                     std::mt19937_64* dropout_rng) const {
    if (exchange.expected_completion.empty()) {
        throw ParameterError("exchange_loss_node: missing expected completion");
    }
    auto items = prompt_items(exchange);
    const std::size_t prompt_len = items.size();
    for (int id : vocab_.encode(exchange.expected_completion)) {
        ContextItem item;
        item.token_id = id;
        items.push_back(item);
    }
    ContextItem eos;
    eos.token_id = vocab_.eos_id();
    items.push_back(eos);

    const std::size_t n = items.size();
    auto logits = forward_logits(items, exchange.skeleton_tokens, leaves, use_adapters,
                                 zero_slots, training, dropout_rng);
    // Row i predicts item i+1; only completion-region predictions count
    // toward the loss (prompt tokens are excluded).
    std::vector<std::size_t> targets(n - 1, 0);
    std::vector<bool> counted(n - 1, false);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (i + 1 >= prompt_len) {
            targets[i] = static_cast<std::size_t>(items[i + 1].token_id);
            counted[i] = true;
        }
    }
    return ad::cross_entropy_rows(ad::slice_rows(logits, 0, n - 1), targets, &counted);
}

std::string SkeletonAwareDecoder::generate(const ParameterStore& params,
                                           const PromptExchange& exchange,
                                           const GenerateOptions& options) const {
    auto leaves = ad::make_constant_leaves(params);
    auto items = prompt_items(exchange);
    std::vector<int> generated;
    std::mt19937_64 sample_rng(options.sample_seed.value_or(0));
    for (std::size_t step = 0; step < options.max_tokens; ++step) {
        if (items.size() >= config_.decoder.context) break;
        auto logits = forward_logits(items, exchange.skeleton_tokens, leaves,
                                     options.use_adapters, /*zero_slots=*/false, false, nullptr);
        const std::size_t v = vocab_.size();
        const double* row = logits->value.data() + (items.size() - 1) * v;
        int next = 0;
        if (options.sample_seed) {
            std::vector<double> probs(row, row + v);
            double mx = probs[0];
            for (double p : probs) mx = std::max(mx, p);
            double sum = 0.0;
            for (auto& p : probs) {
                p = std::exp((p - mx) / options.sample_temperature);
                sum += p;
            }
            const double u = (static_cast<double>(sample_rng() >> 11) * 0x1.0p-53) * sum;
            double acc = 0.0;
            for (std::size_t i = 0; i < v; ++i) {
                acc += probs[i];
                if (u < acc) {
                    next = static_cast<int>(i);
                    break;
                }
            }
        } else {
            for (std::size_t i = 1; i < v; ++i) {
                if (row[i] > row[next]) next = static_cast<int>(i);
            }
        }
        if (next == vocab_.eos_id()) break;
        generated.push_back(next);
        ContextItem item;
        item.token_id = next;
        items.push_back(item);
    }
    return vocab_.decode(generated);
}

// ---- training loops ----

TrainConfig TrainConfig::paper_scale_description() {
    TrainConfig c;
    c.steps = 10000;
    c.batch_size = 16;
    c.learning_rate = 1e-5;
    return c;
}

TrainConfig TrainConfig::paper_scale_recognition() {
    TrainConfig c;
    c.steps = 800000;
    c.batch_size = 64;
    c.learning_rate = 1e-5;
    return c;
}

namespace {
struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
    std::size_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(ParameterStore& params, const std::map<std::string, Tensor>& grads, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (const auto& [name, g] : grads) {
            if (!params.has(name) || !params.trainable(name)) continue;
            Tensor& p = params.get(name);
            Tensor& mm = m[name];
            Tensor& vv = v[name];
            if (mm.numel() == 0) mm = Tensor::zeros(p.shape());
            if (vv.numel() == 0) vv = Tensor::zeros(p.shape());
            for (std::size_t i = 0; i < p.numel(); ++i) {
                mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
                vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + eps);
            }
        }
    }
};
}  // namespace

TrainResult SkeletonAwareDecoder::train_loop(ParameterStore& params,
                                             const std::vector<PromptExchange>& exchanges,
                                             const TrainConfig& config, bool adapters_only) const {
    if (exchanges.empty()) throw ParameterError("decoder training: empty exchange set");
    if (config.batch_size == 0) throw ParameterError("decoder training: batch size 0");
    for (const auto& e : exchanges) {
        if (e.expected_completion.empty()) {
            throw ParameterError("decoder training: exchange without expected completion");
        }
    }

    params.set_trainable_prefix(kDecoderPrefix, !adapters_only);
    params.set_trainable_prefix(kLoraPrefix, adapters_only);
    params.set_trainable_prefix(kBridgePrefix, adapters_only);

    std::ofstream log;
    if (!config.metrics_log.empty()) {
        log.open(config.metrics_log, std::ios::app);
        if (!log) throw DataError("cannot open metrics log: " + config.metrics_log.string());
    }

    AdamState adam;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(exchanges.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // trigger shuffle on first use

    TrainResult result;
    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<const PromptExchange*> batch;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size() - 1; i > 0; --i) {
                    std::swap(order[i], order[rng() % (i + 1)]);
                }
                cursor = 0;
            }
            batch.push_back(&exchanges[order[cursor++]]);
        }

        auto leaves = ad::make_leaves(params);
        ad::NodePtr total;
        for (const auto* e : batch) {
            auto loss = exchange_loss_node(*e, leaves, /*use_adapters=*/adapters_only,
                                           /*zero_slots=*/!adapters_only, true,
                                           adapters_only ? &rng : nullptr);
            total = total ? ad::add(total, loss) : loss;
        }
        total = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
        const double loss_value = total->value.value();
        if (!std::isfinite(loss_value)) {
            throw DivergenceError("decoder training diverged at step " + std::to_string(step));
        }
        ad::backward(total);
        adam.step(params, ad::collect_grads(leaves), config.learning_rate);
        result.loss_curve.push_back(loss_value);
        if (log.is_open()) {
            char line[96];
            std::snprintf(line, sizeof(line), "step=%zu loss=%.6f\n", step, loss_value);
            log << line;
        }
    }
    return result;
}

TrainResult SkeletonAwareDecoder::pretrain_base(ParameterStore& params,
                                                const std::vector<PromptExchange>& exchanges,
                                                const TrainConfig& config) const {
    return train_loop(params, exchanges, config, /*adapters_only=*/false);
}

TrainResult SkeletonAwareDecoder::finetune(ParameterStore& params,
                                           const std::vector<PromptExchange>& exchanges,
                                           const TrainConfig& config) const {
    return train_loop(params, exchanges, config, /*adapters_only=*/true);
}

// ---- adapter checkpoints ----

void save_adapters(const ParameterStore& params, const LoraSpec& spec,
                   const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.meta["kind"] = "lora-adapters";
    ckpt.meta["rank"] = std::to_string(spec.rank);
    ckpt.meta["alpha"] = std::to_string(spec.alpha);
    ckpt.meta["dropout"] = std::to_string(spec.dropout);
    for (const auto& [name, entry] : params.entries()) {
        if (name.rfind(SkeletonAwareDecoder::kLoraPrefix, 0) == 0 ||
            name.rfind(SkeletonAwareDecoder::kBridgePrefix, 0) == 0) {
            ckpt.tensors.emplace(name, entry.value);
        }
    }
    ckpt.save(path);
}

void load_adapters(ParameterStore& params, const std::filesystem::path& path) {
    Checkpoint ckpt = Checkpoint::load(path);
    auto it = ckpt.meta.find("kind");
    if (it == ckpt.meta.end() || it->second != "lora-adapters") {
        throw DataError("not an adapter checkpoint: " + path.string());
    }
    for (const auto& [name, t] : ckpt.tensors) {
        params.add(name, t, true);
    }
}

}  // namespace emotok::bridge
