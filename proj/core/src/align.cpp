#include "emotok/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "emotok/errors.hpp"
#include "emotok/numerics.hpp"
#include "emotok/unify.hpp"

namespace emotok::align {

const Tensor& TextEmbeddingTable::at(const std::string& label) const {
    auto it = vectors.find(label);
    if (it == vectors.end()) throw ParameterError("no text embedding for label: " + label);
    return it->second;
}

namespace {
Tensor normalized(const Tensor& v) {
    const double n = l2_norm(v.span());
    if (n == 0.0) throw DegenerateInputError("text embedding with zero norm");
    Tensor out = v;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= n;
    return out;
}
}  // namespace

TextEmbeddingTable load_text_embeddings(const std::filesystem::path& path,
                                        const std::vector<std::string>& required_labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open text embeddings: " + path.string());
    std::size_t count = 0, dim = 0;
    if (!(in >> count >> dim) || dim == 0) {
        throw DataError("text embeddings " + path.string() + ": malformed header");
    }
    TextEmbeddingTable table;
    table.dim = dim;
    table.provenance = path.string();
    for (std::size_t i = 0; i < count; ++i) {
        std::string label;
        if (!(in >> label)) throw DataError("text embeddings: truncated at entry " +
                                            std::to_string(i));
        Tensor v({dim});
        for (std::size_t d = 0; d < dim; ++d) {
            if (!(in >> v[d])) {
                throw DataError("text embeddings: dimension mismatch for label '" + label + "'");
            }
        }
        table.vectors[label] = normalized(v);
    }
    for (const auto& label : required_labels) {
        if (!table.has(label)) {
            throw DataError("text embeddings " + path.string() + ": missing label '" + label +
                            "'");
        }
    }
    return table;
}

void write_text_embeddings(const TextEmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write text embeddings: " + path.string());
    out << table.vectors.size() << " " << table.dim << "\n";
    char buf[32];
    for (const auto& [label, v] : table.vectors) {
        out << label;
        for (std::size_t d = 0; d < v.numel(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", v[d]);
            out << " " << buf;
        }
        out << "\n";
    }
}

TextEmbeddingTable make_synthetic_table(const std::vector<std::string>& labels, std::size_t dim,
                                        std::uint64_t seed) {
    TextEmbeddingTable table;
    table.dim = dim;
    table.provenance = "synthetic";
    std::mt19937_64 rng(seed);
    for (const auto& label : labels) {
        table.vectors[label] = normalized(random_normal({dim}, 0.0, 1.0, rng));
    }
    return table;
}

Tensor target_matrix(const std::vector<std::string>& labels) {
    const std::size_t n = labels.size();
    if (n == 0) throw ParameterError("target_matrix: empty batch");
    Tensor y({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t positives = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[i] == labels[j]) ++positives;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[i] == labels[j]) y.at2(i, j) = 1.0 / static_cast<double>(positives);
        }
    }
    return y;
}

std::pair<Tensor, Tensor> similarity_distributions(const ContrastiveBatch& batch) {
    if (batch.temperature <= 0.0) throw ParameterError("similarity: temperature must be positive");
    if (batch.skeleton.rank() != 2 || !batch.skeleton.same_shape(batch.text)) {
        throw ParameterError("similarity: skeleton/text must be matching (N, D) matrices");
    }
    const std::size_t n = batch.skeleton.dim(0), d = batch.skeleton.dim(1);
    Tensor cos({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> zs{batch.skeleton.data() + i * d, d};
        for (std::size_t j = 0; j < n; ++j) {
            std::span<const double> zt{batch.text.data() + j * d, d};
            cos.at2(i, j) = numerics::cosine_similarity(zs, zt);
        }
    }
    Tensor p_s2t({n, n}), p_t2s({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(n), col(n);
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = cos.at2(i, j);
            col[j] = cos.at2(j, i);  // cos(z^t_i, z^s_j)
        }
        auto ps = numerics::softmax(row, batch.temperature);
        auto pt = numerics::softmax(col, batch.temperature);
        for (std::size_t j = 0; j < n; ++j) {
            p_s2t.at2(i, j) = ps[j];
            p_t2s.at2(i, j) = pt[j];
        }
    }
    return {std::move(p_s2t), std::move(p_t2s)};
}

double contrastive_loss(const ContrastiveBatch& batch, const Tensor& targets) {
    const std::size_t n = batch.labels.size();
    if (targets.rank() != 2 || targets.dim(0) != n || targets.dim(1) != n) {
        throw ParameterError("contrastive_loss: target shape mismatch");
    }
    auto [p_s2t, p_t2s] = similarity_distributions(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> y{targets.data() + i * n, n};
        std::span<const double> ps{p_s2t.data() + i * n, n};
        std::span<const double> pt{p_t2s.data() + i * n, n};
        total += numerics::kl_divergence(y, ps) + numerics::kl_divergence(y, pt);
    }
    return 0.5 * total / static_cast<double>(n);
}

namespace {
Tensor text_rows_for(const std::vector<std::string>& labels, const TextEmbeddingTable& table) {
    if (labels.empty()) throw ParameterError("empty batch");
    Tensor text({labels.size(), table.dim});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const Tensor& v = table.at(labels[i]);
        std::copy(v.data(), v.data() + table.dim, text.data() + i * table.dim);
    }
    return text;
}

double mean_ce(const Tensor& logits, const std::vector<std::string>& labels,
               const std::vector<std::string>& class_order) {
    double total = 0.0;
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::find(class_order.begin(), class_order.end(), labels[i]);
        if (it == class_order.end()) throw ParameterError("label outside class order: " + labels[i]);
        std::span<const double> row{logits.data() + i * k, k};
        total += numerics::cross_entropy(row, static_cast<std::size_t>(it - class_order.begin()));
    }
    return total / static_cast<double>(labels.size());
}
}  // namespace

double loss_se(const Tensor& z_g, const Tensor& logits, const std::vector<std::string>& labels,
               const TextEmbeddingTable& table, double tau,
               const std::vector<std::string>& class_order) {
    if (z_g.rank() != 2 || z_g.dim(1) != table.dim) {
        throw ParameterError("loss_se: semantic tokens must be (N, text_dim)");
    }
    ContrastiveBatch batch{z_g, text_rows_for(labels, table), labels, tau};
    return mean_ce(logits, labels, class_order) + contrastive_loss(batch, target_matrix(labels));
}

double loss_st(const Tensor& z_s_reduced, const Tensor& z_t_reduced, const Tensor& z_g,
               const Tensor& logits, const std::vector<std::string>& labels,
               const TextEmbeddingTable& table, double tau,
               const std::vector<std::string>& class_order) {
    (void)z_g;
    Tensor text = text_rows_for(labels, table);
    Tensor targets = target_matrix(labels);
    ContrastiveBatch spatial{z_s_reduced, text, labels, tau};
    ContrastiveBatch temporal{z_t_reduced, text, labels, tau};
    return mean_ce(logits, labels, class_order) +
           0.5 * (contrastive_loss(spatial, targets) + contrastive_loss(temporal, targets));
}

ad::NodePtr contrastive_loss_node(const ad::NodePtr& skeleton, const Tensor& text,
                                  const Tensor& targets, double tau) {
    if (tau <= 0.0) throw ParameterError("contrastive_loss_node: temperature must be positive");
    auto zn = ad::row_normalize(skeleton);
    auto tn = ad::row_normalize(ad::constant(text));
    auto cos = ad::matmul(zn, ad::transpose(tn));  // (N, N), [i][j] = cos(z_i, t_j)
    auto p_s2t = ad::softmax_rows(ad::scale(cos, 1.0 / tau));
    auto p_t2s = ad::softmax_rows(ad::scale(ad::transpose(cos), 1.0 / tau));
    auto kl = ad::add(ad::kl_rows(targets, p_s2t), ad::kl_rows(targets, p_t2s));
    return ad::scale(kl, 0.5);
}

// ---- AlignModel ----

namespace {
constexpr const char* kClsW = "align/cls_w";
constexpr const char* kClsB = "align/cls_b";
constexpr const char* kPoolW = "align/pool_w";
constexpr const char* kPoolB = "align/pool_b";
}  // namespace

AlignModel::AlignModel(AlignConfig config, std::vector<skeldata::DatasetManifest> manifests)
    : config_(std::move(config)),
      manifests_(std::move(manifests)),
      encoder_(config_.encoder),
      tokenizer_({config_.encoder.base_channels, config_.semantic_dim}) {
    if (manifests_.empty()) throw ParameterError("AlignModel: need at least one manifest");
    std::set<std::string> labels;
    for (const auto& m : manifests_) {
        labels.insert(m.labels.begin(), m.labels.end());
        if (!graphs_.count(m.joint_count)) {
            graphs_.emplace(m.joint_count, encoder::chain_graph(m.joint_count));
        }
    }
    class_order_.assign(labels.begin(), labels.end());
    auto [l_spatial, l_temporal] =
        unify::global_token_length(manifests_, config_.encoder.base_channels);
    (void)l_temporal;
    spatial_positions_ = l_spatial / config_.encoder.base_channels;
}

void AlignModel::init_params(ParameterStore& params, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    encoder_.init_params(params, rng());
    tokenizer_.init_params(params, rng());
    const std::size_t d = config_.semantic_dim, k = class_order_.size();
    const std::size_t c = config_.encoder.base_channels, dt = config_.text_dim;
    params.add(kClsW, glorot_uniform(d, k, {d, k}, rng));
    params.add(kClsB, Tensor::zeros({k}));
    params.add(kPoolW, glorot_uniform(c, dt, {c, dt}, rng));
    params.add(kPoolB, Tensor::zeros({dt}));
}

const encoder::JointGraph& AlignModel::graph_for(std::size_t joint_count) const {
    auto it = graphs_.find(joint_count);
    if (it == graphs_.end()) {
        throw ParameterError("no joint graph for joint count " + std::to_string(joint_count));
    }
    return it->second;
}

AlignModel::SampleNodes AlignModel::build_sample(const skeldata::SkeletonSequence& seq64,
                                                 const ad::LeafMap& leaves) const {
    const auto& graph = graph_for(seq64.joint_count);
    auto features = encoder_.forward(ad::constant(seq64.frames), graph, leaves);
    SampleNodes nodes;
    nodes.semantic = tokenizer_.semantic_node(features, leaves);
    auto spatial = tokenizer_.spatial_node(features, leaves);  // (J, C)
    nodes.valid_spatial = seq64.joint_count;
    nodes.spatial_unified = unify::unify_node(spatial, spatial_positions_);
    nodes.temporal = tokenizer_.temporal_node(features, leaves);  // (T, C)
    return nodes;
}

AlignModel::BatchLoss AlignModel::batch_loss(
    const std::vector<const skeldata::SkeletonSequence*>& batch, const TextEmbeddingTable& table,
    const ad::LeafMap& leaves, LossKind kind) const {
    if (batch.empty()) throw ParameterError("batch_loss: empty batch");
    if (kind == LossKind::SemanticOnly && config_.semantic_dim != config_.text_dim) {
        throw ParameterError("L_se requires semantic_dim == text_dim");
    }
    std::vector<std::string> labels;
    std::vector<std::size_t> label_idx;
    std::vector<ad::NodePtr> semantic_rows, spatial_rows, temporal_rows;
    for (const auto* seq : batch) {
        auto nodes = build_sample(*seq, leaves);
        semantic_rows.push_back(ad::reshape(nodes.semantic, {1, config_.semantic_dim}));
        if (kind == LossKind::SpatioTemporal) {
            auto pooled_s = unify::masked_mean_node(nodes.spatial_unified, nodes.valid_spatial);
            auto pooled_t = ad::mean_rows(nodes.temporal);
            auto ps = ad::reshape(pooled_s, {1, config_.encoder.base_channels});
            auto pt = ad::reshape(pooled_t, {1, config_.encoder.base_channels});
            spatial_rows.push_back(ps);
            temporal_rows.push_back(pt);
        }
        labels.push_back(seq->label);
        auto it = std::find(class_order_.begin(), class_order_.end(), seq->label);
        if (it == class_order_.end()) {
            throw ParameterError("sample label outside model's class order: " + seq->label);
        }
        label_idx.push_back(static_cast<std::size_t>(it - class_order_.begin()));
    }
    auto z_g = ad::concat_rows(semantic_rows);  // (N, semantic_dim)
    auto logits = ad::add_rowvec(ad::matmul(z_g, leaves.at(kClsW)), leaves.at(kClsB));
    auto ce = ad::cross_entropy_rows(logits, label_idx);

    Tensor text = text_rows_for(labels, table);
    Tensor targets = target_matrix(labels);
    ad::NodePtr con;
    if (kind == LossKind::SemanticOnly) {
        con = contrastive_loss_node(z_g, text, targets, config_.tau);
    } else {
        auto map_rows = [&](const std::vector<ad::NodePtr>& rows) {
            auto pooled = ad::concat_rows(rows);  // (N, C)
            return ad::add_rowvec(ad::matmul(pooled, leaves.at(kPoolW)), leaves.at(kPoolB));
        };
        auto con_s = contrastive_loss_node(map_rows(spatial_rows), text, targets, config_.tau);
        auto con_t = contrastive_loss_node(map_rows(temporal_rows), text, targets, config_.tau);
        con = ad::scale(ad::add(con_s, con_t), 0.5);
    }

    BatchLoss out;
    out.total = ad::add(ce, con);
    out.ce = ce->value.value();
    out.con = con->value.value();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = class_order_.size();
        const double* row = logits->value.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (best == label_idx[i]) ++out.correct;
    }
    return out;
}

std::string AlignModel::classify(const skeldata::SkeletonSequence& seq64,
                                 const ParameterStore& params) const {
    auto leaves = ad::make_constant_leaves(params);
    auto nodes = build_sample(seq64, leaves);
    auto row = ad::reshape(nodes.semantic, {1, config_.semantic_dim});
    auto logits = ad::add_rowvec(ad::matmul(row, leaves.at(kClsW)), leaves.at(kClsB));
    std::size_t best = 0;
    for (std::size_t j = 1; j < class_order_.size(); ++j) {
        if (logits->value[j] > logits->value[best]) best = j;
    }
    return class_order_[best];
}

Tensor AlignModel::semantic_token(const skeldata::SkeletonSequence& seq64,
                                  const ParameterStore& params) const {
    auto leaves = ad::make_constant_leaves(params);
    return build_sample(seq64, leaves).semantic->value;
}

std::pair<Tensor, Tensor> AlignModel::spatiotemporal_tokens(
    const skeldata::SkeletonSequence& seq64, const ParameterStore& params) const {
    auto leaves = ad::make_constant_leaves(params);
    auto nodes = build_sample(seq64, leaves);
    return {nodes.spatial_unified->value, nodes.temporal->value};
}

// ---- pretraining ----

PretrainSchedule PretrainSchedule::paper_scale() {
    PretrainSchedule s;
    s.epochs = 200;
    s.base_lr = 0.1;
    s.momentum = 0.9;
    s.warmup_epochs = 5;
    s.decay_epochs = {100, 150, 175};
    s.decay_factor = 0.1;
    s.batch_size = 64;
    return s;
}

double scheduled_lr(const PretrainSchedule& schedule, std::size_t epoch) {
    if (epoch == 0) throw ParameterError("scheduled_lr: epochs are 1-based");
    double lr = schedule.base_lr;
    if (schedule.warmup_epochs > 1 && epoch < schedule.warmup_epochs) {
        const double t = static_cast<double>(epoch - 1) /
                         static_cast<double>(schedule.warmup_epochs - 1);
        lr = schedule.base_lr * (0.1 + 0.9 * t);
    } else if (schedule.warmup_epochs == 1 && epoch == 1) {
        lr = schedule.base_lr;
    }
    for (auto de : schedule.decay_epochs) {
        if (epoch >= de) lr *= schedule.decay_factor;
    }
    return lr;
}

PretrainResult pretrain(const AlignModel& model, ParameterStore& params,
                        const std::vector<skeldata::LoadedDataset>& datasets,
                        const TextEmbeddingTable& table, const PretrainOptions& options) {
    if (datasets.empty()) throw ParameterError("pretrain: no datasets");
    if (options.schedule.batch_size == 0) throw ParameterError("pretrain: batch size 0");

    std::vector<skeldata::SkeletonSequence> pool;
    for (const auto& ds : datasets) {
        for (const auto& seq : ds.sequences) {
            pool.push_back(skeldata::resample_to_frames(seq, 64));
        }
    }
    if (pool.empty()) throw ParameterError("pretrain: datasets contain no samples");

    numerics::SgdState sgd;
    sgd.momentum = options.schedule.momentum;

    std::ofstream log;
    if (!options.metrics_log.empty()) {
        log.open(options.metrics_log, std::ios::app);
        if (!log) throw DataError("cannot open metrics log: " + options.metrics_log.string());
    }

    PretrainResult result;
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = options.start_epoch;
         epoch < options.start_epoch + options.schedule.epochs; ++epoch) {
        std::mt19937_64 rng(options.seed * 2654435761u + epoch);
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[rng() % (i + 1)]);
        }
        sgd.learning_rate = scheduled_lr(options.schedule, epoch);

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = sgd.learning_rate;
        std::size_t batches = 0, correct = 0;
        for (std::size_t start = 0; start < order.size(); start += options.schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.schedule.batch_size);
            std::vector<const skeldata::SkeletonSequence*> batch;
            for (std::size_t i = start; i < end; ++i) batch.push_back(&pool[order[i]]);

            auto leaves = ad::make_leaves(params);
            auto loss = model.batch_loss(batch, table, leaves, options.loss);
            const double loss_value = loss.total->value.value();
            if (!std::isfinite(loss_value)) {
                throw DivergenceError("pretrain diverged: NaN/Inf loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batches));
            }
            ad::backward(loss.total);
            auto grads = ad::collect_grads(leaves);
            numerics::sgd_step(params, grads, sgd);

            m.loss += loss_value;
            m.ce += loss.ce;
            m.con += loss.con;
            correct += loss.correct;
            ++batches;
        }
        m.loss /= static_cast<double>(batches);
        m.ce /= static_cast<double>(batches);
        m.con /= static_cast<double>(batches);
        m.accuracy = static_cast<double>(correct) / static_cast<double>(pool.size());
        result.history.push_back(m);
        if (log.is_open()) {
            char line[192];
            std::snprintf(line, sizeof(line),
                          "epoch=%zu lr=%.6g loss=%.6f ce=%.6f con=%.6f acc=%.4f\n", m.epoch,
                          m.lr, m.loss, m.ce, m.con, m.accuracy);
            log << line;
        }
    }
    return result;
}

}  // namespace emotok::align
