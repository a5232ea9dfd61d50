#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "emotok/params.hpp"
#include "emotok/tensor.hpp"

namespace emotok::ad {

// Reverse-mode accumulation over the fixed operation set used by the
// training objectives. Nodes form a DAG built forward; backward() walks it
// in reverse topological order. Tensors inside nodes are values: ops never
// alias or mutate their inputs.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // accumulates into parents' grads

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
        return grad;
    }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr constant(Tensor v);
NodePtr leaf(Tensor v);  // requires_grad = true

// One leaf (or constant, when not trainable) per parameter.
using LeafMap = std::map<std::string, NodePtr>;
LeafMap make_leaves(const ParameterStore& params);
LeafMap make_constant_leaves(const ParameterStore& params);  // inference-only graphs

// Gradients of all trainable leaves after backward().
std::map<std::string, Tensor> collect_grads(const LeafMap& leaves);

// Seeds root->grad = 1 (root must be scalar) and propagates.
void backward(const NodePtr& root);

// ---- element-wise and linear ----
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, double c);
NodePtr add_const(const NodePtr& a, const Tensor& c);
NodePtr mul_const(const NodePtr& a, const Tensor& c);  // masking, dropout
NodePtr relu(const NodePtr& a);

NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose(const NodePtr& a);
NodePtr reshape(const NodePtr& a, std::vector<std::size_t> shape);
NodePtr add_rowvec(const NodePtr& mat, const NodePtr& vec);  // bias broadcast over rows

// ---- structural ----
NodePtr concat_rows(const std::vector<NodePtr>& parts);
NodePtr slice_rows(const NodePtr& a, std::size_t start, std::size_t count);
NodePtr concat_cols(const std::vector<NodePtr>& parts);
NodePtr slice_cols(const NodePtr& a, std::size_t start, std::size_t count);
NodePtr row_gather(const NodePtr& a, const std::vector<std::size_t>& rows);
NodePtr pad_rows(const NodePtr& a, std::size_t total_rows);  // zero rows appended

// ---- reductions and pooling ----
NodePtr sum_all(const NodePtr& a);
NodePtr mean_all(const NodePtr& a);
NodePtr mean_rows(const NodePtr& a);  // (R,C) -> (C)

enum class PoolAxis { Time, Joint, Both };
// a: (T,J,C). Time -> (J,C); Joint -> (T,C); Both -> (C).
NodePtr pool_mean(const NodePtr& a, PoolAxis axis);

// ---- graph/temporal convolution pieces ----
// a: (T,J,C), adjacency: (J,J) constant. out[t] = adjacency * a[t].
NodePtr graph_mix(const NodePtr& a, const Tensor& adjacency);
// a: (T,J,C), kernel: (K,C) learnable, K odd, same padding over time.
NodePtr temporal_conv_depthwise(const NodePtr& a, const NodePtr& kernel);

// ---- normalization, softmax, losses ----
NodePtr row_normalize(const NodePtr& a);                      // unit L2 rows
NodePtr rmsnorm_rows(const NodePtr& a, const NodePtr& gain);  // x/rms(x) * gain
NodePtr softmax_rows(const NodePtr& a);

// Mean of -log softmax(row)[target] over rows where row_mask (when given)
// is true. Targets out of range throw.
NodePtr cross_entropy_rows(const NodePtr& logits, const std::vector<std::size_t>& targets,
                           const std::vector<bool>* row_mask = nullptr);

// Mean over rows of KL(target_row || predicted_row); target is constant and
// row-stochastic. Throws DegenerateInputError when predicted <= 0 under
// positive target mass.
NodePtr kl_rows(const Tensor& target, const NodePtr& predicted);

}  // namespace emotok::ad
