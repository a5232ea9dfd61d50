#include "emotok/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace emotok::ad {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

void require_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
    if (!a->value.same_shape(b->value)) {
        throw ParameterError(std::string(op) + ": shape mismatch");
    }
}

void require_rank(const NodePtr& a, std::size_t rank, const char* op) {
    if (a->value.rank() != rank) {
        throw ParameterError(std::string(op) + ": wrong rank");
    }
}

}  // namespace

NodePtr constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

NodePtr leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

LeafMap make_leaves(const ParameterStore& params) {
    LeafMap leaves;
    for (const auto& [name, entry] : params.entries()) {
        leaves[name] = entry.trainable ? leaf(entry.value) : constant(entry.value);
    }
    return leaves;
}

LeafMap make_constant_leaves(const ParameterStore& params) {
    LeafMap leaves;
    for (const auto& [name, entry] : params.entries()) {
        leaves[name] = constant(entry.value);
    }
    return leaves;
}

std::map<std::string, Tensor> collect_grads(const LeafMap& leaves) {
    std::map<std::string, Tensor> grads;
    for (const auto& [name, node] : leaves) {
        if (!node->requires_grad) continue;
        grads[name] = node->grad.numel() == node->value.numel()
                          ? node->grad
                          : Tensor::zeros(node->value.shape());
    }
    return grads;
}

void backward(const NodePtr& root) {
    if (root->value.numel() != 1) {
        throw ParameterError("backward: root must be scalar");
    }
    // Iterative post-order DFS; graphs can be deep for long sequences.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            Node* parent = node->parents[next_child].get();
            ++next_child;
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* node = *it;
        if (!node->backprop) continue;
        for (const auto& p : node->parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        node->backprop(*node);
    }
}

namespace {
// Accumulate helper: skips constants.
inline void axpy(const NodePtr& p, const Tensor& g, double s = 1.0) {
    if (!p->requires_grad) return;
    Tensor& dst = p->ensure_grad();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += s * g[i];
}
}  // namespace

NodePtr add(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "add");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] += b->value[i];
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        axpy(a, n.grad);
        axpy(b, n.grad);
    });
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "sub");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] -= b->value[i];
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        axpy(a, n.grad);
        axpy(b, n.grad, -1.0);
    });
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    require_same_shape(a, b, "mul");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= b->value[i];
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& da = a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) da[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& db = b->ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) db[i] += n.grad[i] * a->value[i];
        }
    });
}

NodePtr scale(const NodePtr& a, double c) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= c;
    return make_node(std::move(v), {a}, [a, c](Node& n) { axpy(a, n.grad, c); });
}

NodePtr add_const(const NodePtr& a, const Tensor& c) {
    if (!a->value.same_shape(c)) throw ParameterError("add_const: shape mismatch");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] += c[i];
    return make_node(std::move(v), {a}, [a](Node& n) { axpy(a, n.grad); });
}

NodePtr mul_const(const NodePtr& a, const Tensor& c) {
    if (!a->value.same_shape(c)) throw ParameterError("mul_const: shape mismatch");
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= c[i];
    return make_node(std::move(v), {a}, [a, c](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) da[i] += n.grad[i] * c[i];
    });
}

NodePtr relu(const NodePtr& a) {
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] = std::max(0.0, v[i]);
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            if (a->value[i] > 0.0) da[i] += n.grad[i];
        }
    });
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    Tensor v = mat_mul(a->value, b->value);
    return make_node(std::move(v), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor da = mat_mul_bt(n.grad, b->value);
            Tensor& dst = a->ensure_grad();
            for (std::size_t i = 0; i < da.numel(); ++i) dst[i] += da[i];
        }
        if (b->requires_grad) {
            Tensor db = mat_mul_at(a->value, n.grad);
            Tensor& dst = b->ensure_grad();
            for (std::size_t i = 0; i < db.numel(); ++i) dst[i] += db[i];
        }
    });
}

NodePtr transpose(const NodePtr& a) {
    Tensor v = mat_transpose(a->value);
    return make_node(std::move(v), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor gt = mat_transpose(n.grad);
        Tensor& dst = a->ensure_grad();
        for (std::size_t i = 0; i < gt.numel(); ++i) dst[i] += gt[i];
    });
}

NodePtr reshape(const NodePtr& a, std::vector<std::size_t> shape) {
    Tensor v = a->value.reshaped(std::move(shape));
    return make_node(std::move(v), {a}, [a](Node& n) { axpy(a, n.grad); });
}

NodePtr add_rowvec(const NodePtr& mat, const NodePtr& vec) {
    require_rank(mat, 2, "add_rowvec");
    require_rank(vec, 1, "add_rowvec");
    if (mat->value.dim(1) != vec->value.dim(0)) {
        throw ParameterError("add_rowvec: width mismatch");
    }
    const std::size_t rows = mat->value.dim(0), cols = mat->value.dim(1);
    Tensor v = mat->value;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) v.at2(r, c) += vec->value[c];
    return make_node(std::move(v), {mat, vec}, [mat, vec, rows, cols](Node& n) {
        axpy(mat, n.grad);
        if (vec->requires_grad) {
            Tensor& dv = vec->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) dv[c] += n.grad.at2(r, c);
        }
    });
}

NodePtr concat_rows(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw ParameterError("concat_rows: empty");
    const std::size_t cols = parts[0]->value.dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(1) != cols) {
            throw ParameterError("concat_rows: column mismatch");
        }
        rows += p->value.dim(0);
    }
    Tensor v({rows, cols});
    std::size_t r0 = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data(), p->value.data() + p->value.numel(), v.data() + r0 * cols);
        r0 += p->value.dim(0);
    }
    return make_node(std::move(v), parts, [parts, cols](Node& n) {
        std::size_t r0 = 0;
        for (const auto& p : parts) {
            const std::size_t pr = p->value.dim(0);
            if (p->requires_grad) {
                Tensor& dp = p->ensure_grad();
                for (std::size_t i = 0; i < pr * cols; ++i) dp[i] += n.grad[r0 * cols + i];
            }
            r0 += pr;
        }
    });
}

NodePtr slice_rows(const NodePtr& a, std::size_t start, std::size_t count) {
    require_rank(a, 2, "slice_rows");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    if (start + count > rows) throw ParameterError("slice_rows: out of range");
    Tensor v({count, cols});
    std::copy(a->value.data() + start * cols, a->value.data() + (start + count) * cols, v.data());
    return make_node(std::move(v), {a}, [a, start, cols](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) da[start * cols + i] += n.grad[i];
    });
}

NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    if (parts.empty()) throw ParameterError("concat_cols: empty");
    const std::size_t rows = parts[0]->value.dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != 2 || p->value.dim(0) != rows) {
            throw ParameterError("concat_cols: row mismatch");
        }
        cols += p->value.dim(1);
    }
    Tensor v({rows, cols});
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p->value.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < pc; ++c) v.at2(r, c0 + c) = p->value.at2(r, c);
        c0 += pc;
    }
    return make_node(std::move(v), parts, [parts, rows](Node& n) {
        std::size_t c0 = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p->value.dim(1);
            if (p->requires_grad) {
                Tensor& dp = p->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < pc; ++c) dp.at2(r, c) += n.grad.at2(r, c0 + c);
            }
            c0 += pc;
        }
    });
}

NodePtr slice_cols(const NodePtr& a, std::size_t start, std::size_t count) {
    require_rank(a, 2, "slice_cols");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    if (start + count > cols) throw ParameterError("slice_cols: out of range");
    Tensor v({rows, count});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) v.at2(r, c) = a->value.at2(r, start + c);
    return make_node(std::move(v), {a}, [a, start, rows](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        const std::size_t count = n.grad.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < count; ++c) da.at2(r, start + c) += n.grad.at2(r, c);
    });
}

NodePtr row_gather(const NodePtr& a, const std::vector<std::size_t>& rows) {
    require_rank(a, 2, "row_gather");
    const std::size_t src_rows = a->value.dim(0), cols = a->value.dim(1);
    Tensor v({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= src_rows) throw ParameterError("row_gather: index out of range");
        std::copy(a->value.data() + rows[i] * cols, a->value.data() + (rows[i] + 1) * cols,
                  v.data() + i * cols);
    }
    return make_node(std::move(v), {a}, [a, rows, cols](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t c = 0; c < cols; ++c)
                da[rows[i] * cols + c] += n.grad[i * cols + c];
    });
}

NodePtr pad_rows(const NodePtr& a, std::size_t total_rows) {
    require_rank(a, 2, "pad_rows");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    if (total_rows < rows) throw ParameterError("pad_rows: target smaller than input");
    Tensor v({total_rows, cols});
    std::copy(a->value.data(), a->value.data() + rows * cols, v.data());
    return make_node(std::move(v), {a}, [a, rows, cols](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < rows * cols; ++i) da[i] += n.grad[i];
    });
}

NodePtr sum_all(const NodePtr& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_node(Tensor::scalar(s), {a}, [a](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += n.grad[0];
    });
}

NodePtr mean_all(const NodePtr& a) {
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_node(Tensor::scalar(s * inv), {a}, [a, inv](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t i = 0; i < da.numel(); ++i) da[i] += n.grad[0] * inv;
    });
}

NodePtr mean_rows(const NodePtr& a) {
    require_rank(a, 2, "mean_rows");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    if (rows == 0) throw ParameterError("mean_rows: empty matrix");
    Tensor v({cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) v[c] += a->value.at2(r, c);
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t c = 0; c < cols; ++c) v[c] *= inv;
    return make_node(std::move(v), {a}, [a, rows, cols, inv](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) da.at2(r, c) += n.grad[c] * inv;
    });
}

NodePtr pool_mean(const NodePtr& a, PoolAxis axis) {
    require_rank(a, 3, "pool_mean");
    const std::size_t T = a->value.dim(0), J = a->value.dim(1), C = a->value.dim(2);
    if (axis == PoolAxis::Both) {
        Tensor v({C});
        for (std::size_t i = 0; i < T * J; ++i)
            for (std::size_t c = 0; c < C; ++c) v[c] += a->value[i * C + c];
        const double inv = 1.0 / static_cast<double>(T * J);
        for (std::size_t c = 0; c < C; ++c) v[c] *= inv;
        return make_node(std::move(v), {a}, [a, T, J, C, inv](Node& n) {
            if (!a->requires_grad) return;
            Tensor& da = a->ensure_grad();
            for (std::size_t i = 0; i < T * J; ++i)
                for (std::size_t c = 0; c < C; ++c) da[i * C + c] += n.grad[c] * inv;
        });
    }
    if (axis == PoolAxis::Time) {
        Tensor v({J, C});
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < J; ++j)
                for (std::size_t c = 0; c < C; ++c) v.at2(j, c) += a->value.at3(t, j, c);
        const double inv = 1.0 / static_cast<double>(T);
        for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= inv;
        return make_node(std::move(v), {a}, [a, T, J, C, inv](Node& n) {
            if (!a->requires_grad) return;
            Tensor& da = a->ensure_grad();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < J; ++j)
                    for (std::size_t c = 0; c < C; ++c)
                        da.at3(t, j, c) += n.grad.at2(j, c) * inv;
        });
    }
    Tensor v({T, C});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < J; ++j)
            for (std::size_t c = 0; c < C; ++c) v.at2(t, c) += a->value.at3(t, j, c);
    const double inv = 1.0 / static_cast<double>(J);
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] *= inv;
    return make_node(std::move(v), {a}, [a, T, J, C, inv](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < J; ++j)
                for (std::size_t c = 0; c < C; ++c) da.at3(t, j, c) += n.grad.at2(t, c) * inv;
    });
}

NodePtr graph_mix(const NodePtr& a, const Tensor& adjacency) {
    require_rank(a, 3, "graph_mix");
    const std::size_t T = a->value.dim(0), J = a->value.dim(1), C = a->value.dim(2);
    if (adjacency.rank() != 2 || adjacency.dim(0) != J || adjacency.dim(1) != J) {
        throw ParameterError("graph_mix: adjacency shape mismatch");
    }
    Tensor v({T, J, C});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < J; ++j) {
            for (std::size_t k = 0; k < J; ++k) {
                const double w = adjacency.at2(j, k);
                if (w == 0.0) continue;
                const double* src = a->value.data() + (t * J + k) * C;
                double* dst = v.data() + (t * J + j) * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += w * src[c];
            }
        }
    }
    return make_node(std::move(v), {a}, [a, adjacency, T, J, C](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < J; ++j) {
                const double* g = n.grad.data() + (t * J + j) * C;
                for (std::size_t k = 0; k < J; ++k) {
                    const double w = adjacency.at2(j, k);
                    if (w == 0.0) continue;
                    double* dst = da.data() + (t * J + k) * C;
                    for (std::size_t c = 0; c < C; ++c) dst[c] += w * g[c];
                }
            }
        }
    });
}

NodePtr temporal_conv_depthwise(const NodePtr& a, const NodePtr& kernel) {
    require_rank(a, 3, "temporal_conv_depthwise");
    require_rank(kernel, 2, "temporal_conv_depthwise");
    const std::size_t T = a->value.dim(0), J = a->value.dim(1), C = a->value.dim(2);
    const std::size_t K = kernel->value.dim(0);
    if (kernel->value.dim(1) != C || K % 2 == 0) {
        throw ParameterError("temporal_conv_depthwise: kernel must be (odd K, C)");
    }
    const std::size_t half = K / 2;
    Tensor v({T, J, C});
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < K; ++k) {
            const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t + k) -
                                         static_cast<std::ptrdiff_t>(half);
            if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(T)) continue;
            for (std::size_t j = 0; j < J; ++j) {
                const double* src = a->value.data() + (src_t * J + j) * C;
                double* dst = v.data() + (t * J + j) * C;
                const double* w = kernel->value.data() + k * C;
                for (std::size_t c = 0; c < C; ++c) dst[c] += w[c] * src[c];
            }
        }
    }
    return make_node(std::move(v), {a, kernel}, [a, kernel, T, J, C, K, half](Node& n) {
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t k = 0; k < K; ++k) {
                const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t + k) -
                                             static_cast<std::ptrdiff_t>(half);
                if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(T)) continue;
                for (std::size_t j = 0; j < J; ++j) {
                    const double* g = n.grad.data() + (t * J + j) * C;
                    if (a->requires_grad) {
                        double* da = a->ensure_grad().data() + (src_t * J + j) * C;
                        const double* w = kernel->value.data() + k * C;
                        for (std::size_t c = 0; c < C; ++c) da[c] += w[c] * g[c];
                    }
                    if (kernel->requires_grad) {
                        double* dw = kernel->ensure_grad().data() + k * C;
                        const double* src = a->value.data() + (src_t * J + j) * C;
                        for (std::size_t c = 0; c < C; ++c) dw[c] += src[c] * g[c];
                    }
                }
            }
        }
    });
}

NodePtr row_normalize(const NodePtr& a) {
    require_rank(a, 2, "row_normalize");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    Tensor v({rows, cols});
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->value.data() + r * cols;
        double n2 = 0.0;
        for (std::size_t c = 0; c < cols; ++c) n2 += x[c] * x[c];
        const double nn = std::sqrt(n2);
        if (nn == 0.0) throw DegenerateInputError("row_normalize: zero-norm row");
        norms[r] = nn;
        for (std::size_t c = 0; c < cols; ++c) v.at2(r, c) = x[c] / nn;
    }
    return make_node(std::move(v), {a}, [a, rows, cols, norms](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = n.grad.data() + r * cols;
            const double* y = n.value.data() + r * cols;
            double gy = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gy += g[c] * y[c];
            for (std::size_t c = 0; c < cols; ++c)
                da.at2(r, c) += (g[c] - gy * y[c]) / norms[r];
        }
    });
}

NodePtr rmsnorm_rows(const NodePtr& a, const NodePtr& gain) {
    require_rank(a, 2, "rmsnorm_rows");
    require_rank(gain, 1, "rmsnorm_rows");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    if (gain->value.dim(0) != cols) throw ParameterError("rmsnorm_rows: gain width mismatch");
    constexpr double kEps = 1e-8;
    Tensor v({rows, cols});
    std::vector<double> inv_rms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->value.data() + r * cols;
        double ms = 0.0;
        for (std::size_t c = 0; c < cols; ++c) ms += x[c] * x[c];
        ms = ms / static_cast<double>(cols) + kEps;
        const double s = 1.0 / std::sqrt(ms);
        inv_rms[r] = s;
        for (std::size_t c = 0; c < cols; ++c) v.at2(r, c) = x[c] * s * gain->value[c];
    }
    return make_node(std::move(v), {a, gain}, [a, gain, rows, cols, inv_rms](Node& n) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = n.grad.data() + r * cols;
            const double* x = a->value.data() + r * cols;
            const double s = inv_rms[r];
            if (a->requires_grad) {
                double acc = 0.0;  // sum_i g_i * gain_i * x_i
                for (std::size_t c = 0; c < cols; ++c) acc += g[c] * gain->value[c] * x[c];
                const double k = s * s * s * acc / static_cast<double>(cols);
                Tensor& da = a->ensure_grad();
                for (std::size_t c = 0; c < cols; ++c)
                    da.at2(r, c) += g[c] * gain->value[c] * s - k * x[c];
            }
            if (gain->requires_grad) {
                Tensor& dg = gain->ensure_grad();
                for (std::size_t c = 0; c < cols; ++c) dg[c] += g[c] * x[c] * s;
            }
        }
    });
}

NodePtr softmax_rows(const NodePtr& a) {
    require_rank(a, 2, "softmax_rows");
    const std::size_t rows = a->value.dim(0), cols = a->value.dim(1);
    Tensor v({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a->value.data() + r * cols;
        double mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            v.at2(r, c) = std::exp(x[c] - mx);
            sum += v.at2(r, c);
        }
        for (std::size_t c = 0; c < cols; ++c) v.at2(r, c) /= sum;
    }
    return make_node(std::move(v), {a}, [a, rows, cols](Node& n) {
        if (!a->requires_grad) return;
        Tensor& da = a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* g = n.grad.data() + r * cols;
            const double* p = n.value.data() + r * cols;
            double gp = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gp += g[c] * p[c];
            for (std::size_t c = 0; c < cols; ++c) da.at2(r, c) += p[c] * (g[c] - gp);
        }
    });
}

NodePtr cross_entropy_rows(const NodePtr& logits, const std::vector<std::size_t>& targets,
                           const std::vector<bool>* row_mask) {
    require_rank(logits, 2, "cross_entropy_rows");
    const std::size_t rows = logits->value.dim(0), cols = logits->value.dim(1);
    if (targets.size() != rows) throw ParameterError("cross_entropy_rows: target count mismatch");
    if (row_mask && row_mask->size() != rows) {
        throw ParameterError("cross_entropy_rows: mask size mismatch");
    }
    std::size_t counted = 0;
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (row_mask && !(*row_mask)[r]) continue;
        if (targets[r] >= cols) throw ParameterError("cross_entropy_rows: target out of range");
        const double* x = logits->value.data() + r * cols;
        double mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
        total += (mx + std::log(sum)) - x[targets[r]];
        ++counted;
    }
    if (counted == 0) throw ParameterError("cross_entropy_rows: no rows counted");
    const double inv = 1.0 / static_cast<double>(counted);
    std::vector<bool> mask_copy = row_mask ? *row_mask : std::vector<bool>();
    return make_node(Tensor::scalar(total * inv), {logits},
                     [logits, targets, mask_copy, rows, cols, inv](Node& n) {
        if (!logits->requires_grad) return;
        Tensor& da = logits->ensure_grad();
        const double gscale = n.grad[0] * inv;
        for (std::size_t r = 0; r < rows; ++r) {
            if (!mask_copy.empty() && !mask_copy[r]) continue;
            const double* x = logits->value.data() + r * cols;
            double mx = x[0];
            for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
            double sum = 0.0;
            for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
            for (std::size_t c = 0; c < cols; ++c) {
                const double p = std::exp(x[c] - mx) / sum;
                da.at2(r, c) += gscale * (p - (c == targets[r] ? 1.0 : 0.0));
            }
        }
    });
}

NodePtr kl_rows(const Tensor& target, const NodePtr& predicted) {
    require_rank(predicted, 2, "kl_rows");
    if (!target.same_shape(predicted->value)) throw ParameterError("kl_rows: shape mismatch");
    const std::size_t rows = target.dim(0), cols = target.dim(1);
    if (rows == 0) throw ParameterError("kl_rows: empty");
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double t = target.at2(r, c);
            if (t == 0.0) continue;
            const double p = predicted->value.at2(r, c);
            if (p <= 0.0) {
                throw DegenerateInputError("kl_rows: predicted is zero under positive target");
            }
            total += t * std::log(t / p);
        }
    }
    const double inv = 1.0 / static_cast<double>(rows);
    return make_node(Tensor::scalar(total * inv), {predicted},
                     [predicted, target, rows, cols, inv](Node& n) {
        if (!predicted->requires_grad) return;
        Tensor& dp = predicted->ensure_grad();
        const double gscale = n.grad[0] * inv;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double t = target.at2(r, c);
                if (t == 0.0) continue;
                dp.at2(r, c) -= gscale * t / predicted->value.at2(r, c);
            }
        }
    });
}

}  // namespace emotok::ad
