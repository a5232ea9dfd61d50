#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "emotok/autodiff.hpp"
#include "emotok/gradcheck.hpp"

using namespace emotok;

namespace {

// Gradient-checks a scalar graph built from one named parameter.
void check_op(const std::string& name, std::vector<std::size_t> shape,
              const std::function<ad::NodePtr(const ad::NodePtr&)>& graph, std::uint64_t seed,
              double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    ParameterStore params;
    params.add("x", random_uniform(shape, lo, hi, rng));

    auto loss = [&]() {
        auto leaves = ad::make_leaves(params);
        return graph(leaves.at("x"))->value.value();
    };
    auto leaves = ad::make_leaves(params);
    auto root = graph(leaves.at("x"));
    ad::backward(root);
    auto grads = ad::collect_grads(leaves);
    auto report = numerics::finite_diff_check(loss, params, grads, 1e-6, 1e-5);
    INFO("op ", name, " worst=", report.worst_param, "[", report.worst_index,
         "] analytic=", report.worst_analytic, " numeric=", report.worst_numeric);
    CHECK(report.pass);
}

// Weighted sum so every output coordinate contributes asymmetrically.
ad::NodePtr spread_sum(const ad::NodePtr& node) {
    Tensor w(node->value.shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return ad::sum_all(ad::mul_const(node, w));
}

}  // namespace

TEST_CASE("backward requires a scalar root") {
    auto x = ad::leaf(Tensor::from_vector({1.0, 2.0}));
    CHECK_THROWS_AS(ad::backward(ad::scale(x, 2.0)), ParameterError);
}

TEST_CASE("gradient accumulates over a reused node") {
    auto x = ad::leaf(Tensor::from_vector({3.0}));
    auto y = ad::mul(x, x);  // x^2
    ad::backward(ad::sum_all(y));
    CHECK(x->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("elementwise and linear primitives pass finite differences") {
    check_op("add", {3, 4}, [](const ad::NodePtr& x) {
        return spread_sum(ad::add(x, ad::scale(x, 0.5)));
    }, 1);
    check_op("sub", {3, 4}, [](const ad::NodePtr& x) {
        return spread_sum(ad::sub(ad::scale(x, 2.0), x));
    }, 2);
    check_op("mul", {3, 4}, [](const ad::NodePtr& x) {
        return spread_sum(ad::mul(x, ad::add(x, x)));
    }, 3);
    check_op("relu", {4, 5}, [](const ad::NodePtr& x) {
        return spread_sum(ad::relu(x));
    }, 4);
    check_op("matmul", {3, 4}, [](const ad::NodePtr& x) {
        return spread_sum(ad::matmul(x, ad::transpose(x)));
    }, 5);
    check_op("reshape+mean", {2, 6}, [](const ad::NodePtr& x) {
        return ad::mean_all(ad::reshape(x, {3, 4}));
    }, 6);
    check_op("add_rowvec", {12}, [](const ad::NodePtr& x) {
        auto mat = ad::reshape(ad::slice_rows(ad::reshape(x, {3, 4}), 0, 2), {2, 4});
        auto vec = ad::reshape(ad::slice_rows(ad::reshape(x, {3, 4}), 2, 1), {4});
        return spread_sum(ad::add_rowvec(mat, vec));
    }, 7);
}

TEST_CASE("structural primitives pass finite differences") {
    check_op("concat_slice_rows", {4, 3}, [](const ad::NodePtr& x) {
        auto a = ad::slice_rows(x, 0, 2);
        auto b = ad::slice_rows(x, 2, 2);
        return spread_sum(ad::concat_rows({b, a}));
    }, 8);
    check_op("concat_slice_cols", {3, 6}, [](const ad::NodePtr& x) {
        auto a = ad::slice_cols(x, 0, 2);
        auto b = ad::slice_cols(x, 2, 4);
        return spread_sum(ad::concat_cols({b, a}));
    }, 9);
    check_op("row_gather repeated", {4, 3}, [](const ad::NodePtr& x) {
        return spread_sum(ad::row_gather(x, {1, 1, 3, 0}));
    }, 10);
    check_op("pad_rows", {2, 3}, [](const ad::NodePtr& x) {
        return spread_sum(ad::pad_rows(x, 5));
    }, 11);
    check_op("mean_rows", {5, 3}, [](const ad::NodePtr& x) {
        return spread_sum(ad::mean_rows(x));
    }, 12);
}

TEST_CASE("pooling and graph primitives pass finite differences") {
    check_op("pool_both", {24}, [](const ad::NodePtr& x) {
        return spread_sum(ad::pool_mean(ad::reshape(x, {2, 3, 4}), ad::PoolAxis::Both));
    }, 13);
    check_op("pool_time", {24}, [](const ad::NodePtr& x) {
        return spread_sum(ad::pool_mean(ad::reshape(x, {2, 3, 4}), ad::PoolAxis::Time));
    }, 14);
    check_op("pool_joint", {24}, [](const ad::NodePtr& x) {
        return spread_sum(ad::pool_mean(ad::reshape(x, {2, 3, 4}), ad::PoolAxis::Joint));
    }, 15);

    Tensor adjacency = Tensor::matrix(3, 3, {0.5, 0.5, 0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.5,
                                             0.5});
    check_op("graph_mix", {24}, [adjacency](const ad::NodePtr& x) {
        return spread_sum(ad::graph_mix(ad::reshape(x, {2, 3, 4}), adjacency));
    }, 16);

    // temporal conv: both input and kernel gradients
    check_op("tconv_input", {30}, [](const ad::NodePtr& x) {
        auto kernel = ad::constant(Tensor::matrix(3, 5, std::vector<double>(15, 0.3)));
        return spread_sum(ad::temporal_conv_depthwise(ad::reshape(x, {3, 2, 5}), kernel));
    }, 17);
    check_op("tconv_kernel", {15}, [](const ad::NodePtr& x) {
        std::mt19937_64 rng(99);
        auto input = ad::constant(random_uniform({4, 2, 5}, -1.0, 1.0, rng));
        return spread_sum(ad::temporal_conv_depthwise(input, ad::reshape(x, {3, 5})));
    }, 18);
}

TEST_CASE("normalization and loss primitives pass finite differences") {
    check_op("row_normalize", {3, 5}, [](const ad::NodePtr& x) {
        return spread_sum(ad::row_normalize(x));
    }, 19, 0.2, 1.0);
    check_op("softmax_rows", {3, 5}, [](const ad::NodePtr& x) {
        return spread_sum(ad::softmax_rows(x));
    }, 20);
    check_op("rmsnorm input", {3, 5}, [](const ad::NodePtr& x) {
        auto gain = ad::constant(Tensor::full({5}, 1.2));
        return spread_sum(ad::rmsnorm_rows(x, gain));
    }, 21, 0.2, 1.0);
    check_op("rmsnorm gain", {5}, [](const ad::NodePtr& x) {
        std::mt19937_64 rng(7);
        auto input = ad::constant(random_uniform({3, 5}, 0.2, 1.0, rng));
        return spread_sum(ad::rmsnorm_rows(input, x));
    }, 22);
    check_op("cross_entropy_rows", {3, 4}, [](const ad::NodePtr& x) {
        return ad::cross_entropy_rows(x, {1, 3, 0});
    }, 23);
    check_op("cross_entropy_rows masked", {3, 4}, [](const ad::NodePtr& x) {
        std::vector<bool> mask{true, false, true};
        return ad::cross_entropy_rows(x, {1, 3, 0}, &mask);
    }, 24);
    check_op("kl_rows", {2, 3}, [](const ad::NodePtr& x) {
        Tensor target = Tensor::matrix(2, 3, {0.2, 0.3, 0.5, 1.0, 0.0, 0.0});
        return ad::kl_rows(target, ad::softmax_rows(x));
    }, 25);
}

TEST_CASE("primitive gradients hold at 100 random points") {
    // the module invariant: repeat a composite graph at fresh random points
    for (std::uint64_t seed = 100; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        ParameterStore params;
        params.add("x", random_uniform({3, 4}, -1.5, 1.5, rng));
        auto build = [&]() {
            auto leaves = ad::make_leaves(params);
            auto x = leaves.at("x");
            auto h = ad::relu(ad::matmul(x, ad::transpose(x)));
            auto p = ad::softmax_rows(h);
            return std::pair{ad::cross_entropy_rows(p, {0, 2, 1}), leaves};
        };
        auto loss = [&]() { return build().first->value.value(); };
        auto [root, leaves] = build();
        ad::backward(root);
        auto report =
            numerics::finite_diff_check(loss, params, ad::collect_grads(leaves), 1e-6, 1e-4);
        REQUIRE(report.pass);
    }
}

TEST_CASE("constants receive no gradient and prune subgraphs") {
    auto c = ad::constant(Tensor::from_vector({2.0, 3.0}));
    auto x = ad::leaf(Tensor::from_vector({1.0, 4.0}));
    auto y = ad::sum_all(ad::mul(c, x));
    ad::backward(y);
    CHECK(x->grad[0] == doctest::Approx(2.0));
    CHECK(x->grad[1] == doctest::Approx(3.0));
    CHECK(c->grad.numel() == 0);

    auto dead = ad::mul(c, c);
    CHECK_FALSE(dead->requires_grad);
    CHECK_FALSE(static_cast<bool>(dead->backprop));
}

TEST_CASE("kl_rows rejects zero predictions under positive target") {
    Tensor target = Tensor::matrix(1, 2, {1.0, 0.0});
    auto pred = ad::leaf(Tensor::matrix(1, 2, {0.0, 1.0}));
    CHECK_THROWS_AS(ad::kl_rows(target, pred), DegenerateInputError);
}

TEST_CASE("row_normalize rejects zero rows") {
    auto x = ad::leaf(Tensor::matrix(2, 2, {1.0, 1.0, 0.0, 0.0}));
    CHECK_THROWS_AS(ad::row_normalize(x), DegenerateInputError);
}

TEST_CASE("masking blocks gradients exactly (Eq. 1 retention)") {
    auto x = ad::leaf(Tensor::matrix(4, 2, {1, 2, 3, 4, 9, 9, 9, 9}));
    Tensor mask = Tensor::matrix(4, 2, {1, 1, 1, 1, 0, 0, 0, 0});
    auto masked = ad::mul_const(x, mask);
    ad::backward(ad::sum_all(masked));
    CHECK(x->grad.at2(0, 0) == 1.0);
    CHECK(x->grad.at2(1, 1) == 1.0);
    CHECK(x->grad.at2(2, 0) == 0.0);
    CHECK(x->grad.at2(3, 1) == 0.0);
}
