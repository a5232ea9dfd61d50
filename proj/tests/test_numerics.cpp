#include <doctest.h>

#include <cmath>
#include <random>

#include "emotok/gradcheck.hpp"
#include "emotok/numerics.hpp"

using namespace emotok;
namespace num = emotok::numerics;

TEST_CASE("cosine similarity") {
    CHECK(num::cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
          doctest::Approx(0.0));
    CHECK(num::cosine_similarity(std::vector<double>{2, 0}, std::vector<double>{1, 0}) ==
          doctest::Approx(1.0));
    // direct scalar evaluation: 32 / (sqrt(14) * sqrt(77))
    const double expected = 32.0 / (std::sqrt(14.0) * std::sqrt(77.0));
    CHECK(num::cosine_similarity(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5, 6}) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.974631846).epsilon(1e-9));

    CHECK_THROWS_AS(num::cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                    DegenerateInputError);
    CHECK_THROWS_AS(num::cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 0}),
                    ParameterError);
}

TEST_CASE("cosine similarity scale invariance") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(8), b(8);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = u(rng);
        const double k = 0.001 + std::abs(u(rng)) * 100.0;
        std::vector<double> ka = a;
        for (auto& x : ka) x *= k;
        CHECK(num::cosine_similarity(a, b) ==
              doctest::Approx(num::cosine_similarity(ka, b)).epsilon(1e-12));
    }
}

TEST_CASE("softmax") {
    auto single = num::softmax(std::vector<double>{5.0}, 1.0);
    CHECK(single.size() == 1);
    CHECK(single[0] == doctest::Approx(1.0));

    auto uniform = num::softmax(std::vector<double>{1, 1, 1, 1}, 0.5);
    for (double p : uniform) CHECK(p == doctest::Approx(0.25));

    auto sharp = num::softmax(std::vector<double>{1.0, 0.0}, 0.1);
    const double e10 = std::exp(10.0);
    CHECK(sharp[0] == doctest::Approx(e10 / (e10 + 1.0)).epsilon(1e-12));
    CHECK(sharp[1] == doctest::Approx(1.0 / (e10 + 1.0)).epsilon(1e-9));
    CHECK(sharp[0] == doctest::Approx(0.9999546).epsilon(1e-6));

    CHECK_THROWS_AS(num::softmax(std::vector<double>{1.0}, 0.0), ParameterError);
    CHECK_THROWS_AS(num::softmax(std::vector<double>{1.0}, -1.0), ParameterError);
}

TEST_CASE("softmax sums to one and is permutation-equivariant") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (std::size_t len : {2ul, 7ul, 64ul, 4096ul}) {
        std::vector<double> x(len);
        for (auto& v : x) v = u(rng);
        auto p = num::softmax(x, 0.7);
        double sum = 0.0;
        for (double v : p) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);

        // reverse as the permutation
        std::vector<double> rx(x.rbegin(), x.rend());
        auto rp = num::softmax(rx, 0.7);
        for (std::size_t i = 0; i < len; ++i) {
            CHECK(rp[i] == doctest::Approx(p[len - 1 - i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("kl divergence") {
    std::vector<double> p{0.3, 0.2, 0.5};
    CHECK(num::kl_divergence(p, p) == doctest::Approx(0.0));

    // -log(0.9999546...) with the exact softmax tail
    const double e10 = std::exp(10.0);
    std::vector<double> predicted{e10 / (e10 + 1.0), 1.0 / (e10 + 1.0)};
    CHECK(num::kl_divergence(std::vector<double>{1.0, 0.0}, predicted) ==
          doctest::Approx(-std::log(predicted[0])).epsilon(1e-12));
    CHECK(num::kl_divergence(std::vector<double>{1.0, 0.0}, predicted) ==
          doctest::Approx(4.5399e-5).epsilon(1e-3));

    const double direct = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    CHECK(num::kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75}) ==
          doctest::Approx(direct).epsilon(1e-12));
    CHECK(direct == doctest::Approx(0.1438410).epsilon(1e-6));

    CHECK_THROWS_AS(
        num::kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}),
        DegenerateInputError);
    CHECK_THROWS_AS(
        num::kl_divergence(std::vector<double>{0.7, 0.7}, std::vector<double>{0.5, 0.5}),
        ParameterError);
}

TEST_CASE("kl divergence is nonnegative with equality iff equal (Gibbs)") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> t(6), q(6);
        double st = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
            t[i] = u(rng);
            q[i] = u(rng);
            st += t[i];
            sq += q[i];
        }
        for (std::size_t i = 0; i < 6; ++i) {
            t[i] /= st;
            q[i] /= sq;
        }
        CHECK(num::kl_divergence(t, q) >= 0.0);
        CHECK(num::kl_divergence(t, t) <= 1e-12);
    }
}

TEST_CASE("cross entropy") {
    // -log(1/(1+e^-20))
    CHECK(num::cross_entropy(std::vector<double>{10.0, -10.0}, 0) ==
          doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
    CHECK(num::cross_entropy(std::vector<double>{10.0, -10.0}, 0) ==
          doctest::Approx(2.061e-9).epsilon(1e-2));

    CHECK(num::cross_entropy(std::vector<double>{0, 0, 0, 0}, 2) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // vanishing probability evaluated via log-sum-exp, no overflow
    const double big = num::cross_entropy(std::vector<double>{0.0, 100.0}, 0);
    CHECK(big == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(std::isfinite(big));

    CHECK_THROWS_AS(num::cross_entropy(std::vector<double>{1.0, 2.0}, 2), ParameterError);
}

TEST_CASE("sgd step") {
    num::SgdState state;
    state.learning_rate = 0.1;
    state.momentum = 0.0;
    Tensor p = Tensor::from_vector({1.0});
    Tensor v;
    num::sgd_step(p, Tensor::from_vector({0.5}), v, state);
    CHECK(p[0] == doctest::Approx(0.95));

    Tensor p2 = Tensor::from_vector({1.0, -2.0});
    Tensor v2;
    num::sgd_step(p2, Tensor::zeros({2}), v2, state);
    CHECK(p2[0] == 1.0);
    CHECK(p2[1] == -2.0);

    // two steps, momentum 0.9, constant gradient: v=1 then v=1.9
    num::SgdState m;
    m.learning_rate = 0.1;
    m.momentum = 0.9;
    Tensor p3 = Tensor::from_vector({0.0});
    Tensor v3;
    num::sgd_step(p3, Tensor::from_vector({1.0}), v3, m);
    CHECK(p3[0] == doctest::Approx(-0.1));
    num::sgd_step(p3, Tensor::from_vector({1.0}), v3, m);
    CHECK(p3[0] == doctest::Approx(-0.29));

    Tensor bad;
    CHECK_THROWS_AS(num::sgd_step(p3, Tensor::zeros({3}), bad, m), ParameterError);
}

TEST_CASE("sgd step over a parameter store skips frozen entries") {
    ParameterStore params;
    params.add("a", Tensor::from_vector({1.0}), true);
    params.add("b", Tensor::from_vector({1.0}), false);
    std::map<std::string, Tensor> grads{{"a", Tensor::from_vector({1.0})},
                                        {"b", Tensor::from_vector({1.0})}};
    num::SgdState state;
    state.learning_rate = 0.5;
    state.momentum = 0.0;
    num::sgd_step(params, grads, state);
    CHECK(params.get("a")[0] == doctest::Approx(0.5));
    CHECK(params.get("b")[0] == 1.0);
}

TEST_CASE("finite_diff_check on closed-form cases") {
    ParameterStore params;
    params.add("p", Tensor::from_vector({3.0}));

    SUBCASE("quadratic") {
        auto loss = [&]() {
            const double x = params.get("p")[0];
            return x * x;
        };
        std::map<std::string, Tensor> analytic{{"p", Tensor::from_vector({6.0})}};
        auto report = num::finite_diff_check(loss, params, analytic, 1e-5, 1e-8);
        CHECK(report.pass);
        CHECK(report.max_rel_error <= 1e-8);
        CHECK(params.get("p")[0] == 3.0);  // restored
    }

    SUBCASE("constant loss has zero gradient both ways") {
        auto loss = [&]() { return 42.0; };
        std::map<std::string, Tensor> analytic{{"p", Tensor::from_vector({0.0})}};
        auto report = num::finite_diff_check(loss, params, analytic);
        CHECK(report.pass);
        CHECK(report.max_rel_error == 0.0);
    }

    SUBCASE("wrong gradient is caught") {
        auto loss = [&]() {
            const double x = params.get("p")[0];
            return x * x;
        };
        std::map<std::string, Tensor> analytic{{"p", Tensor::from_vector({5.0})}};
        auto report = num::finite_diff_check(loss, params, analytic);
        CHECK(!report.pass);
    }
}

TEST_CASE("finite_diff_check on cross_entropy at random logits") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    ParameterStore params;
    Tensor logits({5});
    for (std::size_t i = 0; i < 5; ++i) logits[i] = u(rng);
    params.add("logits", logits);
    const std::size_t target = 2;

    auto loss = [&]() { return num::cross_entropy(params.get("logits").span(), target); };
    // analytic: softmax - onehot
    auto p = num::softmax(params.get("logits").span(), 1.0);
    Tensor grad({5});
    for (std::size_t i = 0; i < 5; ++i) grad[i] = p[i] - (i == target ? 1.0 : 0.0);
    auto report = num::finite_diff_check(loss, params, {{"logits", grad}}, 1e-6, 1e-4);
    CHECK(report.pass);
}
