#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "seqlab/gradcheck.hpp"
#include "seqlab/layers.hpp"
#include "seqlab/rng.hpp"

using namespace seqlab;

namespace {

template <typename S>
std::vector<ParamRef<S>> lstm_params(LstmLayer<S>& l) {
    return {
        {"w_f", &l.w_f, &l.gw_f}, {"w_i", &l.w_i, &l.gw_i}, {"w_c", &l.w_c, &l.gw_c},
        {"w_o", &l.w_o, &l.gw_o}, {"b_f", &l.b_f, &l.gb_f}, {"b_i", &l.b_i, &l.gb_i},
        {"b_c", &l.b_c, &l.gb_c}, {"b_o", &l.b_o, &l.gb_o},
    };
}

double tensor_sum(const Tensor<double>& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s;
}

Tensor<double> random_matrix(std::size_t r, std::size_t c, SeededRng& rng, double scale = 1.0) {
    Tensor<double> t({r, c});
    for (auto& v : t.data) v = rng.uniform_symmetric(scale);
    return t;
}

}  // namespace

TEST_CASE("embedding lookup repeats rows and honors identity weights") {
    SeededRng rng(5, RngStream::weight_init);
    EmbeddingLayer<double> emb;
    emb.init(4, 3, rng);

    const int twice[] = {0, 0};
    Tensor<double> out = emb.forward(twice);
    REQUIRE(out.rows() == 2);
    for (std::size_t j = 0; j < 3; ++j) REQUIRE(out.at(0, j) == out.at(1, j));

    EmbeddingLayer<double> onehot;
    onehot.init(4, 4, rng);
    onehot.weight = identity<double>(4);
    const int k[] = {2};
    Tensor<double> row = onehot.forward(k);
    REQUIRE(row.data == std::vector<double>{0, 0, 1, 0});
}

TEST_CASE("embedding rejects out-of-range tokens with the offending position") {
    SeededRng rng(6, RngStream::weight_init);
    EmbeddingLayer<double> emb;
    emb.init(4, 3, rng);
    const int bad[] = {1, 7};
    REQUIRE_THROWS_MATCHES(emb.forward(bad), std::invalid_argument,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("position 1")));
}

TEST_CASE("embedding backward matches finite differences on a 3x2 table") {
    SeededRng rng(7, RngStream::weight_init);
    EmbeddingLayer<double> emb;
    emb.init(3, 2, rng);
    const std::vector<int> tokens = {2, 0, 2};

    auto loss = [&] { return tensor_sum(emb.forward(tokens)); };
    auto grads = [&] {
        emb.zero_grad();
        Tensor<double> out = emb.forward(tokens);
        emb.backward(tokens, full<double>(out.shape, 1.0));
    };
    std::vector<ParamRef<double>> params = {{"weight", &emb.weight, &emb.grad}};
    REQUIRE(grad_check<double>(params, loss, grads) < 1e-6);

    // gradient of sum() accumulates exactly one unit per lookup
    grads();
    REQUIRE(emb.grad.at(0, 0) == 1.0);
    REQUIRE(emb.grad.at(1, 0) == 0.0);
    REQUIRE(emb.grad.at(2, 0) == 2.0);
}

TEST_CASE("lstm step with all-zero parameters has the closed form") {
    SeededRng rng(8, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(3, 4, rng);
    for (Tensor<double>* w : {&l.w_f, &l.w_i, &l.w_c, &l.w_o, &l.b_f, &l.b_i, &l.b_c, &l.b_o})
        w->fill(0.0);

    Tensor<double> x({1, 3}, {0.3, -0.2, 0.9});
    Tensor<double> h0({1, 4});
    Tensor<double> c0({1, 4}, {0.5, -1.0, 2.0, 0.0});
    auto [h, c] = l.step_forward(x, h0, c0);
    for (std::size_t j = 0; j < 4; ++j) {
        // gates all 0.5 and candidate 0: c = 0.5*c0, h = 0.5*tanh(0.5*c0)
        REQUIRE_THAT(c.at(0, j), Catch::Matchers::WithinAbs(0.5 * c0.at(0, j), 1e-15));
        REQUIRE_THAT(h.at(0, j),
                     Catch::Matchers::WithinAbs(0.5 * std::tanh(0.5 * c0.at(0, j)), 1e-15));
    }
}

TEST_CASE("lstm with a saturated input gate keeps the cell empty") {
    SeededRng rng(9, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(3, 4, rng);
    l.b_i.fill(-50.0);  // sigmoid(-50) ~ 2e-22

    Tensor<double> x({1, 3}, {1.0, -1.0, 0.5});
    auto [h, c] = l.step_forward(x, l.zero_state(1), l.zero_state(1));
    for (std::size_t j = 0; j < 4; ++j) {
        REQUIRE(std::abs(c.at(0, j)) < 1e-20);
        REQUIRE(std::abs(h.at(0, j)) < 1e-20);
    }
}

TEST_CASE("lstm gates stay strictly inside (0,1) and cells inside the fold bound") {
    SeededRng rng(10, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(3, 4, rng);
    SeededRng data(11, RngStream::data_train);
    std::vector<Tensor<double>> xs;
    for (int t = 0; t < 6; ++t) xs.push_back(random_matrix(2, 3, data, 3.0));
    l.sequence_forward(xs);
    for (std::size_t t = 0; t < l.cache.size(); ++t) {
        const auto& st = l.cache[t];
        for (const Tensor<double>* g : {&st.f, &st.i, &st.o}) {
            for (double v : g->data) {
                REQUIRE(v > 0.0);
                REQUIRE(v < 1.0);
            }
        }
        for (double v : st.cand.data) REQUIRE(std::abs(v) < 1.0);
        // |c_t| <= t+1 with zero initial cell: each step adds at most 1
        for (double v : st.c.data) REQUIRE(std::abs(v) <= static_cast<double>(t + 1));
    }
}

TEST_CASE("lstm single-step gradients match central differences") {
    SeededRng rng(12, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(3, 4, rng);
    SeededRng data(13, RngStream::data_train);
    const Tensor<double> x = random_matrix(1, 3, data);
    const Tensor<double> h0 = random_matrix(1, 4, data);
    const Tensor<double> c0 = random_matrix(1, 4, data);

    auto loss = [&] {
        l.clear_cache();
        auto [h, c] = l.step_forward(x, h0, c0);
        l.clear_cache();
        return tensor_sum(h);
    };
    auto grads = [&] {
        l.zero_grad();
        l.clear_cache();
        auto [h, c] = l.step_forward(x, h0, c0);
        l.step_backward(full<double>(h.shape, 1.0), Tensor<double>(c.shape));
    };
    REQUIRE(grad_check<double>(lstm_params(l), loss, grads) < 1e-5);
}

TEST_CASE("lstm zero upstream gradients produce zero parameter gradients") {
    SeededRng rng(14, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(2, 3, rng);
    SeededRng data(15, RngStream::data_train);
    l.zero_grad();
    auto [h, c] = l.step_forward(random_matrix(2, 2, data), l.zero_state(2), l.zero_state(2));
    l.step_backward(Tensor<double>(h.shape), Tensor<double>(c.shape));
    for (const auto& p : lstm_params(l))
        for (double g : p.grad->data) REQUIRE(g == 0.0);
}

TEST_CASE("lstm step backward without a cached forward is rejected") {
    SeededRng rng(16, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(2, 3, rng);
    REQUIRE_THROWS_AS(l.step_backward(Tensor<double>({1, 3}), Tensor<double>({1, 3})),
                      std::invalid_argument);
}

TEST_CASE("lstm sequence of length 1 equals the single step") {
    SeededRng rng(17, RngStream::weight_init);
    LstmLayer<double> a, b;
    a.init(3, 4, rng);
    b = a;
    SeededRng data(18, RngStream::data_train);
    Tensor<double> x = random_matrix(2, 3, data);

    auto hs = a.sequence_forward({x});
    auto [h1, c1] = b.step_forward(x, b.zero_state(2), b.zero_state(2));
    REQUIRE(hs.size() == 1);
    REQUIRE(hs[0].data == h1.data);
    // the fold starts from the all-zero state
    REQUIRE(a.cache.front().c_prev.data == std::vector<double>(8, 0.0));
}

TEST_CASE("lstm full-sequence gradients match central differences end-to-end") {
    SeededRng rng(19, RngStream::weight_init);
    LstmLayer<double> l;
    l.init(3, 4, rng);
    SeededRng data(20, RngStream::data_train);
    std::vector<Tensor<double>> xs;
    for (int t = 0; t < 25; ++t) xs.push_back(random_matrix(1, 3, data));

    auto loss = [&] {
        auto hs = l.sequence_forward(xs);
        l.clear_cache();
        double s = 0.0;
        for (const auto& h : hs) s += tensor_sum(h);
        return s;
    };
    auto grads = [&] {
        l.zero_grad();
        auto hs = l.sequence_forward(xs);
        std::vector<Tensor<double>> dhs(hs.size(), full<double>(hs[0].shape, 1.0));
        l.sequence_backward(dhs);
    };
    REQUIRE(grad_check<double>(lstm_params(l), loss, grads) < 1e-4);
}

TEST_CASE("projection with cross entropy behaves like a categorical likelihood") {
    const std::size_t v = 4;

    SECTION("probability mass on every target gives zero loss") {
        Tensor<double> probs({3, v});
        const std::vector<int> targets = {1, 3, 0};
        for (std::size_t t = 0; t < 3; ++t) probs.at(t, targets[t]) = 1.0;
        auto res = cross_entropy<double>(probs, targets);
        REQUIRE(res.loss == 0.0);
    }

    SECTION("uniform probabilities give ln V for any targets") {
        Tensor<double> probs = full<double>({5, v}, 1.0 / v);
        const std::vector<int> targets = {0, 1, 2, 3, 2};
        auto res = cross_entropy<double>(probs, targets);
        REQUIRE_THAT(res.loss, Catch::Matchers::WithinAbs(std::log(double(v)), 1e-12));
    }

    SECTION("gradient rows sum to zero") {
        SeededRng rng(21);
        Tensor<double> logits({6, v});
        for (auto& x : logits.data) x = rng.uniform_symmetric(2.0);
        Tensor<double> probs = softmax(logits);
        const std::vector<int> targets = {3, 2, 1, 0, 1, 2};
        auto res = cross_entropy<double>(probs, targets);
        for (std::size_t t = 0; t < 6; ++t) {
            double s = 0.0;
            for (std::size_t j = 0; j < v; ++j) s += res.grad_logits.at(t, j);
            REQUIRE_THAT(s, Catch::Matchers::WithinAbs(0.0, 1e-15));
        }
    }

    SECTION("out-of-range target is rejected") {
        Tensor<double> probs = full<double>({2, v}, 0.25);
        const std::vector<int> targets = {0, 9};
        REQUIRE_THROWS_AS(cross_entropy<double>(probs, targets), std::invalid_argument);
    }
}

TEST_CASE("projection gradients match central differences through cross entropy") {
    SeededRng rng(22, RngStream::weight_init);
    ProjectionLayer<double> proj;
    proj.init(4, 5, rng);
    SeededRng data(23, RngStream::data_train);
    Tensor<double> h = random_matrix(3, 4, data);
    const std::vector<int> targets = {2, 0, 4};

    auto loss = [&] {
        Tensor<double> probs = softmax(proj.forward(h));
        return cross_entropy<double>(probs, targets).loss;
    };
    auto grads = [&] {
        proj.zero_grad();
        Tensor<double> probs = softmax(proj.forward(h));
        proj.backward(cross_entropy<double>(probs, targets).grad_logits);
    };
    std::vector<ParamRef<double>> params = {{"weight", &proj.weight, &proj.gw},
                                            {"bias", &proj.bias, &proj.gb}};
    REQUIRE(grad_check<double>(params, loss, grads) < 1e-6);
}

TEST_CASE("grad_check flags a deliberately corrupted gradient") {
    SeededRng rng(24, RngStream::weight_init);
    ProjectionLayer<double> proj;
    proj.init(3, 4, rng);
    SeededRng data(25, RngStream::data_train);
    Tensor<double> h = random_matrix(2, 3, data);
    const std::vector<int> targets = {1, 3};

    auto loss = [&] {
        return cross_entropy<double>(softmax(proj.forward(h)), targets).loss;
    };
    auto corrupted = [&] {
        proj.zero_grad();
        proj.backward(cross_entropy<double>(softmax(proj.forward(h)), targets).grad_logits);
        // scale the largest-magnitude entry so the harness must notice
        std::size_t worst = 0;
        for (std::size_t i = 1; i < proj.gw.numel(); ++i)
            if (std::abs(proj.gw.data[i]) > std::abs(proj.gw.data[worst])) worst = i;
        proj.gw.data[worst] *= 2.0;
    };
    std::vector<ParamRef<double>> params = {{"weight", &proj.weight, &proj.gw}};
    REQUIRE(grad_check<double>(params, loss, corrupted) > 0.1);
}
