#include <doctest.h>

#include "omd/nn.hpp"
#include "testutil.hpp"

using namespace omd;
using testutil::random_mat;

TEST_CASE("matmul variants agree with direct loops") {
    Rng rng(11);
    Mat a = random_mat(3, 5, rng);
    Mat b = random_mat(5, 4, rng);
    Mat ab = matmul(a, b);
    REQUIRE(ab.rows() == 3);
    REQUIRE(ab.cols() == 4);
    CHECK(max_abs_diff(matmul_bt(a, transpose(b)), ab) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(max_abs_diff(matmul_at(transpose(a), b), ab) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax rows are distributions and backward matches identity") {
    Rng rng(3);
    Mat s = random_mat(4, 6, rng, -5.0, 5.0);
    Mat p = nn::softmax_rows(s);
    for (int i = 0; i < p.rows(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < p.cols(); ++j) {
            sum += p(i, j);
            CHECK(p(i, j) > 0.0);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("gelu gradient matches finite differences") {
    for (double x : {-3.0, -0.5, 0.0, 0.2, 1.7}) {
        const double h = 1e-6;
        const double numeric = (nn::gelu_scalar(x + h) - nn::gelu_scalar(x - h)) / (2 * h);
        CHECK(nn::gelu_grad_scalar(x) == doctest::Approx(numeric).epsilon(1e-7));
    }
}

namespace {
// Weighted sum of entries, fixed weights; a scalar loss with dense gradient.
double weighted_sum(const Mat& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += y.data()[i] * (0.3 + 0.1 * static_cast<double>(i % 7));
    return s;
}

Mat weighted_sum_grad(const Mat& y) {
    Mat g(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i)
        g.data()[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return g;
}
}  // namespace

TEST_CASE("linear layer gradients") {
    ParamStore store;
    Rng rng(5);
    nn::Linear lin(store, "m.fc", 4, 3, rng);
    Mat x = random_mat(5, 4, rng);

    store.zero_grads();
    Mat y = lin.forward(x);
    lin.backward(x, weighted_sum_grad(y));
    auto res = testutil::finite_diff_check(store, [&] { return weighted_sum(lin.forward(x)); });
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("layernorm gradients") {
    ParamStore store;
    Rng rng(6);
    nn::LayerNorm ln(store, "m.ln", 6);
    testutil::fill_random(ln.gamma->value, rng, 0.5, 1.5);
    testutil::fill_random(ln.beta->value, rng, -0.2, 0.2);
    Mat x = random_mat(4, 6, rng);

    nn::LayerNorm::Cache cache;
    store.zero_grads();
    Mat y = ln.forward(x, cache);
    Mat dx = ln.backward(cache, weighted_sum_grad(y));

    auto res = testutil::finite_diff_check(store, [&] {
        nn::LayerNorm::Cache c;
        return weighted_sum(ln.forward(x, c));
    });
    CHECK(res.max_rel_err < 1e-5);

    // Input gradient via explicit perturbation.
    const double h = 1e-6;
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            const double saved = x(i, j);
            nn::LayerNorm::Cache c;
            x(i, j) = saved + h;
            const double up = weighted_sum(ln.forward(x, c));
            x(i, j) = saved - h;
            const double down = weighted_sum(ln.forward(x, c));
            x(i, j) = saved;
            CHECK(dx(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
        }
}

TEST_CASE("multi-head attention gradients: self and cross") {
    ParamStore store;
    Rng rng(7);
    nn::MultiHeadAttention attn(store, "m.attn", 8, 2, rng);
    Mat q_in = random_mat(3, 8, rng);
    Mat kv_in = random_mat(5, 8, rng);

    SUBCASE("cross attention") {
        nn::MultiHeadAttention::Cache cache;
        store.zero_grads();
        Mat y = attn.forward(q_in, kv_in, cache);
        Mat dq(3, 8), dkv(5, 8);
        attn.backward(cache, weighted_sum_grad(y), dq, dkv);
        auto res = testutil::finite_diff_check(store, [&] {
            nn::MultiHeadAttention::Cache c;
            return weighted_sum(attn.forward(q_in, kv_in, c));
        });
        CHECK(res.max_rel_err < 1e-5);

        const double h = 1e-6;
        for (int i = 0; i < kv_in.rows(); ++i)
            for (int j = 0; j < kv_in.cols(); ++j) {
                const double saved = kv_in(i, j);
                nn::MultiHeadAttention::Cache c;
                kv_in(i, j) = saved + h;
                const double up = weighted_sum(attn.forward(q_in, kv_in, c));
                kv_in(i, j) = saved - h;
                const double down = weighted_sum(attn.forward(q_in, kv_in, c));
                kv_in(i, j) = saved;
                CHECK(dkv(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
            }
    }

    SUBCASE("self attention accumulates both input paths") {
        nn::MultiHeadAttention::Cache cache;
        store.zero_grads();
        Mat y = attn.forward(q_in, q_in, cache);
        Mat dx(3, 8);
        attn.backward(cache, weighted_sum_grad(y), dx, dx);
        const double h = 1e-6;
        for (int i = 0; i < q_in.rows(); ++i)
            for (int j = 0; j < q_in.cols(); ++j) {
                const double saved = q_in(i, j);
                nn::MultiHeadAttention::Cache c;
                q_in(i, j) = saved + h;
                const double up = weighted_sum(attn.forward(q_in, q_in, c));
                q_in(i, j) = saved - h;
                const double down = weighted_sum(attn.forward(q_in, q_in, c));
                q_in(i, j) = saved;
                CHECK(dx(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
            }
    }
}

TEST_CASE("qformer block gradients") {
    ParamStore store;
    Rng rng(9);
    nn::QFormerBlock block(store, "m.block", 8, 2, rng);
    Mat x = random_mat(2, 8, rng);
    Mat memory = random_mat(4, 8, rng);

    nn::QFormerBlock::Cache cache;
    store.zero_grads();
    Mat y = block.forward(x, memory, cache);
    Mat dmem(4, 8);
    block.backward(cache, weighted_sum_grad(y), dmem);
    auto res = testutil::finite_diff_check(store, [&] {
        nn::QFormerBlock::Cache c;
        return weighted_sum(block.forward(x, memory, c));
    });
    CHECK(res.max_rel_err < 1e-5);

    const double h = 1e-6;
    for (int i = 0; i < memory.rows(); ++i)
        for (int j = 0; j < memory.cols(); ++j) {
            const double saved = memory(i, j);
            nn::QFormerBlock::Cache c;
            memory(i, j) = saved + h;
            const double up = weighted_sum(block.forward(x, memory, c));
            memory(i, j) = saved - h;
            const double down = weighted_sum(block.forward(x, memory, c));
            memory(i, j) = saved;
            CHECK(dmem(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(2e-4));
        }
}
