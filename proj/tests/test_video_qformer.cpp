#include <doctest.h>

#include <algorithm>

#include "omd/video_qformer.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace omd;
using testutil::random_mat;

namespace {
VideoQFormerConfig toy_config() {
    VideoQFormerConfig c;
    c.t_q = 2;
    c.d2 = 6;
    c.layers = 1;
    c.heads = 1;
    c.max_positions = 5;
    c.input_dim = 4;
    return c;
}
}  // namespace

TEST_CASE("shape contract for every window length") {
    VideoQFormerConfig c;
    c.t_q = 4;
    c.d2 = 32;
    c.layers = 2;
    c.heads = 4;
    c.max_positions = 8;
    c.input_dim = 64;
    ParamStore store;
    Rng rng(1);
    VideoQFormer vqf(c, store, rng);
    Rng data_rng(2);
    for (int l = 1; l <= 8; ++l) {
        Mat f = vqf.forward(random_mat(l, 64, data_rng));
        CHECK(f.rows() == 4);
        CHECK(f.cols() == 32);
    }
    CHECK_THROWS_WITH_AS(vqf.forward(random_mat(9, 64, data_rng)),
                         doctest::Contains("max_positions"), ValidationError);
    CHECK_THROWS_AS(vqf.forward(random_mat(4, 32, data_rng)), ShapeError);
}

TEST_CASE("toy forward matches the straight-line attention oracle") {
    ParamStore store;
    Rng rng(11);
    VideoQFormerConfig c = toy_config();
    VideoQFormer vqf(c, store, rng);
    Rng data_rng(12);
    for (int trial = 0; trial < 8; ++trial) {
        Mat v = random_mat(1 + trial % 5, 4, data_rng, -0.5, 0.5);
        Mat got = vqf.forward(v);
        Mat want = oracle::video_qformer_forward(store, c, v);
        for (int i = 0; i < got.rows(); ++i)
            for (int j = 0; j < got.cols(); ++j) {
                const double denom =
                    std::max({1.0, std::fabs(want(i, j)), std::fabs(got(i, j))});
                CHECK(std::fabs(got(i, j) - want(i, j)) / denom < 1e-10);
            }
    }
}

TEST_CASE("without temporal positions the output ignores row order") {
    VideoQFormerConfig c = toy_config();
    c.use_temporal_positions = false;
    ParamStore store;
    Rng rng(21);
    VideoQFormer vqf(c, store, rng);
    Rng data_rng(22);

    SUBCASE("identical rows: exact invariance") {
        Mat row = random_mat(1, 4, data_rng);
        Mat v(5, 4);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) v(i, j) = row(0, j);
        Mat f1 = vqf.forward(v);
        Mat f2 = vqf.forward(v);  // same matrix; permutations of equal rows
        CHECK(max_abs_diff(f1, f2) == 0.0);
    }

    SUBCASE("distinct rows: permutation changes nothing beyond roundoff") {
        Mat v = random_mat(5, 4, data_rng);
        Mat f1 = vqf.forward(v);
        Mat shuffled(5, 4);
        const int perm[5] = {3, 0, 4, 2, 1};
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 4; ++j) shuffled(i, j) = v(perm[i], j);
        Mat f2 = vqf.forward(shuffled);
        CHECK(max_abs_diff(f1, f2) < 1e-9);
    }
}

TEST_CASE("temporal positions make row order matter") {
    int sensitive_seeds = 0;
    for (int seed = 0; seed < 10; ++seed) {
        VideoQFormerConfig c = toy_config();
        ParamStore store;
        Rng rng(100 + seed);
        VideoQFormer vqf(c, store, rng);
        Rng data_rng(200 + seed);
        Mat v = random_mat(4, 4, data_rng, -3.0, 3.0);
        Mat reversed(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) reversed(i, j) = v(3 - i, j);
        if (max_abs_diff(vqf.forward(v), vqf.forward(reversed)) > 1e-6) ++sensitive_seeds;
    }
    CHECK(sensitive_seeds > 0);
}

TEST_CASE("attention maps are row-stochastic") {
    VideoQFormerConfig c;
    c.t_q = 3;
    c.d2 = 8;
    c.layers = 2;
    c.heads = 2;
    c.max_positions = 6;
    c.input_dim = 4;
    ParamStore store;
    Rng rng(31);
    VideoQFormer vqf(c, store, rng);
    Rng data_rng(32);
    Mat v = random_mat(5, 4, data_rng);

    VideoQFormerCache cache;
    AttentionTrace trace;
    vqf.forward(v, cache, &trace);
    REQUIRE(trace.self_attn.size() == 2);
    REQUIRE(trace.cross_attn.size() == 2);
    for (const auto& layer : {trace.self_attn, trace.cross_attn})
        for (const auto& heads : layer)
            for (const auto& map : heads)
                for (int i = 0; i < map.rows(); ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < map.cols(); ++j) sum += map(i, j);
                    CHECK(std::fabs(sum - 1.0) < 1e-12);
                }
    for (const auto& map : trace.cross_attn[0]) {
        CHECK(map.rows() == 3);
        CHECK(map.cols() == 5);
    }
}

TEST_CASE("parameter listing is complete, stable, and includes the query bank") {
    VideoQFormerConfig c = toy_config();
    ParamStore store1;
    Rng rng1(41);
    VideoQFormer a(c, store1, rng1);
    auto groups = a.parameter_groups();

    bool found_queries = false;
    std::size_t listed_elements = 0;
    for (const auto& [name, rows, cols] : groups) {
        listed_elements += static_cast<std::size_t>(rows) * cols;
        if (name == "query_bank") {
            found_queries = true;
            CHECK(rows == c.t_q);
            CHECK(cols == c.d2);
        }
    }
    CHECK(found_queries);

    // The listing partitions this module's parameters exactly.
    std::size_t module_elements = 0;
    for (const auto& p : store1.all())
        if (p->name.rfind("video_qformer.", 0) == 0) module_elements += p->value.size();
    CHECK(listed_elements == module_elements);

    ParamStore store2;
    Rng rng2(999);
    VideoQFormer b(c, store2, rng2);
    CHECK(groups == b.parameter_groups());
}

TEST_CASE("video qformer gradients match finite differences") {
    VideoQFormerConfig c = toy_config();
    c.layers = 2;
    c.heads = 2;
    ParamStore store;
    Rng rng(51);
    VideoQFormer vqf(c, store, rng);
    Rng data_rng(52);
    Mat v = random_mat(3, 4, data_rng);

    auto loss = [&] {
        Mat f = vqf.forward(v);
        double s = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i)
            s += f.data()[i] * (0.4 - 0.07 * static_cast<double>(i % 3));
        return s;
    };

    store.zero_grads();
    VideoQFormerCache cache;
    Mat f = vqf.forward(v, cache);
    Mat df(f.rows(), f.cols());
    for (std::size_t i = 0; i < df.size(); ++i)
        df.data()[i] = 0.4 - 0.07 * static_cast<double>(i % 3);
    Mat dv = vqf.backward(cache, df);

    auto res = testutil::finite_diff_check(store, loss, {VideoQFormer::kGroupName});
    INFO("worst parameter: ", res.worst_param);
    CHECK(res.max_rel_err < 1e-4);

    // Input gradient too (the path the encoder trains through).
    const double h = 1e-6;
    for (int i = 0; i < v.rows(); ++i)
        for (int j = 0; j < v.cols(); ++j) {
            const double saved = v(i, j);
            v(i, j) = saved + h;
            const double up = loss();
            v(i, j) = saved - h;
            const double down = loss();
            v(i, j) = saved;
            CHECK(dv(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-4));
        }
}
