#include <doctest.h>

#include <cmath>

#include "omd/mistake_head.hpp"
#include "testutil.hpp"

using namespace omd;
using testutil::random_mat;

TEST_CASE("sigmoid identities and stability") {
    CHECK(sigmoid(0.0) == 0.5);
    for (double x : {0.5, 3.0, 30.0})
        CHECK(std::fabs(sigmoid(-x) - (1.0 - sigmoid(x))) < 1e-15);
    CHECK(sigmoid(700.0) == 1.0);   // no overflow, saturates cleanly
    CHECK(sigmoid(-700.0) > 0.0);
    CHECK(sigmoid(-700.0) < 1e-300);
    CHECK(sigmoid(2.0) == doctest::Approx(0.8807970779778823).epsilon(1e-15));
    CHECK_THROWS_AS(sigmoid(std::nan("")), ValidationError);
}

TEST_CASE("zero weights give probability one half") {
    ParamStore store;
    Rng rng(1);
    MistakeHead head(4, Aggregator::Max, store, rng);
    for (const auto& p : store.all()) p->value.fill(0.0);
    Rng data_rng(2);
    MistakeLogits out = head.classify(random_mat(3, 4, data_rng));
    for (double mi : out.m) CHECK(mi == 0.0);
    CHECK(out.aggregated_logit == 0.0);
    CHECK(out.probability == 0.5);
}

TEST_CASE("max aggregation picks the largest per-query logit") {
    // d2 = 1 with unit weight makes the logits equal the feature rows.
    ParamStore store;
    Rng rng(3);
    MistakeHead head(1, Aggregator::Max, store, rng);
    store.find("mistake_head.fc.weight")->value(0, 0) = 1.0;
    store.find("mistake_head.fc.bias")->value(0, 0) = 0.0;

    Mat f(3, 1);
    f(0, 0) = -1.2;
    f(1, 0) = 0.3;
    f(2, 0) = 2.0;
    MistakeLogits out = head.classify(f);
    CHECK(out.m == std::vector<double>{-1.2, 0.3, 2.0});
    CHECK(out.aggregated_logit == 2.0);
    CHECK(out.probability == doctest::Approx(0.8807970779778823).epsilon(1e-12));

    SUBCASE("probability strictly increases with the max logit") {
        double prev = out.probability;
        for (double bump : {2.5, 4.0, 9.0}) {
            f(2, 0) = bump;
            double p = head.classify(f).probability;
            CHECK(p > prev);
            prev = p;
        }
    }

    SUBCASE("permuting rows permutes m and keeps the aggregate") {
        Mat g(3, 1);
        g(0, 0) = 2.0;
        g(1, 0) = -1.2;
        g(2, 0) = 0.3;
        MistakeLogits out2 = head.classify(g);
        CHECK(out2.aggregated_logit == out.aggregated_logit);
        CHECK(out2.probability == out.probability);
        CHECK(out2.m == std::vector<double>{2.0, -1.2, 0.3});
    }
}

TEST_CASE("mean aggregation averages the logits") {
    ParamStore store;
    Rng rng(4);
    MistakeHead head(1, Aggregator::Mean, store, rng);
    store.find("mistake_head.fc.weight")->value(0, 0) = 1.0;
    store.find("mistake_head.fc.bias")->value(0, 0) = 0.0;
    Mat f(2, 1);
    f(0, 0) = 1.0;
    f(1, 0) = 3.0;
    CHECK(head.classify(f).aggregated_logit == doctest::Approx(2.0));
}

TEST_CASE("probability stays strictly inside (0,1) for finite logits") {
    ParamStore store;
    Rng rng(5);
    MistakeHead head(3, Aggregator::Max, store, rng);
    Rng data_rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        Mat f = random_mat(4, 3, data_rng, -50.0, 50.0);
        double p = head.classify(f).probability;
        CHECK(p > 0.0);
        CHECK(p < 1.0);
    }
}

TEST_CASE("classifier gradient of the probability matches finite differences") {
    ParamStore store;
    Rng rng(7);
    MistakeHead head(5, Aggregator::Max, store, rng);
    Rng data_rng(8);
    Mat f = random_mat(3, 5, data_rng);

    auto probability = [&] { return head.classify(f).probability; };

    store.zero_grads();
    MistakeHeadCache cache;
    MistakeLogits out = head.classify(f, cache);
    const double dsig = out.probability * (1.0 - out.probability);
    head.backward(cache, dsig);

    auto res = testutil::finite_diff_check(store, probability, {MistakeHead::kGroupName});
    INFO("worst parameter: ", res.worst_param);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("shape mismatch is rejected") {
    ParamStore store;
    Rng rng(9);
    MistakeHead head(4, Aggregator::Max, store, rng);
    Rng data_rng(10);
    CHECK_THROWS_AS(head.classify(random_mat(3, 5, data_rng)), ShapeError);
}
