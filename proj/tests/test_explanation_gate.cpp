#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>

#include "omd/explanation_gate.hpp"
#include "testutil.hpp"

using namespace omd;
using testutil::random_mat;

TEST_CASE("gate is closed-open at the threshold, exactly") {
    CHECK(gate(0.80, 0.50) == 1);
    CHECK(gate(0.50, 0.50) == 1);  // boundary inclusive
    CHECK(gate(0.30, 0.50) == 0);

    SUBCASE("10x10 grid plus exact boundaries matches brute force") {
        for (int pi = 0; pi <= 9; ++pi)
            for (int ti = 1; ti <= 9; ++ti) {
                const double p = pi / 9.0;
                const double tau = ti / 10.0;
                CHECK(gate(p, tau) == (p >= tau ? 1 : 0));
            }
        for (int ti = 1; ti <= 9; ++ti) {
            const double tau = ti / 10.0;
            CHECK(gate(tau, tau) == 1);
        }
    }

    SUBCASE("out-of-range inputs are rejected") {
        CHECK_THROWS_AS(gate(-0.1, 0.5), ValidationError);
        CHECK_THROWS_AS(gate(1.1, 0.5), ValidationError);
        CHECK_THROWS_AS(gate(0.5, 0.0), ValidationError);
        CHECK_THROWS_AS(gate(0.5, 1.0), ValidationError);
    }
}

TEST_CASE("projection is a row-wise affine map") {
    SUBCASE("zero parameters give the zero matrix") {
        ParamStore store;
        Rng rng(1);
        FeatureProjection proj(4, 5, store, rng);
        for (const auto& p : store.all()) p->value.fill(0.0);
        Rng data_rng(2);
        Mat out = proj.project(random_mat(3, 4, data_rng));
        REQUIRE(out.rows() == 3);
        REQUIRE(out.cols() == 5);
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);
    }

    SUBCASE("identity weights reproduce the input") {
        ParamStore store;
        Rng rng(3);
        FeatureProjection proj(4, 4, store, rng);
        Param* w = store.find("projection.fc.weight");
        w->value.fill(0.0);
        for (int i = 0; i < 4; ++i) w->value(i, i) = 1.0;
        store.find("projection.fc.bias")->value.fill(0.0);
        Rng data_rng(4);
        Mat f = random_mat(3, 4, data_rng);
        CHECK(max_abs_diff(proj.project(f), f) == 0.0);
    }

    SUBCASE("random case matches a straight-line matrix product") {
        ParamStore store;
        Rng rng(5);
        FeatureProjection proj(4, 5, store, rng);
        const Mat& W = store.find("projection.fc.weight")->value;
        const Mat& b = store.find("projection.fc.bias")->value;
        Rng data_rng(6);
        Mat f = random_mat(3, 4, data_rng);
        Mat got = proj.project(f);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) {
                double want = b(0, j);
                for (int k = 0; k < 4; ++k) want += f(i, k) * W(k, j);
                CHECK(std::fabs(got(i, j) - want) < 1e-12);
            }
    }

    SUBCASE("shape mismatch rejected") {
        ParamStore store;
        Rng rng(7);
        FeatureProjection proj(4, 5, store, rng);
        Rng data_rng(8);
        CHECK_THROWS_AS(proj.project(random_mat(3, 6, data_rng)), ShapeError);
    }
}

TEST_CASE("explain calls the generator only when the gate fires") {
    ParamStore store;
    Rng rng(11);
    FeatureProjection proj(4, 8, store, rng);
    MockGenerator generator(8);
    GateConfig config;
    config.tau = 0.5;
    Rng data_rng(12);
    Mat f = random_mat(3, 4, data_rng);

    SUBCASE("closed gate: zero calls") {
        ExplanationResult r = explain(config, proj, generator, f, 0.2);
        CHECK_FALSE(r.fired);
        CHECK_FALSE(r.explanation.has_value());
        CHECK(generator.call_count() == 0);
    }

    SUBCASE("open gate: deterministic mock text") {
        ExplanationResult r1 = explain(config, proj, generator, f, 0.9);
        ExplanationResult r2 = explain(config, proj, generator, f, 0.9);
        CHECK(r1.fired);
        REQUIRE(r1.explanation.has_value());
        CHECK(*r1.explanation == *r2.explanation);
        CHECK(r1.explanation->find("sig=") != std::string::npos);
        CHECK(generator.call_count() == 2);
    }

    SUBCASE("tau sweep matches brute-force thresholding") {
        const double probability = 0.5;
        for (int ti = 1; ti <= 9; ++ti) {
            GateConfig c;
            c.tau = ti / 10.0;
            MockGenerator g(8);
            ExplanationResult r = explain(c, proj, g, f, probability);
            const bool want = probability >= c.tau;
            CHECK(r.fired == want);
            CHECK(r.explanation.has_value() == want);
            CHECK(g.call_count() == (want ? 1 : 0));
        }
    }
}

TEST_CASE("generator failure is marked without disturbing detection") {
    ParamStore store;
    Rng rng(13);
    FeatureProjection proj(4, 8, store, rng);
    // Nothing listens on this port; retries exhausted quickly.
    ExternalGenerator generator("http://127.0.0.1:1", 8, 0.05, 0);
    GateConfig config;
    Rng data_rng(14);
    Mat f = random_mat(2, 4, data_rng);

    ExplanationResult r = explain(config, proj, generator, f, 0.9);
    CHECK(r.fired);
    CHECK(r.probability == 0.9);
    CHECK_FALSE(r.explanation.has_value());
    REQUIRE(r.generator_error.has_value());
}

TEST_CASE("external generator speaks the documented HTTP JSON contract") {
    using nlohmann::json;
    httplib::Server server;
    json seen_request;
    server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
        seen_request = json::parse(req.body);
        json rsp;
        rsp["text"] = "the battery is upside down";
        res.set_content(rsp.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ParamStore store;
    Rng rng(15);
    FeatureProjection proj(3, 4, store, rng);
    ExternalGenerator generator("http://127.0.0.1:" + std::to_string(port), 4, 5.0, 1);
    GateConfig config;
    Rng data_rng(16);
    Mat f = random_mat(2, 3, data_rng);

    ExplanationResult r = explain(config, proj, generator, f, 0.8);
    server.stop();
    server_thread.join();

    REQUIRE(r.explanation.has_value());
    CHECK(*r.explanation == "the battery is upside down");

    REQUIRE(seen_request.contains("prompt"));
    REQUIRE(seen_request.contains("features"));
    CHECK(seen_request["features"]["shape"] == json::array({2, 4}));
    auto bytes = base64_decode(seen_request["features"]["data_b64"].get<std::string>());
    REQUIRE(bytes.size() == 2 * 4 * sizeof(double));
    Mat projected = proj.project(f);
    double first = 0.0;
    std::memcpy(&first, bytes.data(), sizeof(double));
    CHECK(first == projected(0, 0));
}

TEST_CASE("prompt rendering strips the features marker") {
    CHECK(render_prompt("explain this: <features> now") == "explain this:  now");
    CHECK(render_prompt("no marker") == "no marker");
}

TEST_CASE("base64 round trip") {
    const std::string payloads[] = {"", "a", "ab", "abc", "hello world \x01\x02"};
    for (const auto& s : payloads) {
        auto enc = base64_encode(reinterpret_cast<const unsigned char*>(s.data()), s.size());
        auto dec = base64_decode(enc);
        CHECK(std::string(dec.begin(), dec.end()) == s);
    }
}
