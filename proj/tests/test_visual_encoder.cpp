#include <doctest.h>

#include <filesystem>

#include "omd/visual_encoder.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace omd;

namespace {
EncoderConfig toy_config() {
    EncoderConfig c;
    c.frame_size = 4;
    c.patch_size = 2;
    c.vit_layers = 1;
    c.vit_heads = 1;
    c.vit_dim = 4;
    c.spatial_queries = 2;
    c.d1 = 6;
    return c;
}
}  // namespace

TEST_CASE("all-zero parameters give a zero feature vector") {
    ParamStore store;
    Rng rng(1);
    VisualEncoder enc(toy_config(), store, rng);
    for (const auto& p : store.all()) p->value.fill(0.0);
    Rng img_rng(2);
    Mat out = enc.encode_frame(testutil::random_image(4, img_rng));
    REQUIRE(out.cols() == 6);
    for (int j = 0; j < out.cols(); ++j) CHECK(out(0, j) == 0.0);
}

TEST_CASE("shape contract: 64x64 with patch 16 yields d1 features") {
    EncoderConfig c;
    c.frame_size = 64;
    c.patch_size = 16;
    c.vit_layers = 1;
    c.vit_heads = 2;
    c.vit_dim = 16;
    c.spatial_queries = 2;
    c.d1 = 24;
    CHECK(c.num_patches() == 16);

    ParamStore store;
    Rng rng(3);
    VisualEncoder enc(c, store, rng);
    Rng img_rng(4);
    Mat out = enc.encode_frame(testutil::random_image(64, img_rng));
    CHECK(out.rows() == 1);
    CHECK(out.cols() == 24);

    CHECK_THROWS_AS(enc.encode_frame(testutil::random_image(32, img_rng)), ValidationError);
}

TEST_CASE("toy forward matches the straight-line oracle") {
    ParamStore store;
    Rng rng(42);
    EncoderConfig c = toy_config();
    VisualEncoder enc(c, store, rng);
    Rng img_rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        Image img = testutil::random_image(4, img_rng);
        Mat got = enc.encode_frame(img);
        Mat want = oracle::vit_encode_frame(store, c, img);
        for (int j = 0; j < got.cols(); ++j) {
            const double denom = std::max({1.0, std::fabs(want(0, j)), std::fabs(got(0, j))});
            CHECK(std::fabs(got(0, j) - want(0, j)) / denom < 1e-10);
        }
    }
}

TEST_CASE("segment encoding stacks per-frame encodings in order") {
    ParamStore store;
    Rng rng(7);
    VisualEncoder enc(toy_config(), store, rng);
    Rng img_rng(8);

    SUBCASE("identical frames give identical rows") {
        SegmentWindow w;
        Image img = testutil::random_image(4, img_rng);
        for (int i = 0; i < 3; ++i) {
            FrameSample f;
            f.timestamp = i;
            f.image = img;
            w.frames.push_back(f);
        }
        w.current_timestep = 2;
        Mat v = enc.encode_segment(w);
        REQUIRE(v.rows() == 3);
        for (int i = 1; i < 3; ++i)
            for (int j = 0; j < v.cols(); ++j) CHECK(v(i, j) == v(0, j));
    }

    SUBCASE("rows equal per-frame calls for a random 5-frame window") {
        SegmentWindow w = testutil::random_window(5, 4, img_rng);
        Mat v = enc.encode_segment(w);
        REQUIRE(v.rows() == 5);
        for (int i = 0; i < 5; ++i) {
            Mat row = enc.encode_frame(w.frames[i].image);
            for (int j = 0; j < v.cols(); ++j) CHECK(v(i, j) == row(0, j));
        }
    }

    SUBCASE("window of length 1") {
        SegmentWindow w = testutil::random_window(1, 4, img_rng);
        CHECK(enc.encode_segment(w).rows() == 1);
    }

    SUBCASE("empty window rejected") {
        SegmentWindow w;
        CHECK_THROWS_AS(enc.encode_segment(w), ValidationError);
    }
}

TEST_CASE("encoder gradients match finite differences") {
    ParamStore store;
    Rng rng(15);
    EncoderConfig c = toy_config();
    c.frozen = false;
    VisualEncoder enc(c, store, rng);
    Rng img_rng(16);
    SegmentWindow w = testutil::random_window(2, 4, img_rng);

    // Loss: weighted sum of the feature sequence entries.
    auto loss = [&] {
        Mat v = enc.encode_segment(w);
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += v.data()[i] * (0.2 + 0.05 * static_cast<double>(i % 5));
        return s;
    };

    store.zero_grads();
    SegmentEncodeCache cache;
    Mat v = enc.encode_segment(w, cache);
    Mat dv(v.rows(), v.cols());
    for (std::size_t i = 0; i < dv.size(); ++i)
        dv.data()[i] = 0.2 + 0.05 * static_cast<double>(i % 5);
    enc.backward_segment(cache, dv);

    auto res = testutil::finite_diff_check(store, loss, {VisualEncoder::kGroupName});
    INFO("worst parameter: ", res.worst_param);
    CHECK(res.checked > 500);  // every encoder parameter element
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("precomputed features stand in for the encoder") {
    Mat table(6, 5);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 5; ++j) table(i, j) = 10.0 * i + j;
    const std::string path =
        (std::filesystem::temp_directory_path() / "omd_feat_test.omdf").string();
    PrecomputedFeatures::save(table, 2.0, path);
    PrecomputedFeatures feats = PrecomputedFeatures::load(path);
    CHECK(feats.d1() == 5);
    CHECK(feats.fps() == 2.0);

    SegmentWindow w;
    for (int i = 2; i < 5; ++i) {
        FrameSample f;
        f.timestamp = i / 2.0;  // rows 2, 3, 4
        f.image = Image(2, 2);
        w.frames.push_back(f);
    }
    w.current_timestep = 2.0;
    Mat v = feats.encode_segment(w);
    REQUIRE(v.rows() == 3);
    CHECK(v(0, 0) == 20.0);
    CHECK(v(2, 4) == 44.0);

    FrameSample outside;
    outside.timestamp = 99.0;
    outside.image = Image(2, 2);
    w.frames.push_back(outside);
    CHECK_THROWS_AS(feats.encode_segment(w), ValidationError);
    std::filesystem::remove(path);
}
