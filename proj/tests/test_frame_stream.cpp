#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "omd/frame_stream.hpp"
#include "testutil.hpp"

using namespace omd;
namespace fs = std::filesystem;

namespace {
FrameSample frame_at(double t, int size, double shade = 0.5) {
    FrameSample f;
    f.timestamp = t;
    f.image = Image(size, size);
    for (auto& v : f.image.pixels()) v = shade;
    return f;
}
}  // namespace

TEST_CASE("window fills, evicts, and snapshots") {
    StreamState state(8, 4);
    for (int i = 0; i < 3; ++i) state.push_frame(frame_at(i, 4));
    CHECK(state.window_length() == 3);
    CHECK(state.current_segment().current_timestep == 2.0);

    for (int i = 3; i < 10; ++i) state.push_frame(frame_at(i, 4));
    SegmentWindow w = state.current_segment();
    REQUIRE(w.length() == 8);
    CHECK(w.frames.front().timestamp == 2.0);
    CHECK(w.frames.back().timestamp == 9.0);

    // Snapshots are value copies: later pushes do not disturb them.
    state.push_frame(frame_at(10, 4));
    CHECK(w.frames.back().timestamp == 9.0);
    CHECK(state.current_segment().frames.back().timestamp == 10.0);
}

TEST_CASE("monotonicity and shape are enforced") {
    StreamState state(4, 4);
    state.push_frame(frame_at(5.0, 4));
    CHECK_THROWS_WITH_AS(state.push_frame(frame_at(5.0, 4)),
                         doctest::Contains("non-monotonic"), ValidationError);
    CHECK_THROWS_AS(state.push_frame(frame_at(6.0, 8)), ValidationError);

    FrameSample bad = frame_at(7.0, 4);
    bad.image.at(0, 0, 0) = 1.5;
    CHECK_THROWS_AS(state.push_frame(bad), ValidationError);
}

TEST_CASE("degenerate window t_s=1 keeps only the latest frame") {
    StreamState state(1, 4);
    for (int i = 0; i < 5; ++i) state.push_frame(frame_at(i, 4, 0.1 * i));
    SegmentWindow w = state.current_segment();
    REQUIRE(w.length() == 1);
    CHECK(w.frames[0].timestamp == 4.0);
}

TEST_CASE("empty stream reports no frames") {
    StreamState state(4, 4);
    CHECK_THROWS_WITH_AS(state.current_segment(), doctest::Contains("no frames"),
                         ValidationError);
}

TEST_CASE("raw stream header round trip and error paths") {
    RawStreamHeader h;
    h.width = 32;
    h.height = 16;
    h.fps = 2.5f;
    std::stringstream buf;
    write_raw_stream_header(buf, h);
    CHECK(buf.str().size() == RawStreamHeader::kSize);
    RawStreamHeader back = read_raw_stream_header(buf);
    CHECK(back.width == 32);
    CHECK(back.height == 16);
    CHECK(back.fps == 2.5f);

    std::stringstream bad("XXXXddddddddddddddd");
    CHECK_THROWS_WITH_AS(read_raw_stream_header(bad), doctest::Contains("magic"), ParseError);

    std::stringstream truncated("MSN");
    CHECK_THROWS_AS(read_raw_stream_header(truncated), ParseError);
}

TEST_CASE("raw stream source yields frames with fps-derived timestamps") {
    Rng rng(21);
    std::stringstream buf;
    RawStreamHeader h;
    h.width = 6;
    h.height = 6;
    h.fps = 2.0f;
    write_raw_stream_header(buf, h);
    std::vector<Image> frames;
    for (int i = 0; i < 3; ++i) {
        frames.push_back(testutil::random_image(6, rng));
        write_raw_frame(buf, frames.back());
    }

    RawStreamFrameSource source(buf);
    FrameSample f;
    int n = 0;
    while (source.next(f)) {
        CHECK(f.timestamp == doctest::Approx(n / 2.0));
        CHECK(f.image.height() == 6);
        // 8-bit quantization round trip.
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x)
                CHECK(f.image.at(y, x, 0) ==
                      doctest::Approx(frames[n].at(y, x, 0)).epsilon(1.0 / 255.0));
        ++n;
    }
    CHECK(n == 3);
}

TEST_CASE("truncated raw frame is reported") {
    std::stringstream buf;
    RawStreamHeader h;
    h.width = 4;
    h.height = 4;
    write_raw_stream_header(buf, h);
    buf << "abc";  // partial frame
    RawStreamFrameSource source(buf);
    FrameSample f;
    CHECK_THROWS_WITH_AS(source.next(f), doctest::Contains("truncated"), ParseError);
}

TEST_CASE("directory source reads numbered PNGs in order") {
    Rng rng(4);
    const fs::path dir = fs::temp_directory_path() / "omd_dir_source_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (int i = 0; i < 4; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.png", i);
        Image img(8, 8);
        for (auto& v : img.pixels()) v = (i + 1) / 8.0;
        write_png(img, (dir / name).string());
    }

    DirectoryFrameSource source(dir.string(), 1.0);
    FrameSample f;
    int n = 0;
    while (source.next(f)) {
        CHECK(f.timestamp == doctest::Approx(static_cast<double>(n)));
        CHECK(f.image.at(0, 0, 0) == doctest::Approx((n + 1) / 8.0).epsilon(1e-2));
        ++n;
    }
    CHECK(n == 4);
    fs::remove_all(dir);
}
