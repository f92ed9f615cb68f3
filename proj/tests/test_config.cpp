#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "omd/config.hpp"

using namespace omd;
namespace fs = std::filesystem;

TEST_CASE("empty document resolves to the defaults") {
    RunConfig c = parse_run_config("{}");
    CHECK(c.t_s == 8);
    CHECK(c.stride == 1);
    CHECK(c.gate.tau == 0.5);
    CHECK(c.model.video_qformer.t_q == 8);
    CHECK(c.model.video_qformer.max_positions == 8);  // follows t_s
    CHECK(c.model.video_qformer.input_dim == c.model.encoder.d1);
    CHECK(c.training.freeze.count("visual_encoder") == 1);
    CHECK(c.generator.kind == GeneratorKind::Mock);
}

TEST_CASE("unknown keys are rejected with their path") {
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"taus": 0.5})"), doctest::Contains("taus"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"gate": {"threshold": 0.5}})"),
                         doctest::Contains("gate.threshold"), ValidationError);
}

TEST_CASE("schema violations name the field") {
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"training": {"epochs": 0}})"),
                         doctest::Contains("epochs"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"gate": {"tau": 1.5}})"),
                         doctest::Contains("tau"), ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"t_s": 0})"), doctest::Contains("t_s"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_run_config(R"({"head": {"aggregator": "median"}})"),
                         doctest::Contains("aggregator"), ValidationError);
    CHECK_THROWS_WITH_AS(
        parse_run_config(R"({"encoder": {"frame_size": 10, "patch_size": 4}})"),
        doctest::Contains("divisible"), ValidationError);
}

TEST_CASE("overrides apply over file content") {
    const fs::path path = fs::temp_directory_path() / "omd_config_test.json";
    std::ofstream(path) << R"({"gate": {"tau": 0.4}, "t_s": 6})";

    RunConfig c = load_run_config(path.string(), {"gate.tau=0.7", "video_id=cam1",
                                                  "training.loss_weights.alignment=0.25"});
    CHECK(c.gate.tau == 0.7);
    CHECK(c.t_s == 6);
    CHECK(c.video_id == "cam1");
    CHECK(c.training.loss_weights.alignment == 0.25);

    CHECK_THROWS_AS(load_run_config(path.string(), {"no_such=1"}), ValidationError);
    CHECK_THROWS_AS(load_run_config(path.string(), {"garbage"}), ValidationError);
    fs::remove(path);
}

TEST_CASE("default config document parses back to itself") {
    RunConfig c = parse_run_config(default_run_config_json());
    CHECK(c.t_s == 8);
    CHECK(c.synth.num_videos == 1);
}
