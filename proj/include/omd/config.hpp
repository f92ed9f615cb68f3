#pragma once

#include <string>
#include <vector>

#include "omd/data_model.hpp"
#include "omd/explanation_gate.hpp"
#include "omd/pipeline.hpp"
#include "omd/training.hpp"

namespace omd {

enum class GeneratorKind { Mock, External };

struct GeneratorConfig {
    GeneratorKind kind = GeneratorKind::Mock;
    std::string endpoint = "http://localhost:8000";
    double timeout_seconds = 10.0;
    int retries = 2;
};

// The single configuration document covering every module. Unknown keys are
// rejected during validation; every key can be overridden on the command
// line with --set dotted.path=value.
struct RunConfig {
    std::uint64_t seed = 0;  // model initialization seed
    int t_s = 8;
    int stride = 1;
    double fps = 1.0;
    std::string video_id = "stream";

    ModelConfig model;   // encoder, video_qformer, aggregator, d_llm
    std::string encoder_kind = "vit";  // vit | precomputed
    std::string features_path;         // precomputed-encoder table for raw streams

    GateConfig gate;
    GeneratorConfig generator;
    TrainConfig training;
    SyntheticTaskSpec synth;

    void validate() const;
};

// Parses and schema-checks a config document; applies defaults for missing
// keys.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// Built-in defaults as a JSON document (what an empty config resolves to).
std::string default_run_config_json();

}  // namespace omd
