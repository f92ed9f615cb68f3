#include "omd/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace omd {

using nlohmann::json;

namespace {

json defaults() {
    RunConfig d;
    json j;
    j["seed"] = 0;
    j["t_s"] = d.t_s;
    j["stride"] = d.stride;
    j["fps"] = d.fps;
    j["video_id"] = d.video_id;
    j["encoder"] = {{"kind", "vit"},
                    {"frame_size", d.model.encoder.frame_size},
                    {"patch_size", d.model.encoder.patch_size},
                    {"vit_layers", d.model.encoder.vit_layers},
                    {"vit_heads", d.model.encoder.vit_heads},
                    {"vit_dim", d.model.encoder.vit_dim},
                    {"spatial_queries", d.model.encoder.spatial_queries},
                    {"d1", d.model.encoder.d1},
                    {"frozen", d.model.encoder.frozen},
                    {"features_path", ""}};
    j["video_qformer"] = {{"t_q", d.model.video_qformer.t_q},
                          {"d2", d.model.video_qformer.d2},
                          {"layers", d.model.video_qformer.layers},
                          {"heads", d.model.video_qformer.heads},
                          {"max_positions", 0},  // 0 = follow t_s
                          {"use_temporal_positions",
                           d.model.video_qformer.use_temporal_positions}};
    j["head"] = {{"aggregator", "max"}};
    j["projection"] = {{"d_llm", d.model.d_llm}};
    j["gate"] = {{"tau", d.gate.tau}, {"prompt_template", d.gate.prompt_template}};
    j["generator"] = {{"kind", "mock"},
                      {"endpoint", d.generator.endpoint},
                      {"timeout_seconds", d.generator.timeout_seconds},
                      {"retries", d.generator.retries}};
    j["training"] = {{"learning_rate", d.training.learning_rate},
                     {"epochs", d.training.epochs},
                     {"batch_size", d.training.batch_size},
                     {"seed", 0},
                     {"freeze", json::array({"visual_encoder"})},
                     {"loss_weights",
                      {{"detection", d.training.loss_weights.detection},
                       {"alignment", d.training.loss_weights.alignment}}},
                     {"momentum", d.training.momentum},
                     {"positive_class_weight", d.training.positive_class_weight}};
    j["synth"] = {{"seed", 0},
                  {"num_videos", d.synth.num_videos},
                  {"steps_per_task", d.synth.steps_per_task},
                  {"frame_size", d.synth.frame_size},
                  {"error_rate", d.synth.error_rate},
                  {"fps", d.synth.fps}};
    return j;
}

// Recursively checks that every key in `doc` exists in `schema` and merges
// values over the defaults.
void merge_checked(json& base, const json& doc, const std::string& path) {
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key()))
            throw ValidationError("config: unknown key \"" + key_path + "\"");
        if (base[it.key()].is_object() && it.value().is_object())
            merge_checked(base[it.key()], it.value(), key_path);
        else
            base[it.key()] = it.value();
    }
}

template <typename T>
T field(const json& j, const char* key, const std::string& path) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError("config: bad value for \"" + path + "." + key + "\": " +
                              e.what());
    }
}

}  // namespace

std::string default_run_config_json() { return defaults().dump(2); }

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("config: document must be a JSON object");

    json merged = defaults();
    merge_checked(merged, doc, "");

    RunConfig c;
    c.seed = field<std::uint64_t>(merged, "seed", "");
    c.t_s = field<int>(merged, "t_s", "");
    c.stride = field<int>(merged, "stride", "");
    c.fps = field<double>(merged, "fps", "");
    c.video_id = field<std::string>(merged, "video_id", "");

    const json& e = merged.at("encoder");
    c.encoder_kind = field<std::string>(e, "kind", "encoder");
    c.features_path = field<std::string>(e, "features_path", "encoder");
    c.model.encoder.frame_size = field<int>(e, "frame_size", "encoder");
    c.model.encoder.patch_size = field<int>(e, "patch_size", "encoder");
    c.model.encoder.vit_layers = field<int>(e, "vit_layers", "encoder");
    c.model.encoder.vit_heads = field<int>(e, "vit_heads", "encoder");
    c.model.encoder.vit_dim = field<int>(e, "vit_dim", "encoder");
    c.model.encoder.spatial_queries = field<int>(e, "spatial_queries", "encoder");
    c.model.encoder.d1 = field<int>(e, "d1", "encoder");
    c.model.encoder.frozen = field<bool>(e, "frozen", "encoder");

    const json& q = merged.at("video_qformer");
    c.model.video_qformer.t_q = field<int>(q, "t_q", "video_qformer");
    c.model.video_qformer.d2 = field<int>(q, "d2", "video_qformer");
    c.model.video_qformer.layers = field<int>(q, "layers", "video_qformer");
    c.model.video_qformer.heads = field<int>(q, "heads", "video_qformer");
    c.model.video_qformer.max_positions = field<int>(q, "max_positions", "video_qformer");
    if (c.model.video_qformer.max_positions == 0) c.model.video_qformer.max_positions = c.t_s;
    c.model.video_qformer.use_temporal_positions =
        field<bool>(q, "use_temporal_positions", "video_qformer");
    c.model.video_qformer.input_dim = c.model.encoder.d1;

    const std::string agg = field<std::string>(merged.at("head"), "aggregator", "head");
    if (agg == "max")
        c.model.aggregator = Aggregator::Max;
    else if (agg == "mean")
        c.model.aggregator = Aggregator::Mean;
    else
        throw ValidationError("config: head.aggregator must be max or mean");

    c.model.d_llm = field<int>(merged.at("projection"), "d_llm", "projection");

    c.gate.tau = field<double>(merged.at("gate"), "tau", "gate");
    c.gate.prompt_template =
        field<std::string>(merged.at("gate"), "prompt_template", "gate");

    const json& g = merged.at("generator");
    const std::string gkind = field<std::string>(g, "kind", "generator");
    if (gkind == "mock")
        c.generator.kind = GeneratorKind::Mock;
    else if (gkind == "external")
        c.generator.kind = GeneratorKind::External;
    else
        throw ValidationError("config: generator.kind must be mock or external");
    c.generator.endpoint = field<std::string>(g, "endpoint", "generator");
    c.generator.timeout_seconds = field<double>(g, "timeout_seconds", "generator");
    c.generator.retries = field<int>(g, "retries", "generator");

    const json& t = merged.at("training");
    c.training.learning_rate = field<double>(t, "learning_rate", "training");
    c.training.epochs = field<int>(t, "epochs", "training");
    c.training.batch_size = field<int>(t, "batch_size", "training");
    c.training.seed = field<std::uint64_t>(t, "seed", "training");
    c.training.freeze.clear();
    for (const auto& name : t.at("freeze"))
        c.training.freeze.insert(name.get<std::string>());
    c.training.loss_weights.detection =
        field<double>(t.at("loss_weights"), "detection", "training.loss_weights");
    c.training.loss_weights.alignment =
        field<double>(t.at("loss_weights"), "alignment", "training.loss_weights");
    c.training.momentum = field<double>(t, "momentum", "training");
    c.training.positive_class_weight = field<double>(t, "positive_class_weight", "training");

    const json& s = merged.at("synth");
    c.synth.seed = field<std::uint64_t>(s, "seed", "synth");
    c.synth.num_videos = field<int>(s, "num_videos", "synth");
    c.synth.steps_per_task = field<int>(s, "steps_per_task", "synth");
    c.synth.frame_size = field<int>(s, "frame_size", "synth");
    c.synth.error_rate = field<double>(s, "error_rate", "synth");
    c.synth.fps = field<double>(s, "fps", "synth");

    c.validate();
    return c;
}

void RunConfig::validate() const {
    require(t_s >= 1, "config: t_s must be >= 1");
    require(stride >= 1, "config: stride must be >= 1");
    require(fps > 0.0, "config: fps must be positive");
    require(encoder_kind == "vit" || encoder_kind == "precomputed",
            "config: encoder.kind must be vit or precomputed");
    model.validate();
    require(model.video_qformer.max_positions >= t_s,
            "config: video_qformer.max_positions must be >= t_s");
    gate.validate();
    training.validate();
    require(generator.retries >= 0, "config: generator.retries must be >= 0");
    require(generator.timeout_seconds > 0.0,
            "config: generator.timeout_seconds must be positive");
    // synth is validated by the generator itself so error messages carry the
    // exact field names.
}

namespace {
void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ValidationError("--set expects key=value, got \"" + assignment + "\"");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings need no quotes
    }

    json* node = &doc;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> segs;
    while (std::getline(parts, part, '.')) segs.push_back(part);
    if (segs.empty()) throw ValidationError("--set: empty key");
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) node = &(*node)[segs[i]];
    (*node)[segs.back()] = parsed;
}
}  // namespace

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open config: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            doc = json::parse(ss.str());
        } catch (const json::exception& e) {
            throw ValidationError("config " + path + ": invalid JSON: " + e.what());
        }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_run_config(doc.dump());
}

}  // namespace omd
