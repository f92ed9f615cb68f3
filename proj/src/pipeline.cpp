#include "omd/pipeline.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace omd {

using nlohmann::json;

void ModelConfig::validate() const {
    encoder.validate();
    video_qformer.validate();
    require(video_qformer.input_dim == encoder.d1,
            "video_qformer.input_dim must equal encoder.d1");
    require(d_llm >= 1, "projection.d_llm must be >= 1");
}

std::string ModelConfig::to_json() const {
    json j;
    j["encoder"] = {{"frame_size", encoder.frame_size},
                    {"patch_size", encoder.patch_size},
                    {"vit_layers", encoder.vit_layers},
                    {"vit_heads", encoder.vit_heads},
                    {"vit_dim", encoder.vit_dim},
                    {"spatial_queries", encoder.spatial_queries},
                    {"d1", encoder.d1},
                    {"frozen", encoder.frozen}};
    j["video_qformer"] = {{"t_q", video_qformer.t_q},
                          {"d2", video_qformer.d2},
                          {"layers", video_qformer.layers},
                          {"heads", video_qformer.heads},
                          {"max_positions", video_qformer.max_positions},
                          {"input_dim", video_qformer.input_dim},
                          {"use_temporal_positions", video_qformer.use_temporal_positions}};
    j["aggregator"] = aggregator == Aggregator::Max ? "max" : "mean";
    j["d_llm"] = d_llm;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    const json& e = j.at("encoder");
    c.encoder.frame_size = e.at("frame_size").get<int>();
    c.encoder.patch_size = e.at("patch_size").get<int>();
    c.encoder.vit_layers = e.at("vit_layers").get<int>();
    c.encoder.vit_heads = e.at("vit_heads").get<int>();
    c.encoder.vit_dim = e.at("vit_dim").get<int>();
    c.encoder.spatial_queries = e.at("spatial_queries").get<int>();
    c.encoder.d1 = e.at("d1").get<int>();
    c.encoder.frozen = e.at("frozen").get<bool>();
    const json& q = j.at("video_qformer");
    c.video_qformer.t_q = q.at("t_q").get<int>();
    c.video_qformer.d2 = q.at("d2").get<int>();
    c.video_qformer.layers = q.at("layers").get<int>();
    c.video_qformer.heads = q.at("heads").get<int>();
    c.video_qformer.max_positions = q.at("max_positions").get<int>();
    c.video_qformer.input_dim = q.at("input_dim").get<int>();
    c.video_qformer.use_temporal_positions = q.at("use_temporal_positions").get<bool>();
    const std::string agg = j.at("aggregator").get<std::string>();
    if (agg == "max")
        c.aggregator = Aggregator::Max;
    else if (agg == "mean")
        c.aggregator = Aggregator::Mean;
    else
        throw ParseError("bad aggregator \"" + agg + "\"");
    c.d_llm = j.at("d_llm").get<int>();
    c.validate();
    return c;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(seed);
    encoder_ = std::make_unique<VisualEncoder>(config_.encoder, store_, rng);
    vqf_ = std::make_unique<VideoQFormer>(config_.video_qformer, store_, rng);
    head_ = std::make_unique<MistakeHead>(config_.video_qformer.d2, config_.aggregator, store_,
                                          rng);
    projection_ = std::make_unique<FeatureProjection>(config_.video_qformer.d2, config_.d_llm,
                                                      store_, rng);
}

MistakeLogits Model::forward_window(const SegmentWindow& window, ForwardCache& cache) const {
    cache.v = encoder_->encode_segment(window, cache.encoder);
    return forward_features(cache.v, cache);
}

MistakeLogits Model::forward_features(const Mat& v, ForwardCache& cache) const {
    cache.v = v;
    cache.f = vqf_->forward(v, cache.vqf);
    return head_->classify(cache.f, cache.head);
}

namespace {
constexpr char kCkptMagic[4] = {'O', 'M', 'D', 'C'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void Model::save_checkpoint(const std::string& path) const {
    json manifest;
    manifest["format"] = kCkptVersion;
    manifest["config"] = json::parse(config_.to_json());
    json arrays = json::array();
    for (const auto& p : store_.all())
        arrays.push_back(
            {{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
    manifest["arrays"] = arrays;
    const std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(kCkptMagic, 4);
    out.write(reinterpret_cast<const char*>(&kCkptVersion), 4);
    const std::uint64_t mlen = mtext.size();
    out.write(reinterpret_cast<const char*>(&mlen), 8);
    out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& p : store_.all())
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

std::unique_ptr<Model> Model::load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw ParseError("checkpoint: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCkptVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), 8);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw ParseError("checkpoint: truncated manifest in " + path);

    json manifest = json::parse(mtext);
    ModelConfig config = ModelConfig::from_json(manifest.at("config").dump());
    auto model = std::make_unique<Model>(config, /*seed=*/0);

    for (const auto& entry : manifest.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const int rows = entry.at("rows").get<int>();
        const int cols = entry.at("cols").get<int>();
        Param* p = model->store_.find(name);
        if (!p) throw ParseError("checkpoint: unknown array \"" + name + "\"");
        if (p->value.rows() != rows || p->value.cols() != cols)
            throw ParseError("checkpoint: array \"" + name + "\" has shape (" +
                             std::to_string(rows) + ", " + std::to_string(cols) +
                             ") but the model expects " + shape_str(p->value));
        in.read(reinterpret_cast<char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        if (!in) throw ParseError("checkpoint: truncated data for \"" + name + "\"");
    }
    return model;
}

DetectionPipeline::DetectionPipeline(const Model& model, GateConfig gate,
                                     GeneratorClient& generator, std::string video_id, int t_s,
                                     int stride, const PrecomputedFeatures* precomputed)
    : model_(model),
      gate_(std::move(gate)),
      generator_(generator),
      video_id_(std::move(video_id)),
      stride_(stride),
      state_(t_s, model.config().encoder.frame_size),
      precomputed_(precomputed) {
    require(stride >= 1, "stride must be >= 1");
    gate_.validate();
    if (generator_.embedding_width() != model_.config().d_llm)
        throw ValidationError("generator embedding width " +
                              std::to_string(generator_.embedding_width()) +
                              " does not match model d_llm " +
                              std::to_string(model_.config().d_llm));
}

std::optional<PredictionRecord> DetectionPipeline::push_frame(const FrameSample& frame) {
    state_.push_frame(frame);
    if (precomputed_) {
        SegmentWindow one;
        one.frames = {frame};
        one.current_timestep = frame.timestamp;
        feature_rows_.push_back(precomputed_->encode_segment(one));
    } else {
        feature_rows_.push_back(model_.encoder().encode_frame(frame.image));
    }
    while (static_cast<int>(feature_rows_.size()) > state_.t_s()) feature_rows_.pop_front();

    const long index = frame_index_++;
    if (index % stride_ != 0) return std::nullopt;

    const int d1 = feature_rows_.front().cols();
    Mat v(static_cast<int>(feature_rows_.size()), d1);
    for (std::size_t i = 0; i < feature_rows_.size(); ++i)
        for (int j = 0; j < d1; ++j) v(static_cast<int>(i), j) = feature_rows_[i](0, j);

    VideoQFormerCache vqf_cache;
    Mat f = model_.video_qformer().forward(v, vqf_cache);
    MistakeLogits logits = model_.head().classify(f);
    ExplanationResult expl =
        explain(gate_, model_.projection(), generator_, f, logits.probability);

    PredictionRecord rec;
    rec.video_id = video_id_;
    rec.timestep = frame.timestamp;
    rec.probability = logits.probability;
    rec.label = expl.fired ? Label::Mistake : Label::Correct;
    if (expl.explanation.has_value()) rec.explanation = expl.explanation;
    return rec;
}

void DetectionPipeline::run(FrameSource& source,
                            const std::function<void(const PredictionRecord&)>& sink) {
    FrameSample frame;
    while (source.next(frame)) {
        auto rec = push_frame(frame);
        if (rec) sink(*rec);
    }
}

}  // namespace omd
