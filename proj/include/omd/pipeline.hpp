#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "omd/data_model.hpp"
#include "omd/explanation_gate.hpp"
#include "omd/frame_stream.hpp"
#include "omd/mistake_head.hpp"
#include "omd/video_qformer.hpp"
#include "omd/visual_encoder.hpp"

namespace omd {

struct ModelConfig {
    EncoderConfig encoder;
    VideoQFormerConfig video_qformer;
    Aggregator aggregator = Aggregator::Max;
    int d_llm = 32;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct ForwardCache {
    SegmentEncodeCache encoder;
    Mat v;
    VideoQFormerCache vqf;
    Mat f;
    MistakeHeadCache head;
};

// The trainable stack: visual encoder, Video Q-Former, mistake head and the
// generator-space projection, sharing one parameter store. Parameter init
// is deterministic in the seed.
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    const VisualEncoder& encoder() const { return *encoder_; }
    const VideoQFormer& video_qformer() const { return *vqf_; }
    const MistakeHead& head() const { return *head_; }
    const FeatureProjection& projection() const { return *projection_; }

    // Full detection forward for one window; fills the cache for backprop.
    MistakeLogits forward_window(const SegmentWindow& window, ForwardCache& cache) const;
    // Forward from an already-encoded feature sequence (frozen-encoder path).
    MistakeLogits forward_features(const Mat& v, ForwardCache& cache) const;

    void save_checkpoint(const std::string& path) const;
    static std::unique_ptr<Model> load_checkpoint(const std::string& path);

private:
    ModelConfig config_;
    ParamStore store_;
    std::unique_ptr<VisualEncoder> encoder_;
    std::unique_ptr<VideoQFormer> vqf_;
    std::unique_ptr<MistakeHead> head_;
    std::unique_ptr<FeatureProjection> projection_;
};

// Online detector over one stream: maintains the sliding window plus a
// per-frame feature cache (each frame is encoded exactly once), evaluates
// every stride-th frame, gates, and optionally generates an explanation.
class DetectionPipeline {
public:
    DetectionPipeline(const Model& model, GateConfig gate, GeneratorClient& generator,
                      std::string video_id, int t_s, int stride = 1,
                      const PrecomputedFeatures* precomputed = nullptr);

    // Returns a record when this frame was evaluated (frame indices
    // 0, stride, 2*stride, ...).
    std::optional<PredictionRecord> push_frame(const FrameSample& frame);

    // Runs a whole source through the pipeline, invoking the sink per record.
    void run(FrameSource& source,
             const std::function<void(const PredictionRecord&)>& sink);

    long generator_calls() const { return generator_.call_count(); }

private:
    const Model& model_;
    GateConfig gate_;
    GeneratorClient& generator_;
    std::string video_id_;
    int stride_;
    StreamState state_;
    std::deque<Mat> feature_rows_;  // aligned with the window frames
    long frame_index_ = 0;
    const PrecomputedFeatures* precomputed_;
};

}  // namespace omd
