#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omd/frame_stream.hpp"
#include "omd/nn.hpp"

namespace omd {

struct EncoderConfig {
    int frame_size = 64;
    int patch_size = 16;
    int vit_layers = 2;
    int vit_heads = 4;
    int vit_dim = 32;
    int spatial_queries = 4;
    int d1 = 64;
    bool frozen = true;

    int patches_per_side() const { return frame_size / patch_size; }
    int num_patches() const { return patches_per_side() * patches_per_side(); }
    int patch_vec() const { return patch_size * patch_size * 3; }

    void validate() const;
};

// Per-frame forward state kept for backprop.
struct FrameEncodeCache {
    Mat patches;  // num_patches x patch_vec
    Mat tokens_in;
    std::vector<nn::TransformerBlock::Cache> blocks;
    nn::LayerNorm::Cache vit_ln;
    Mat vit_tokens;  // (1 + num_patches) x vit_dim, post final LN
    nn::QFormerBlock::Cache qblock;
    nn::LayerNorm::Cache q_ln;
    Mat q_out;    // spatial_queries x vit_dim
    Mat pooled;   // 1 x vit_dim
};

struct SegmentEncodeCache {
    std::vector<FrameEncodeCache> frames;
};

// Vision Transformer plus a spatial Q-Former head. Each frame becomes one
// d1-dimensional feature row; a segment window becomes an l x d1 sequence.
//
// Architecture, fixed by construction:
//   - patch embedding: each patch flattened row-major (y, x, channel) and
//     linearly mapped to vit_dim; CLS token prepended; learned positional
//     embeddings added
//   - vit_layers pre-norm transformer blocks (GELU FFN at 4x width), then a
//     final LayerNorm
//   - spatial Q-Former: spatial_queries learnable queries run one pre-norm
//     block (self-attention, cross-attention over all ViT output tokens,
//     feed-forward), final LayerNorm, mean-pool over queries, linear map
//     to d1
class VisualEncoder {
public:
    VisualEncoder(const EncoderConfig& config, ParamStore& store, Rng& rng);

    const EncoderConfig& config() const { return config_; }

    // One row, 1 x d1.
    Mat encode_frame(const Image& image, FrameEncodeCache& cache) const;
    Mat encode_frame(const Image& image) const;

    // l x d1, row i from frame i in timestamp order.
    Mat encode_segment(const SegmentWindow& window, SegmentEncodeCache& cache) const;
    Mat encode_segment(const SegmentWindow& window) const;

    // dv: l x d1 gradient of the loss w.r.t. the feature sequence.
    void backward_segment(const SegmentEncodeCache& cache, const Mat& dv) const;

    static constexpr const char* kGroupName = "visual_encoder";

private:
    Mat extract_patches(const Image& image) const;

    EncoderConfig config_;
    Param* cls_ = nullptr;        // 1 x vit_dim
    Param* pos_ = nullptr;        // (1 + num_patches) x vit_dim
    nn::Linear patch_embed_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm vit_ln_;
    Param* queries_ = nullptr;    // spatial_queries x vit_dim
    nn::QFormerBlock qblock_;
    nn::LayerNorm q_ln_;
    nn::Linear out_proj_;         // vit_dim -> d1
};

// Stand-in for a large pretrained encoder: per-frame features read from a
// file, one row per frame index, looked up by round(timestamp * fps).
class PrecomputedFeatures {
public:
    PrecomputedFeatures(Mat features, double fps);
    static PrecomputedFeatures load(const std::string& path);
    static void save(const Mat& features, double fps, const std::string& path);

    Mat encode_segment(const SegmentWindow& window) const;

    int d1() const { return features_.cols(); }
    double fps() const { return fps_; }

private:
    Mat features_;
    double fps_;
};

}  // namespace omd
