#pragma once

#include <string>
#include <vector>

#include "omd/nn.hpp"

namespace omd {

struct VideoQFormerConfig {
    int t_q = 8;
    int d2 = 64;
    int layers = 2;
    int heads = 4;
    int max_positions = 8;
    int input_dim = 64;  // d1
    bool use_temporal_positions = true;

    void validate() const;
};

struct VideoQFormerCache {
    Mat v;       // input sequence, l x d1
    Mat memory;  // projected (+positions), l x d2
    std::vector<nn::QFormerBlock::Cache> blocks;
    nn::LayerNorm::Cache final_ln;
};

// Per-layer attention maps captured by the test hook; one Mat per head,
// rows are softmax distributions.
struct AttentionTrace {
    std::vector<std::vector<Mat>> self_attn;   // [layer][head] t_q x t_q
    std::vector<std::vector<Mat>> cross_attn;  // [layer][head] t_q x l
};

// Learnable queries attend over the frame feature sequence to produce
// temporally-aware features f (t_q x d2). Frame rows are projected d1 -> d2
// with learned temporal position embeddings added per window slot; each
// block runs query self-attention, cross-attention into the projected
// features and a feed-forward sublayer (pre-norm residuals); a final
// LayerNorm closes the stack.
class VideoQFormer {
public:
    VideoQFormer(const VideoQFormerConfig& config, ParamStore& store, Rng& rng);

    const VideoQFormerConfig& config() const { return config_; }

    Mat forward(const Mat& v, VideoQFormerCache& cache, AttentionTrace* trace = nullptr) const;
    Mat forward(const Mat& v) const;

    // df: t_q x d2. Returns dv (l x d1) and accumulates parameter gradients.
    Mat backward(const VideoQFormerCache& cache, const Mat& df) const;

    // Every learnable array of this module, (name, rows, cols), stable order.
    std::vector<std::tuple<std::string, int, int>> parameter_groups() const;

    static constexpr const char* kGroupName = "video_qformer";

private:
    VideoQFormerConfig config_;
    ParamStore* store_ = nullptr;
    Param* query_bank_ = nullptr;  // t_q x d2
    Param* pos_ = nullptr;         // max_positions x d2
    nn::Linear input_proj_;        // d1 -> d2
    std::vector<nn::QFormerBlock> blocks_;
    nn::LayerNorm final_ln_;
};

}  // namespace omd
