#include "omd/video_qformer.hpp"

namespace omd {

void VideoQFormerConfig::validate() const {
    require(t_q >= 1, "video_qformer.t_q must be >= 1");
    require(d2 >= 1, "video_qformer.d2 must be >= 1");
    require(layers >= 1, "video_qformer.layers must be >= 1");
    require(heads >= 1, "video_qformer.heads must be >= 1");
    require(d2 % heads == 0, "video_qformer.d2 must be divisible by heads");
    require(max_positions >= 1, "video_qformer.max_positions must be >= 1");
    require(input_dim >= 1, "video_qformer.input_dim must be >= 1");
}

VideoQFormer::VideoQFormer(const VideoQFormerConfig& config, ParamStore& store, Rng& rng)
    : config_(config), store_(&store) {
    config_.validate();
    const std::string g = std::string(kGroupName) + ".";
    query_bank_ = &store.create(g + "query_bank", config_.t_q, config_.d2);
    nn::init_trunc_normal(query_bank_->value, rng);
    input_proj_ = nn::Linear(store, g + "input_proj", config_.input_dim, config_.d2, rng);
    pos_ = &store.create(g + "temporal_pos", config_.max_positions, config_.d2);
    nn::init_trunc_normal(pos_->value, rng);
    for (int l = 0; l < config_.layers; ++l)
        blocks_.emplace_back(store, g + "layer" + std::to_string(l), config_.d2, config_.heads,
                             rng);
    final_ln_ = nn::LayerNorm(store, g + "ln_final", config_.d2);
}

Mat VideoQFormer::forward(const Mat& v, VideoQFormerCache& cache, AttentionTrace* trace) const {
    if (v.rows() < 1) throw ValidationError("video_qformer: empty feature sequence");
    if (v.rows() > config_.max_positions)
        throw ValidationError("video_qformer: sequence length " + std::to_string(v.rows()) +
                              " exceeds max_positions " + std::to_string(config_.max_positions));
    if (v.cols() != config_.input_dim)
        throw ShapeError("video_qformer: feature width " + std::to_string(v.cols()) +
                         " does not match input_dim " + std::to_string(config_.input_dim));

    cache.v = v;
    cache.memory = input_proj_.forward(v);
    if (config_.use_temporal_positions) {
        for (int i = 0; i < v.rows(); ++i)
            for (int j = 0; j < config_.d2; ++j) cache.memory(i, j) += pos_->value(i, j);
    }

    if (trace) {
        trace->self_attn.assign(config_.layers, {});
        trace->cross_attn.assign(config_.layers, {});
    }

    cache.blocks.resize(blocks_.size());
    Mat x = query_bank_->value;
    for (std::size_t l = 0; l < blocks_.size(); ++l)
        x = blocks_[l].forward(x, cache.memory, cache.blocks[l],
                               trace ? &trace->self_attn[l] : nullptr,
                               trace ? &trace->cross_attn[l] : nullptr);
    return final_ln_.forward(x, cache.final_ln);
}

Mat VideoQFormer::forward(const Mat& v) const {
    VideoQFormerCache cache;
    return forward(v, cache);
}

Mat VideoQFormer::backward(const VideoQFormerCache& cache, const Mat& df) const {
    Mat dmemory(cache.memory.rows(), cache.memory.cols());
    Mat dx = final_ln_.backward(cache.final_ln, df);
    for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l)
        dx = blocks_[l].backward(cache.blocks[l], dx, dmemory);
    add_inplace(query_bank_->grad, dx);

    if (config_.use_temporal_positions) {
        for (int i = 0; i < dmemory.rows(); ++i)
            for (int j = 0; j < config_.d2; ++j) pos_->grad(i, j) += dmemory(i, j);
    }
    return input_proj_.backward(cache.v, dmemory);
}

std::vector<std::tuple<std::string, int, int>> VideoQFormer::parameter_groups() const {
    std::vector<std::tuple<std::string, int, int>> out;
    const std::string prefix = std::string(kGroupName) + ".";
    for (const auto& p : store_->all())
        if (p->name.rfind(prefix, 0) == 0)
            out.emplace_back(p->name.substr(prefix.size()), p->value.rows(), p->value.cols());
    return out;
}

}  // namespace omd
