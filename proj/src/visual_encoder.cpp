#include "omd/visual_encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace omd {

void EncoderConfig::validate() const {
    require(frame_size >= 1, "encoder.frame_size must be >= 1");
    require(patch_size >= 1, "encoder.patch_size must be >= 1");
    require(frame_size % patch_size == 0, "encoder.frame_size must be divisible by patch_size");
    require(vit_layers >= 1, "encoder.vit_layers must be >= 1");
    require(vit_heads >= 1, "encoder.vit_heads must be >= 1");
    require(vit_dim >= 1, "encoder.vit_dim must be >= 1");
    require(vit_dim % vit_heads == 0, "encoder.vit_dim must be divisible by vit_heads");
    require(spatial_queries >= 1, "encoder.spatial_queries must be >= 1");
    require(d1 >= 1, "encoder.d1 must be >= 1");
}

VisualEncoder::VisualEncoder(const EncoderConfig& config, ParamStore& store, Rng& rng)
    : config_(config) {
    config_.validate();
    const std::string g = std::string(kGroupName) + ".";
    patch_embed_ = nn::Linear(store, g + "patch_embed", config_.patch_vec(), config_.vit_dim, rng);
    cls_ = &store.create(g + "cls_token", 1, config_.vit_dim);
    pos_ = &store.create(g + "pos_embed", 1 + config_.num_patches(), config_.vit_dim);
    nn::init_trunc_normal(cls_->value, rng);
    nn::init_trunc_normal(pos_->value, rng);
    for (int l = 0; l < config_.vit_layers; ++l)
        blocks_.emplace_back(store, g + "vit.block" + std::to_string(l), config_.vit_dim,
                             config_.vit_heads, rng);
    vit_ln_ = nn::LayerNorm(store, g + "vit.ln_final", config_.vit_dim);
    queries_ = &store.create(g + "spatial_queries", config_.spatial_queries, config_.vit_dim);
    nn::init_trunc_normal(queries_->value, rng);
    qblock_ = nn::QFormerBlock(store, g + "qformer.block0", config_.vit_dim, config_.vit_heads, rng);
    q_ln_ = nn::LayerNorm(store, g + "qformer.ln_final", config_.vit_dim);
    out_proj_ = nn::Linear(store, g + "out_proj", config_.vit_dim, config_.d1, rng);
}

Mat VisualEncoder::extract_patches(const Image& image) const {
    const int ps = config_.patch_size;
    const int per_side = config_.patches_per_side();
    Mat patches(config_.num_patches(), config_.patch_vec());
    for (int py = 0; py < per_side; ++py)
        for (int px = 0; px < per_side; ++px) {
            double* row = patches.row(py * per_side + px);
            int k = 0;
            for (int y = 0; y < ps; ++y)
                for (int x = 0; x < ps; ++x)
                    for (int ch = 0; ch < 3; ++ch)
                        row[k++] = image.at(py * ps + y, px * ps + x, ch);
        }
    return patches;
}

Mat VisualEncoder::encode_frame(const Image& image, FrameEncodeCache& cache) const {
    if (image.height() != config_.frame_size || image.width() != config_.frame_size)
        throw ValidationError("encode_frame: image " + std::to_string(image.height()) + "x" +
                              std::to_string(image.width()) + " does not match frame_size " +
                              std::to_string(config_.frame_size));

    cache.patches = extract_patches(image);
    Mat embedded = patch_embed_.forward(cache.patches);

    const int n_tokens = 1 + config_.num_patches();
    Mat tokens(n_tokens, config_.vit_dim);
    for (int j = 0; j < config_.vit_dim; ++j) tokens(0, j) = cls_->value(0, j);
    for (int i = 0; i < config_.num_patches(); ++i)
        for (int j = 0; j < config_.vit_dim; ++j) tokens(1 + i, j) = embedded(i, j);
    add_inplace(tokens, pos_->value);
    cache.tokens_in = tokens;

    cache.blocks.resize(blocks_.size());
    Mat x = tokens;
    for (std::size_t l = 0; l < blocks_.size(); ++l) x = blocks_[l].forward(x, cache.blocks[l]);
    cache.vit_tokens = vit_ln_.forward(x, cache.vit_ln);

    Mat q = qblock_.forward(queries_->value, cache.vit_tokens, cache.qblock);
    cache.q_out = q_ln_.forward(q, cache.q_ln);

    cache.pooled = Mat(1, config_.vit_dim);
    for (int i = 0; i < cache.q_out.rows(); ++i)
        for (int j = 0; j < config_.vit_dim; ++j) cache.pooled(0, j) += cache.q_out(i, j);
    scale_inplace(cache.pooled, 1.0 / cache.q_out.rows());

    return out_proj_.forward(cache.pooled);
}

Mat VisualEncoder::encode_frame(const Image& image) const {
    FrameEncodeCache cache;
    return encode_frame(image, cache);
}

Mat VisualEncoder::encode_segment(const SegmentWindow& window, SegmentEncodeCache& cache) const {
    if (window.frames.empty()) throw ValidationError("encode_segment: empty window");
    cache.frames.resize(window.frames.size());
    Mat v(static_cast<int>(window.frames.size()), config_.d1);
    for (std::size_t i = 0; i < window.frames.size(); ++i) {
        Mat row;
        try {
            row = encode_frame(window.frames[i].image, cache.frames[i]);
        } catch (const ValidationError& e) {
            throw ValidationError("frame " + std::to_string(i) + ": " + e.what());
        }
        for (int j = 0; j < config_.d1; ++j) v(static_cast<int>(i), j) = row(0, j);
    }
    return v;
}

Mat VisualEncoder::encode_segment(const SegmentWindow& window) const {
    SegmentEncodeCache cache;
    return encode_segment(window, cache);
}

void VisualEncoder::backward_segment(const SegmentEncodeCache& cache, const Mat& dv) const {
    if (dv.rows() != static_cast<int>(cache.frames.size()))
        throw ShapeError("backward_segment: gradient rows do not match cached frames");
    for (int i = 0; i < dv.rows(); ++i) {
        const FrameEncodeCache& fc = cache.frames[i];

        Mat drow(1, config_.d1);
        for (int j = 0; j < config_.d1; ++j) drow(0, j) = dv(i, j);

        Mat dpooled = out_proj_.backward(fc.pooled, drow);

        Mat dq_out(fc.q_out.rows(), config_.vit_dim);
        for (int r = 0; r < fc.q_out.rows(); ++r)
            for (int j = 0; j < config_.vit_dim; ++j)
                dq_out(r, j) = dpooled(0, j) / fc.q_out.rows();

        Mat dq = q_ln_.backward(fc.q_ln, dq_out);
        Mat dtokens(fc.vit_tokens.rows(), config_.vit_dim);
        Mat dqueries = qblock_.backward(fc.qblock, dq, dtokens);
        add_inplace(queries_->grad, dqueries);

        Mat dx = vit_ln_.backward(fc.vit_ln, dtokens);
        for (int l = static_cast<int>(blocks_.size()) - 1; l >= 0; --l)
            dx = blocks_[l].backward(fc.blocks[l], dx);

        // dx covers CLS + positional + patch embedding inputs.
        add_inplace(pos_->grad, dx);
        for (int j = 0; j < config_.vit_dim; ++j) cls_->grad(0, j) += dx(0, j);
        Mat dembedded(config_.num_patches(), config_.vit_dim);
        for (int r = 0; r < config_.num_patches(); ++r)
            for (int j = 0; j < config_.vit_dim; ++j) dembedded(r, j) = dx(1 + r, j);
        patch_embed_.backward(fc.patches, dembedded);
    }
}

PrecomputedFeatures::PrecomputedFeatures(Mat features, double fps)
    : features_(std::move(features)), fps_(fps) {
    require(fps > 0.0, "precomputed features: fps must be positive");
    require(features_.rows() >= 1, "precomputed features: empty matrix");
}

namespace {
constexpr char kFeatMagic[4] = {'O', 'M', 'D', 'F'};
}

void PrecomputedFeatures::save(const Mat& features, double fps, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out.write(kFeatMagic, 4);
    std::uint32_t rows = features.rows(), cols = features.cols();
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(&fps), 8);
    out.write(reinterpret_cast<const char*>(features.data()),
              static_cast<std::streamsize>(features.size() * sizeof(double)));
}

PrecomputedFeatures PrecomputedFeatures::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kFeatMagic, 4) != 0)
        throw ParseError("feature file: bad magic in " + path);
    std::uint32_t rows = 0, cols = 0;
    double fps = 0.0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    in.read(reinterpret_cast<char*>(&fps), 8);
    if (!in) throw ParseError("feature file: truncated header in " + path);
    Mat features(static_cast<int>(rows), static_cast<int>(cols));
    in.read(reinterpret_cast<char*>(features.data()),
            static_cast<std::streamsize>(features.size() * sizeof(double)));
    if (!in) throw ParseError("feature file: truncated data in " + path);
    return PrecomputedFeatures(std::move(features), fps);
}

Mat PrecomputedFeatures::encode_segment(const SegmentWindow& window) const {
    if (window.frames.empty()) throw ValidationError("encode_segment: empty window");
    Mat v(window.length(), features_.cols());
    for (int i = 0; i < window.length(); ++i) {
        const long idx = std::lround(window.frames[i].timestamp * fps_);
        if (idx < 0 || idx >= features_.rows())
            throw ValidationError("precomputed features: frame index " + std::to_string(idx) +
                                  " outside table of " + std::to_string(features_.rows()) +
                                  " rows");
        for (int j = 0; j < features_.cols(); ++j) v(i, j) = features_(idx, j);
    }
    return v;
}

}  // namespace omd
