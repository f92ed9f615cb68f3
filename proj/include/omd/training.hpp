#pragma once

#include <set>
#include <string>
#include <vector>

#include "omd/pipeline.hpp"

namespace omd {

struct LossWeights {
    double detection = 1.0;
    double alignment = 0.0;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 1;
    int batch_size = 8;
    std::uint64_t seed = 0;
    std::set<std::string> freeze = {"visual_encoder"};
    LossWeights loss_weights;
    double momentum = 0.0;
    double positive_class_weight = 1.0;

    void validate() const;
};

struct LossGrad {
    double value = 0.0;
    double grad = 0.0;  // d loss / d logit
};

// Binary cross-entropy in stable logit form; pos_weight scales the positive
// (mistake) class term.
LossGrad bce_with_logit(double logit, double label, double pos_weight = 1.0);

// Spec-surface form taking a probability. Exact 0/1 probabilities resolve to
// the limit values instead of evaluating log(0).
double detection_loss(double probability, double label);

// 1 - cosine(mean-pooled projected rows, target). Zero-norm inputs are
// defined as loss 1.0 and set *degenerate when provided.
double alignment_loss(const Mat& projected, const Mat& target, bool* degenerate = nullptr);
double alignment_loss_grad(const Mat& projected, const Mat& target, Mat& dprojected,
                           bool* degenerate = nullptr);

// Deterministic hash embedder for explanation targets: tokens hashed into
// signed d_llm buckets, L2-normalized.
Mat text_embedding(const std::string& text, int d_llm);

struct TrainSample {
    SegmentWindow window;
    double label = 0.0;  // 1 = mistake
    std::string explanation;
};

// Builds (window, label, explanation) samples from a rendered dataset: per
// annotated segment, the window holds the last <= t_s frames up to segment
// end.
std::vector<TrainSample> load_segment_dataset(const std::string& dataset_dir, int t_s,
                                              double fps);

struct StepStats {
    double loss = 0.0;
    double detection = 0.0;
    double alignment = 0.0;
};

struct TrainLogRow {
    long step = 0;
    double loss = 0.0;
    double detection = 0.0;
    double alignment = 0.0;
};

class Trainer {
public:
    Trainer(Model& model, TrainConfig config);

    // One gradient step over a batch of sample indices.
    StepStats train_step(const std::vector<TrainSample>& samples,
                         const std::vector<int>& batch_indices);

    // Full loop: epochs x batches, deterministic shuffling per epoch.
    std::vector<TrainLogRow> train(const std::vector<TrainSample>& samples);

    // Loss over the whole set without updating anything.
    StepStats eval_loss(const std::vector<TrainSample>& samples);

    const std::set<std::string>& effective_freeze() const { return freeze_; }

private:
    Mat features_for(const TrainSample& sample, SegmentEncodeCache* cache);
    void apply_update();

    Model& model_;
    TrainConfig config_;
    std::set<std::string> freeze_;
    bool encoder_trainable_ = false;
    Rng shuffle_rng_;
    std::vector<Mat> feature_cache_;  // per-sample, frozen-encoder path
    const std::vector<TrainSample>* cached_for_ = nullptr;
    std::vector<Mat> velocity_;  // per-param momentum buffers, creation order
};

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path);

}  // namespace omd
