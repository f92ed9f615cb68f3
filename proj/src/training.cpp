#include "omd/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "omd/metrics.hpp"

namespace omd {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    require(learning_rate > 0.0, "training.learning_rate must be > 0");
    require(epochs >= 1, "training.epochs must be >= 1");
    require(batch_size >= 1, "training.batch_size must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, "training.momentum must lie in [0, 1)");
    require(positive_class_weight > 0.0, "training.positive_class_weight must be > 0");
    require(loss_weights.detection >= 0.0 && loss_weights.alignment >= 0.0,
            "training.loss_weights must be non-negative");
}

namespace {
double softplus(double x) {
    // max(x,0) + log1p(exp(-|x|)); never overflows.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
}  // namespace

LossGrad bce_with_logit(double logit, double label, double pos_weight) {
    // L = w+ * y * softplus(-z) + (1-y) * softplus(z)
    LossGrad out;
    out.value = pos_weight * label * softplus(-logit) + (1.0 - label) * softplus(logit);
    const double s = sigmoid(logit);
    out.grad = (1.0 - label) * s - pos_weight * label * (1.0 - s);
    return out;
}

double detection_loss(double probability, double label) {
    require(probability >= 0.0 && probability <= 1.0,
            "detection_loss: probability outside [0, 1]");
    require(label == 0.0 || label == 1.0, "detection_loss: label must be 0 or 1");
    if (probability == 0.0 || probability == 1.0) {
        // Limit values of the stable logit form; log(0) is never evaluated.
        return (probability == label) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    const double logit = std::log(probability) - std::log1p(-probability);
    return bce_with_logit(logit, label).value;
}

namespace {
double norm2(const double* v, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}
}  // namespace

double alignment_loss(const Mat& projected, const Mat& target, bool* degenerate) {
    Mat dummy;
    return alignment_loss_grad(projected, target, dummy, degenerate);
}

double alignment_loss_grad(const Mat& projected, const Mat& target, Mat& dprojected,
                           bool* degenerate) {
    if (target.rows() != 1 || target.cols() != projected.cols())
        throw ShapeError("alignment_loss: target " + shape_str(target) +
                         " incompatible with projected " + shape_str(projected));
    const int d = projected.cols();
    const int rows = projected.rows();
    dprojected = Mat(rows, d);
    if (degenerate) *degenerate = false;

    std::vector<double> u(d, 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) u[j] += projected(i, j) / rows;

    const double nu = norm2(u.data(), d);
    const double nt = norm2(target.row(0), d);
    if (nu == 0.0 || nt == 0.0) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    double dot = 0.0;
    for (int j = 0; j < d; ++j) dot += u[j] * target(0, j);
    const double cosine = dot / (nu * nt);

    // d(1 - cos)/du_j = -(t_j / (|u||t|) - u_j * dot / (|u|^3 |t|))
    for (int j = 0; j < d; ++j) {
        const double du = -(target(0, j) / (nu * nt) - u[j] * dot / (nu * nu * nu * nt));
        for (int i = 0; i < rows; ++i) dprojected(i, j) = du / rows;
    }
    return 1.0 - cosine;
}

Mat text_embedding(const std::string& text, int d_llm) {
    require(d_llm >= 1, "text_embedding: d_llm must be >= 1");
    Mat e(1, d_llm);
    for (const auto& token : metrics::tokenize(text)) {
        const std::uint64_t h = fnv1a64(token.data(), token.size());
        const int idx = static_cast<int>(h % static_cast<std::uint64_t>(d_llm));
        const double sign = ((h >> 63) & 1u) ? -1.0 : 1.0;
        e(0, idx) += sign;
    }
    const double n = norm2(e.row(0), d_llm);
    if (n > 0.0) scale_inplace(e, 1.0 / n);
    return e;
}

std::vector<TrainSample> load_segment_dataset(const std::string& dataset_dir, int t_s,
                                              double fps) {
    require(t_s >= 1, "t_s must be >= 1");
    require(fps > 0.0, "fps must be positive");
    if (!fs::is_directory(dataset_dir))
        throw ValidationError("not a dataset directory: " + dataset_dir);

    std::vector<std::string> video_dirs;
    for (const auto& e : fs::directory_iterator(dataset_dir))
        if (e.is_directory() && fs::exists(e.path() / "annotations.jsonl"))
            video_dirs.push_back(e.path().string());
    std::sort(video_dirs.begin(), video_dirs.end());
    if (video_dirs.empty())
        throw ValidationError("no video directories with annotations.jsonl under " +
                              dataset_dir);

    std::vector<TrainSample> samples;
    for (const auto& vdir : video_dirs) {
        auto annotations = read_annotations((fs::path(vdir) / "annotations.jsonl").string());
        std::vector<std::string> frame_paths;
        for (const auto& e : fs::directory_iterator(vdir))
            if (e.is_regular_file() && e.path().extension() == ".png")
                frame_paths.push_back(e.path().string());
        std::sort(frame_paths.begin(), frame_paths.end());
        if (frame_paths.empty()) throw ValidationError("no frames in " + vdir);

        std::vector<FrameSample> frames(frame_paths.size());
        for (std::size_t i = 0; i < frame_paths.size(); ++i) {
            frames[i].timestamp = static_cast<double>(i) / fps;
            frames[i].image = read_png(frame_paths[i]);
        }

        for (const auto& a : annotations) {
            // Window = the last <= t_s frames strictly before segment_end.
            int end_idx = 0;
            while (end_idx < static_cast<int>(frames.size()) &&
                   frames[end_idx].timestamp < a.segment_end)
                ++end_idx;
            const int begin_idx = std::max(0, end_idx - t_s);
            if (end_idx == begin_idx) continue;  // segment before the first frame

            TrainSample s;
            s.window.frames.assign(frames.begin() + begin_idx, frames.begin() + end_idx);
            s.window.current_timestep = s.window.frames.back().timestamp;
            s.label = (a.label == Label::Mistake) ? 1.0 : 0.0;
            s.explanation = a.explanation;
            samples.push_back(std::move(s));
        }
    }
    return samples;
}

Trainer::Trainer(Model& model, TrainConfig config)
    : model_(model), config_(std::move(config)), shuffle_rng_(config_.seed) {
    config_.validate();

    const auto groups = model_.store().group_names();
    for (const auto& name : config_.freeze) {
        bool known = false;
        for (const auto& g : groups)
            if (g == name) known = true;
        if (!known)
            throw ValidationError("training.freeze names unknown parameter group \"" + name +
                                  "\"");
    }
    freeze_ = config_.freeze;
    if (model_.config().encoder.frozen) freeze_.insert(VisualEncoder::kGroupName);
    encoder_trainable_ = freeze_.count(VisualEncoder::kGroupName) == 0;

    for (const auto& p : model_.store().all())
        velocity_.emplace_back(p->value.rows(), p->value.cols());
}

Mat Trainer::features_for(const TrainSample& sample, SegmentEncodeCache* cache) {
    if (encoder_trainable_) {
        require(cache != nullptr, "internal: trainable encoder needs a cache");
        return model_.encoder().encode_segment(sample.window, *cache);
    }
    return model_.encoder().encode_segment(sample.window);
}

StepStats Trainer::train_step(const std::vector<TrainSample>& samples,
                              const std::vector<int>& batch_indices) {
    if (batch_indices.empty()) throw ValidationError("train_step: empty batch");
    model_.store().zero_grads();

    const double w_det = config_.loss_weights.detection;
    const double w_align = config_.loss_weights.alignment;
    const int batch = static_cast<int>(batch_indices.size());

    // Alignment is averaged over the batch samples that carry explanations.
    int align_count = 0;
    if (w_align > 0.0)
        for (int idx : batch_indices)
            if (!samples[idx].explanation.empty()) ++align_count;

    auto nan_abort = [&]() -> std::runtime_error {
        std::string group = "(unknown)";
        for (const auto& p : model_.store().all())
            if (!p->value.all_finite() || !p->grad.all_finite()) {
                group = p->name.substr(0, p->name.find('.'));
                break;
            }
        return std::runtime_error(
            "train_step: NaN encountered; first non-finite parameter group: " + group);
    };

    StepStats stats;
    try {
        for (int idx : batch_indices) {
            const TrainSample& sample = samples[idx];

            SegmentEncodeCache enc_cache;
            Mat v;
            if (!encoder_trainable_ && cached_for_ == &samples) {
                v = feature_cache_[idx];
            } else {
                v = features_for(sample, encoder_trainable_ ? &enc_cache : nullptr);
            }

            VideoQFormerCache vqf_cache;
            Mat f = model_.video_qformer().forward(v, vqf_cache);
            MistakeHeadCache head_cache;
            MistakeLogits logits = model_.head().classify(f, head_cache);

            LossGrad det = bce_with_logit(logits.aggregated_logit, sample.label,
                                          config_.positive_class_weight);
            stats.detection += det.value / batch;

            Mat df = model_.head().backward(head_cache, det.grad * w_det / batch);

            if (w_align > 0.0 && !sample.explanation.empty()) {
                Mat projected = model_.projection().project(f);
                Mat target = text_embedding(sample.explanation, model_.config().d_llm);
                Mat dprojected;
                const double aloss = alignment_loss_grad(projected, target, dprojected);
                stats.alignment += aloss / align_count;
                scale_inplace(dprojected, w_align / align_count);
                add_inplace(df, model_.projection().backward(f, dprojected));
            }

            Mat dv = model_.video_qformer().backward(vqf_cache, df);
            if (encoder_trainable_) model_.encoder().backward_segment(enc_cache, dv);
        }
    } catch (const ValidationError& e) {
        // A NaN surfacing mid-forward (e.g. through the sigmoid) becomes the
        // diagnostic abort; anything else propagates untouched.
        if (std::string(e.what()).find("NaN") != std::string::npos) throw nan_abort();
        throw;
    }

    stats.loss = w_det * stats.detection + w_align * stats.alignment;
    if (std::isnan(stats.loss)) throw nan_abort();

    apply_update();
    return stats;
}

void Trainer::apply_update() {
    const auto& params = model_.store().all();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        const std::string group = p.name.substr(0, p.name.find('.'));
        if (freeze_.count(group)) continue;
        if (config_.momentum > 0.0) {
            Mat& vel = velocity_[i];
            scale_inplace(vel, config_.momentum);
            add_inplace(vel, p.grad);
            axpy_inplace(p.value, -config_.learning_rate, vel);
        } else {
            axpy_inplace(p.value, -config_.learning_rate, p.grad);
        }
    }
}

std::vector<TrainLogRow> Trainer::train(const std::vector<TrainSample>& samples) {
    require(!samples.empty(), "train: empty dataset");

    if (!encoder_trainable_ && cached_for_ != &samples) {
        feature_cache_.clear();
        feature_cache_.reserve(samples.size());
        for (const auto& s : samples)
            feature_cache_.push_back(model_.encoder().encode_segment(s.window));
        cached_for_ = &samples;
    }

    std::vector<int> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<TrainLogRow> log;
    long step = 0;
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
        // Fisher-Yates with the trainer's deterministic stream.
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng_.uniform_int(0, i)]);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config_.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config_.batch_size));
            std::vector<int> batch(order.begin() + start, order.begin() + stop);
            StepStats stats = train_step(samples, batch);
            log.push_back({++step, stats.loss, stats.detection, stats.alignment});
        }
    }
    return log;
}

StepStats Trainer::eval_loss(const std::vector<TrainSample>& samples) {
    StepStats stats;
    int align_count = 0;
    for (const auto& s : samples)
        if (!s.explanation.empty()) ++align_count;
    for (const auto& sample : samples) {
        Mat v = model_.encoder().encode_segment(sample.window);
        Mat f = model_.video_qformer().forward(v);
        MistakeLogits logits = model_.head().classify(f);
        stats.detection += bce_with_logit(logits.aggregated_logit, sample.label,
                                          config_.positive_class_weight)
                               .value /
                           samples.size();
        if (config_.loss_weights.alignment > 0.0 && !sample.explanation.empty()) {
            Mat projected = model_.projection().project(f);
            Mat target = text_embedding(sample.explanation, model_.config().d_llm);
            stats.alignment += alignment_loss(projected, target) / align_count;
        }
    }
    stats.loss = config_.loss_weights.detection * stats.detection +
                 config_.loss_weights.alignment * stats.alignment;
    return stats;
}

void write_train_log_csv(const std::vector<TrainLogRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << "step,loss,detection_loss,alignment_loss\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g\n", r.step, r.loss, r.detection,
                      r.alignment);
        out << buf;
    }
}

}  // namespace omd
