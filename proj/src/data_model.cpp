#include "omd/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "omd/rng.hpp"

namespace omd {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Label l) { return l == Label::Correct ? "correct" : "mistake"; }

std::string to_string(ErrorType e) {
    switch (e) {
        case ErrorType::Procedural: return "procedural";
        case ErrorType::Execution: return "execution";
        default: return "none";
    }
}

Label label_from_string(const std::string& s) {
    if (s == "correct") return Label::Correct;
    if (s == "mistake") return Label::Mistake;
    throw ParseError("bad label value \"" + s + "\" (expected correct|mistake)");
}

ErrorType error_type_from_string(const std::string& s) {
    if (s == "procedural") return ErrorType::Procedural;
    if (s == "execution") return ErrorType::Execution;
    if (s == "none") return ErrorType::None;
    throw ParseError("bad error_type value \"" + s +
                     "\" (expected procedural|execution|none)");
}

void AnnotationRecord::validate() const {
    if (video_id.empty()) throw ValidationError("annotation: video_id is empty");
    if (!(segment_start >= 0.0))
        throw ValidationError("annotation: segment_start must be >= 0");
    if (!(segment_end > segment_start))
        throw ValidationError("annotation: segment_end (" + std::to_string(segment_end) +
                              ") must exceed segment_start (" + std::to_string(segment_start) +
                              ")");
    const bool correct = (label == Label::Correct);
    if (correct != (error_type == ErrorType::None))
        throw ValidationError("annotation: error_type must be none iff label is correct");
    if (correct != explanation.empty())
        throw ValidationError(
            "annotation: explanation must be non-empty iff label is mistake");
}

void PredictionRecord::validate() const {
    if (video_id.empty()) throw ValidationError("prediction: video_id is empty");
    if (!(probability >= 0.0 && probability <= 1.0))
        throw ValidationError("prediction: probability " + std::to_string(probability) +
                              " outside [0, 1]");
    if (explanation.has_value() && label != Label::Mistake)
        throw ValidationError("prediction: explanation present requires label=mistake");
}

namespace {
json require_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"");
    return j.at(key);
}
}  // namespace

std::string annotation_to_json_line(const AnnotationRecord& r) {
    json j;
    j["video_id"] = r.video_id;
    j["segment_start"] = r.segment_start;
    j["segment_end"] = r.segment_end;
    j["label"] = to_string(r.label);
    j["error_type"] = to_string(r.error_type);
    j["explanation"] = r.explanation;
    return j.dump();
}

AnnotationRecord annotation_from_json_line(const std::string& line) {
    json j = json::parse(line);
    AnnotationRecord r;
    r.video_id = require_field(j, "video_id").get<std::string>();
    r.segment_start = require_field(j, "segment_start").get<double>();
    r.segment_end = require_field(j, "segment_end").get<double>();
    r.label = label_from_string(require_field(j, "label").get<std::string>());
    r.error_type = error_type_from_string(require_field(j, "error_type").get<std::string>());
    r.explanation = require_field(j, "explanation").get<std::string>();
    r.validate();
    return r;
}

std::string prediction_to_json_line(const PredictionRecord& r) {
    json j;
    j["video_id"] = r.video_id;
    j["timestep"] = r.timestep;
    j["probability"] = r.probability;
    j["label"] = to_string(r.label);
    if (r.explanation.has_value()) j["explanation"] = *r.explanation;
    return j.dump();
}

PredictionRecord prediction_from_json_line(const std::string& line) {
    json j = json::parse(line);
    PredictionRecord r;
    r.video_id = require_field(j, "video_id").get<std::string>();
    r.timestep = require_field(j, "timestep").get<double>();
    r.probability = require_field(j, "probability").get<double>();
    r.label = label_from_string(require_field(j, "label").get<std::string>());
    if (j.contains("explanation")) r.explanation = j.at("explanation").get<std::string>();
    r.validate();
    return r;
}

namespace {
template <typename Record, Record (*ParseLine)(const std::string&)>
std::vector<Record> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open: " + path);
    std::vector<Record> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(ParseLine(line));
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}
}  // namespace

std::vector<AnnotationRecord> read_annotations(const std::string& path) {
    return read_jsonl<AnnotationRecord, annotation_from_json_line>(path);
}

void write_annotations(const std::vector<AnnotationRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& r : records) {
        r.validate();
        out << annotation_to_json_line(r) << "\n";
    }
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
    return read_jsonl<PredictionRecord, prediction_from_json_line>(path);
}

void write_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    for (const auto& r : records) {
        r.validate();
        out << prediction_to_json_line(r) << "\n";
    }
}

void SyntheticTaskSpec::validate() const {
    if (num_videos <= 0) throw ValidationError("synth.num_videos must be > 0");
    if (steps_per_task < 2) throw ValidationError("synth.steps_per_task must be >= 2");
    if (frame_size < 2 * steps_per_task)
        throw ValidationError("synth.frame_size must be at least 2 * steps_per_task");
    if (!(error_rate >= 0.0 && error_rate <= 1.0))
        throw ValidationError("synth.error_rate must lie in [0, 1]");
    if (!(fps > 0.0)) throw ValidationError("synth.fps must be positive");
}

int SyntheticTaskSpec::frames_per_segment() const {
    return std::max(1, static_cast<int>(std::lround(kSegmentSeconds * fps)));
}

namespace {

constexpr int kPaletteSize = 8;
constexpr double kPalette[kPaletteSize][3] = {
    {0.90, 0.10, 0.10}, {0.10, 0.80, 0.15}, {0.15, 0.25, 0.95}, {0.95, 0.85, 0.10},
    {0.85, 0.15, 0.85}, {0.10, 0.85, 0.85}, {0.95, 0.55, 0.10}, {0.90, 0.90, 0.90},
};
constexpr int kShapeKinds = 3;  // 0 square, 1 disc, 2 triangle

struct StepPlan {
    int identity = 0;    // which step is being performed
    int color_idx = 0;
    int shape_kind = 0;
    Label label = Label::Correct;
    ErrorType error_type = ErrorType::None;
    std::string explanation;
};

// Renders one frame of a step: an indicator tick over the current position's
// column block and the step glyph in the block of the step's identity.
Image render_step_frame(const SyntheticTaskSpec& spec, int position, const StepPlan& step,
                        int frame_in_segment) {
    const int sz = spec.frame_size;
    Image img(sz, sz);

    const int steps = spec.steps_per_task;
    auto block_lo = [&](int b) { return b * sz / steps; };
    auto block_hi = [&](int b) { return (b + 1) * sz / steps; };

    const int strip_h = std::max(2, sz / 8);
    for (int y = 0; y < strip_h; ++y)
        for (int x = block_lo(position); x < block_hi(position); ++x)
            img.set_rgb(y, x, 0.85, 0.85, 0.85);

    const int area_top = sz / 4;
    const double cx = 0.5 * (block_lo(step.identity) + block_hi(step.identity));
    const double cy = 0.5 * (area_top + sz);
    const double block_w = static_cast<double>(sz) / steps;
    const int frames = spec.frames_per_segment();
    const double grow = 0.55 + 0.45 * (frame_in_segment + 1) / frames;
    const double r = 0.48 * block_w * grow;

    const double* col = kPalette[step.color_idx];
    for (int y = area_top; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
            const double dx = x + 0.5 - cx;
            const double dy = y + 0.5 - cy;
            bool inside = false;
            switch (step.shape_kind) {
                case 0: inside = std::fabs(dx) <= r && std::fabs(dy) <= r; break;
                case 1: inside = dx * dx + dy * dy <= r * r; break;
                default:
                    inside = dy >= -r && dy <= r && std::fabs(dx) <= 0.5 * (dy + r);
                    break;
            }
            if (inside) img.set_rgb(y, x, col[0], col[1], col[2]);
        }
    }
    return img;
}

std::string step_name(int identity) { return "step " + std::to_string(identity + 1); }

}  // namespace

// Draw sequence, consumed from one Rng(seed) across videos in order:
//   per video: u_err = uniform01(); error iff u_err < error_rate
//   if error:  u_kind = uniform01(); procedural iff u_kind < 0.5
//     procedural: swap_pos = uniform_int(0, steps-2); positions swap_pos and
//                 swap_pos+1 exchange steps and both are labeled mistakes
//     execution:  exec_pos = uniform_int(0, steps-1);
//                 u_attr = uniform01(); wrong color iff u_attr < 0.5
//                 offset = uniform_int(1, palette_size-1)   (color)
//                        | uniform_int(1, shape_kinds-1)    (shape)
// Rendering consumes no randomness.
std::vector<GeneratedVideo> generate_synthetic(const SyntheticTaskSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int steps = spec.steps_per_task;
    const int fpseg = spec.frames_per_segment();
    const double seg_seconds = spec.segment_seconds();

    std::vector<GeneratedVideo> videos;
    videos.reserve(spec.num_videos);
    for (int vi = 0; vi < spec.num_videos; ++vi) {
        GeneratedVideo video;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "video_%04d", vi);
        video.video_id = idbuf;

        std::vector<StepPlan> plan(steps);
        for (int p = 0; p < steps; ++p) {
            plan[p].identity = p;
            plan[p].color_idx = p % kPaletteSize;
            plan[p].shape_kind = p % kShapeKinds;
        }

        const bool has_error = rng.uniform01() < spec.error_rate;
        if (has_error) {
            const bool procedural = rng.uniform01() < 0.5;
            if (procedural) {
                const int swap_pos = rng.uniform_int(0, steps - 2);
                std::swap(plan[swap_pos], plan[swap_pos + 1]);
                for (int p : {swap_pos, swap_pos + 1}) {
                    plan[p].label = Label::Mistake;
                    plan[p].error_type = ErrorType::Procedural;
                    plan[p].explanation =
                        step_name(plan[p].identity) + " performed out of order";
                }
            } else {
                const int exec_pos = rng.uniform_int(0, steps - 1);
                const bool wrong_color = rng.uniform01() < 0.5;
                StepPlan& s = plan[exec_pos];
                if (wrong_color) {
                    const int offset = rng.uniform_int(1, kPaletteSize - 1);
                    s.color_idx = (s.color_idx + offset) % kPaletteSize;
                    s.explanation = step_name(s.identity) + " executed with wrong color";
                } else {
                    const int offset = rng.uniform_int(1, kShapeKinds - 1);
                    s.shape_kind = (s.shape_kind + offset) % kShapeKinds;
                    s.explanation = step_name(s.identity) + " executed with wrong shape";
                }
                s.label = Label::Mistake;
                s.error_type = ErrorType::Execution;
            }
        }

        for (int p = 0; p < steps; ++p) {
            for (int fi = 0; fi < fpseg; ++fi)
                video.frames.push_back(render_step_frame(spec, p, plan[p], fi));

            AnnotationRecord rec;
            rec.video_id = video.video_id;
            rec.segment_start = p * seg_seconds;
            rec.segment_end = (p + 1) * seg_seconds;
            rec.label = plan[p].label;
            rec.error_type = plan[p].error_type;
            rec.explanation = plan[p].explanation;
            rec.validate();
            video.annotations.push_back(std::move(rec));
        }
        videos.push_back(std::move(video));
    }
    return videos;
}

void write_synthetic_dataset(const SyntheticTaskSpec& spec, const std::string& out_dir) {
    auto videos = generate_synthetic(spec);
    fs::create_directories(out_dir);

    std::ofstream combined(fs::path(out_dir) / "annotations.jsonl");
    if (!combined) throw ValidationError("cannot write to " + out_dir);

    for (const auto& video : videos) {
        const fs::path vdir = fs::path(out_dir) / video.video_id;
        fs::create_directories(vdir);
        for (std::size_t i = 0; i < video.frames.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%06zu.png", i);
            write_png(video.frames[i], (vdir / name).string());
        }
        write_annotations(video.annotations, (vdir / "annotations.jsonl").string());
        for (const auto& r : video.annotations) combined << annotation_to_json_line(r) << "\n";
    }

    json meta;
    meta["seed"] = spec.seed;
    meta["num_videos"] = spec.num_videos;
    meta["steps_per_task"] = spec.steps_per_task;
    meta["frame_size"] = spec.frame_size;
    meta["error_rate"] = spec.error_rate;
    meta["fps"] = spec.fps;
    meta["frames_per_segment"] = spec.frames_per_segment();
    meta["segment_seconds"] = spec.segment_seconds();
    std::ofstream meta_out(fs::path(out_dir) / "dataset.json");
    meta_out << meta.dump(2) << "\n";
}

}  // namespace omd
