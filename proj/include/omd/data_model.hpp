#pragma once

#include <optional>
#include <string>
#include <vector>

#include "omd/image.hpp"

namespace omd {

enum class Label { Correct, Mistake };
enum class ErrorType { Procedural, Execution, None };

std::string to_string(Label l);
std::string to_string(ErrorType e);
Label label_from_string(const std::string& s);
ErrorType error_type_from_string(const std::string& s);

// Ground-truth segment annotation. Invariants:
//   segment_end > segment_start
//   error_type == None  <=>  label == Correct
//   explanation non-empty  <=>  label == Mistake
struct AnnotationRecord {
    std::string video_id;
    double segment_start = 0.0;
    double segment_end = 0.0;
    Label label = Label::Correct;
    ErrorType error_type = ErrorType::None;
    std::string explanation;

    void validate() const;
};

// One detector output per evaluated timestep. label == Mistake iff the gate
// fired; an explanation may only accompany a fired record.
struct PredictionRecord {
    std::string video_id;
    double timestep = 0.0;
    double probability = 0.0;
    Label label = Label::Correct;
    std::optional<std::string> explanation;

    void validate() const;
};

// JSON-lines IO. One UTF-8 JSON object per line; malformed lines are
// rejected with their line number.
std::vector<AnnotationRecord> read_annotations(const std::string& path);
void write_annotations(const std::vector<AnnotationRecord>& records, const std::string& path);
std::vector<PredictionRecord> read_predictions(const std::string& path);
void write_predictions(const std::vector<PredictionRecord>& records, const std::string& path);

std::string annotation_to_json_line(const AnnotationRecord& r);
std::string prediction_to_json_line(const PredictionRecord& r);
AnnotationRecord annotation_from_json_line(const std::string& line);
PredictionRecord prediction_from_json_line(const std::string& line);

struct SyntheticTaskSpec {
    std::uint64_t seed = 0;
    int num_videos = 1;
    int steps_per_task = 4;
    int frame_size = 64;
    double error_rate = 0.3;
    double fps = 1.0;

    void validate() const;

    // Fixed segment duration; frames per segment derives from fps.
    static constexpr double kSegmentSeconds = 2.0;
    int frames_per_segment() const;
    double segment_seconds() const { return frames_per_segment() / fps; }
};

struct GeneratedVideo {
    std::string video_id;
    std::vector<Image> frames;
    std::vector<AnnotationRecord> annotations;  // one per step segment
};

// Deterministic rendered task videos. Each video performs steps_per_task
// steps in order; with probability error_rate a video receives one error:
// either a procedural swap of two adjacent steps (both swapped segments are
// labeled mistakes) or an execution error corrupting one step's color or
// shape. See the module notes in data_model.cpp for the exact draw sequence.
std::vector<GeneratedVideo> generate_synthetic(const SyntheticTaskSpec& spec);

// Renders the dataset to disk:
//   out_dir/video_NNNN/frame_NNNNNN.png
//   out_dir/video_NNNN/annotations.jsonl
//   out_dir/annotations.jsonl   (all videos, concatenated)
//   out_dir/dataset.json        (generation parameters echo)
void write_synthetic_dataset(const SyntheticTaskSpec& spec, const std::string& out_dir);

}  // namespace omd
