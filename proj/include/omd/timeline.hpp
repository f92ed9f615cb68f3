#pragma once

#include <string>
#include <vector>

#include "omd/data_model.hpp"

namespace omd {

struct TimelineRow {
    double timestep = 0.0;
    double probability = 0.0;
    bool gate_fired = false;
    Label ground_truth = Label::Correct;
};

struct TimelineInterval {
    double start = 0.0;
    double end = 0.0;
};

struct Timeline {
    std::string video_id;
    std::vector<TimelineRow> rows;                 // sorted by timestep
    std::vector<TimelineInterval> mistake_spans;   // annotated mistake segments
};

// Joins one video's predictions with its annotation segments. Every
// prediction must land inside exactly one segment.
Timeline build_timeline(const std::vector<PredictionRecord>& predictions,
                        const std::vector<AnnotationRecord>& annotations,
                        const std::string& video_id);

void write_timeline_csv(const Timeline& timeline, const std::string& path);

// Fixed-size self-contained SVG: probability polyline over time with
// annotated mistake intervals shaded. The geometry below is part of the
// plot's contract so coordinates can be recomputed exactly.
struct SvgLayout {
    double width = 800.0, height = 240.0;
    double left = 50.0, right = 10.0, top = 10.0, bottom = 30.0;

    double x(double t, double t_min, double t_max) const {
        const double span = (t_max > t_min) ? (t_max - t_min) : 1.0;
        return left + (t - t_min) / span * (width - left - right);
    }
    double y(double probability) const {
        return top + (1.0 - probability) * (height - top - bottom);
    }
};

void write_timeline_svg(const Timeline& timeline, const std::string& path,
                        const SvgLayout& layout = {});

}  // namespace omd
