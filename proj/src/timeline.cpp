#include "omd/timeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace omd {

Timeline build_timeline(const std::vector<PredictionRecord>& predictions,
                        const std::vector<AnnotationRecord>& annotations,
                        const std::string& video_id) {
    Timeline tl;
    tl.video_id = video_id;

    std::vector<const AnnotationRecord*> segments;
    for (const auto& a : annotations)
        if (a.video_id == video_id) segments.push_back(&a);
    std::sort(segments.begin(), segments.end(),
              [](const AnnotationRecord* x, const AnnotationRecord* y) {
                  return x->segment_start < y->segment_start;
              });
    if (segments.empty())
        throw ValidationError("timeline: no annotations for video \"" + video_id + "\"");

    for (const auto* s : segments)
        if (s->label == Label::Mistake)
            tl.mistake_spans.push_back({s->segment_start, s->segment_end});

    for (const auto& p : predictions) {
        if (p.video_id != video_id) continue;
        const AnnotationRecord* hit = nullptr;
        for (const auto* s : segments)
            if (p.timestep >= s->segment_start && p.timestep < s->segment_end) {
                hit = s;
                break;
            }
        if (!hit)
            throw ValidationError("timeline: prediction at t=" + std::to_string(p.timestep) +
                                  " matches no annotation segment of \"" + video_id + "\"");
        tl.rows.push_back(
            {p.timestep, p.probability, p.label == Label::Mistake, hit->label});
    }
    if (tl.rows.empty())
        throw ValidationError("timeline: no predictions for video \"" + video_id + "\"");
    std::sort(tl.rows.begin(), tl.rows.end(),
              [](const TimelineRow& a, const TimelineRow& b) { return a.timestep < b.timestep; });
    return tl;
}

void write_timeline_csv(const Timeline& timeline, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << "timestep,probability,gate_fired,ground_truth_label\n";
    char buf[128];
    for (const auto& r : timeline.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%s\n", r.timestep, r.probability,
                      r.gate_fired ? 1 : 0, to_string(r.ground_truth).c_str());
        out << buf;
    }
}

void write_timeline_svg(const Timeline& timeline, const std::string& path,
                        const SvgLayout& layout) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open for writing: " + path);

    const double t_min = timeline.rows.front().timestep;
    const double t_max = timeline.rows.back().timestep;
    char buf[256];

    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                  "viewBox=\"0 0 %.0f %.0f\">\n",
                  layout.width, layout.height, layout.width, layout.height);
    out << buf;
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // Ground-truth mistake segments, clipped to the plotted time span.
    for (const auto& span : timeline.mistake_spans) {
        const double lo = std::max(span.start, t_min);
        const double hi = std::min(span.end, t_max);
        if (hi <= lo) continue;
        const double x0 = layout.x(lo, t_min, t_max);
        const double x1 = layout.x(hi, t_min, t_max);
        std::snprintf(buf, sizeof(buf),
                      "<rect class=\"mistake-span\" x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" "
                      "height=\"%.3f\" fill=\"#f4c7c3\"/>\n",
                      x0, layout.top, x1 - x0, layout.height - layout.top - layout.bottom);
        out << buf;
    }

    out << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : timeline.rows) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", layout.x(r.timestep, t_min, t_max),
                      layout.y(r.probability));
        out << buf;
    }
    out << "\"/>\n";

    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"black\"/>\n",
                  layout.left, layout.height - layout.bottom, layout.width - layout.right,
                  layout.height - layout.bottom);
    out << buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" y2=\"%.3f\" stroke=\"black\"/>\n",
                  layout.left, layout.top, layout.left, layout.height - layout.bottom);
    out << buf;
    out << "<text x=\"8\" y=\"" << layout.y(1.0) + 4 << "\" font-size=\"10\">1.0</text>\n";
    out << "<text x=\"8\" y=\"" << layout.y(0.0) + 4 << "\" font-size=\"10\">0.0</text>\n";
    out << "</svg>\n";
}

}  // namespace omd
