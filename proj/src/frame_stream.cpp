#include "omd/frame_stream.hpp"

#include <algorithm>
#include <filesystem>
#include <istream>

namespace omd {

namespace fs = std::filesystem;

StreamState::StreamState(int t_s, int frame_size) : t_s_(t_s), frame_size_(frame_size) {
    require(t_s >= 1, "t_s must be >= 1");
    require(frame_size >= 1, "frame_size must be >= 1");
}

void StreamState::push_frame(FrameSample frame) {
    if (any_pushed_ && !(frame.timestamp > last_timestamp_))
        throw ValidationError("non-monotonic timestamp: got " +
                              std::to_string(frame.timestamp) + " after " +
                              std::to_string(last_timestamp_));
    if (frame.image.height() != frame_size_ || frame.image.width() != frame_size_)
        throw ValidationError("frame shape " + std::to_string(frame.image.height()) + "x" +
                              std::to_string(frame.image.width()) + " does not match configured " +
                              std::to_string(frame_size_) + "x" + std::to_string(frame_size_));
    for (double v : frame.image.pixels())
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("frame pixel value outside [0,1]: " + std::to_string(v));

    last_timestamp_ = frame.timestamp;
    any_pushed_ = true;
    frames_.push_back(std::move(frame));
    if (static_cast<int>(frames_.size()) > t_s_) frames_.pop_front();
}

SegmentWindow StreamState::current_segment() const {
    if (frames_.empty()) throw ValidationError("no frames pushed yet");
    SegmentWindow w;
    w.frames.assign(frames_.begin(), frames_.end());
    w.current_timestep = frames_.back().timestamp;
    return w;
}

DirectoryFrameSource::DirectoryFrameSource(const std::string& dir, double fps) : fps_(fps) {
    require(fps > 0.0, "fps must be positive");
    if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png")
            paths_.push_back(e.path().string());
    }
    if (paths_.empty()) throw ValidationError("no .png frames in " + dir);
    std::sort(paths_.begin(), paths_.end());
}

bool DirectoryFrameSource::next(FrameSample& out) {
    if (pos_ >= paths_.size()) return false;
    out.image = read_png(paths_[pos_]);
    out.timestamp = static_cast<double>(pos_) / fps_;
    ++pos_;
    return true;
}

RawStreamFrameSource::RawStreamFrameSource(std::istream& in)
    : in_(in), header_(read_raw_stream_header(in)) {}

bool RawStreamFrameSource::next(FrameSample& out) {
    if (!read_raw_frame(in_, header_.height, header_.width, out.image)) return false;
    out.timestamp = static_cast<double>(index_) / static_cast<double>(header_.fps);
    ++index_;
    return true;
}

}  // namespace omd
