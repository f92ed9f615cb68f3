#pragma once

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "omd/image.hpp"

namespace omd {

// One timestamped RGB frame entering the stream. Timestamps are seconds and
// strictly increase within a stream.
struct FrameSample {
    double timestamp = 0.0;
    Image image;
};

// Value snapshot of the last <= t_s frames, ordered by timestamp. Never a
// view into mutable stream state.
struct SegmentWindow {
    std::vector<FrameSample> frames;
    double current_timestep = 0.0;

    int length() const { return static_cast<int>(frames.size()); }
};

// Single-writer sliding window over an unbounded stream. Holds at most t_s
// frames; pushing a full window evicts the oldest frame.
class StreamState {
public:
    StreamState(int t_s, int frame_size);

    void push_frame(FrameSample frame);
    SegmentWindow current_segment() const;

    bool empty() const { return frames_.empty(); }
    int window_length() const { return static_cast<int>(frames_.size()); }
    int t_s() const { return t_s_; }

private:
    int t_s_;
    int frame_size_;
    std::deque<FrameSample> frames_;
    bool any_pushed_ = false;
    double last_timestamp_ = 0.0;
};

// Pull-based frame producer feeding the online pipeline.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    // Returns false at end of stream.
    virtual bool next(FrameSample& out) = 0;
    virtual double fps() const = 0;
};

// Reads zero-padded numbered PNG frames from a video directory, timestamps
// assigned as index / fps.
class DirectoryFrameSource : public FrameSource {
public:
    DirectoryFrameSource(const std::string& dir, double fps);
    bool next(FrameSample& out) override;
    double fps() const override { return fps_; }

private:
    std::vector<std::string> paths_;
    std::size_t pos_ = 0;
    double fps_;
};

// Reads the binary raw-frame protocol (18-byte MSNT header, then 8-bit RGB
// frames); timestamps assigned as index / header.fps.
class RawStreamFrameSource : public FrameSource {
public:
    explicit RawStreamFrameSource(std::istream& in);
    bool next(FrameSample& out) override;
    double fps() const override { return static_cast<double>(header_.fps); }
    const RawStreamHeader& header() const { return header_; }

private:
    std::istream& in_;
    RawStreamHeader header_;
    std::size_t index_ = 0;
};

}  // namespace omd
