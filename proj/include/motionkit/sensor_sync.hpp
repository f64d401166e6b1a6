#pragma once

#include "motionkit/body_model.hpp"
#include "motionkit/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace motionkit {

/// Scalar signal on strictly increasing timestamps (seconds).
struct SampledSeries {
    std::vector<double> timestamps;
    std::vector<double> values;

    size_t size() const { return timestamps.size(); }
    void validate() const;
};

struct Event {
    double t = 0.0;
    int x = 0;
    int y = 0;
    int polarity = 1;  // +1 or -1

    bool operator==(const Event&) const = default;
};

using EventStream = std::vector<Event>;

/// Events with timestamps in (t_begin, t_end].
struct EventFrame {
    double t_begin = 0.0;
    double t_end = 0.0;
    std::vector<Event> events;
};

struct FramedEvents {
    std::vector<EventFrame> frames;
    size_t dropped = 0;  // events outside (first boundary, last boundary]
};

inline constexpr double kDefaultPeakProminence = 0.3;  // m
inline constexpr double kDefaultPeakMatchWindow = 0.5;  // s
inline constexpr int kDefaultDenoiseRadius = 1;         // px
inline constexpr double kDefaultDenoiseWindow = 0.005;  // s

/// Times of local maxima whose topographic prominence is at least
/// `min_prominence`. A flat-topped maximum reports its earliest sample.
/// Throws ValidationError for series shorter than 3 samples.
std::vector<double> detect_jump_peaks(const SampledSeries& series, double min_prominence = kDefaultPeakProminence);

/// Clock offset to add to b's timestamps so its jump peaks line up with a's.
/// Pairs the first peaks, then averages the differences of all peaks matched
/// greedily within `match_window`. Throws SyncError naming the stream without peaks.
double estimate_offset(const SampledSeries& a, const SampledSeries& b, double min_prominence = kDefaultPeakProminence,
                       double match_window = kDefaultPeakMatchWindow);

/// Linear interpolation onto a uniform grid starting at the first timestamp.
SampledSeries resample(const SampledSeries& series, double target_rate);

/// Linear interpolation of `series` at `t`, clamped to the end values.
double interpolate(const SampledSeries& series, double t);

/// Per-joint geodesic interpolation of a timed pose stream at time t
/// (clamped to the ends). Translation is interpolated linearly.
PoseFrame interpolate_pose(std::span<const double> timestamps, std::span<const PoseFrame> poses, double t);

/// Split a time-ordered stream into right-closed frames between consecutive boundaries.
FramedEvents frame_events(std::span<const Event> stream, std::span<const double> boundaries);

/// Keep an event iff some other event lies within Chebyshev pixel distance
/// `spatial_radius` and |dt| <= `time_window`. Preserves order.
EventFrame denoise_events(const EventFrame& frame, int spatial_radius = kDefaultDenoiseRadius,
                          double time_window = kDefaultDenoiseWindow);

/// Row-major signed count image: pixel (x, y) at index y * width + x.
std::vector<std::int32_t> accumulate_event_image(const EventFrame& frame, int width, int height);

}  // namespace motionkit
