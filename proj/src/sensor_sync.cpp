#include "motionkit/sensor_sync.hpp"

#include "motionkit/rotation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace motionkit {

void SampledSeries::validate() const {
    if (timestamps.size() != values.size()) throw ValidationError("series timestamps and values differ in length");
    for (size_t i = 0; i < timestamps.size(); ++i) {
        if (!std::isfinite(timestamps[i]) || !std::isfinite(values[i])) throw ValidationError("series has non-finite samples");
        if (i > 0 && !(timestamps[i] > timestamps[i - 1])) {
            throw ValidationError(fmt::format("series timestamps not strictly increasing at sample {}", i));
        }
    }
}

std::vector<double> detect_jump_peaks(const SampledSeries& series, double min_prominence) {
    series.validate();
    const auto& v = series.values;
    const size_t n = v.size();
    if (n < 3) throw ValidationError("peak detection needs at least 3 samples");

    std::vector<double> peaks;
    size_t i = 1;
    while (i + 1 < n) {
        if (!(v[i] > v[i - 1])) {
            ++i;
            continue;
        }
        // Walk across a plateau; the earliest sample represents it.
        size_t j = i;
        while (j + 1 < n && v[j + 1] == v[i]) ++j;
        if (j + 1 >= n || !(v[j + 1] < v[i])) {
            i = j + 1;
            continue;
        }
        const double h = v[i];
        // Prominence: height above the higher of the two minima reached before
        // meeting strictly higher ground (or the series end) on either side.
        double left_min = h;
        for (size_t k = i; k-- > 0;) {
            if (v[k] > h) break;
            left_min = std::min(left_min, v[k]);
        }
        double right_min = h;
        for (size_t k = j + 1; k < n; ++k) {
            if (v[k] > h) break;
            right_min = std::min(right_min, v[k]);
        }
        if (h - std::max(left_min, right_min) >= min_prominence) peaks.push_back(series.timestamps[i]);
        i = j + 1;
    }
    return peaks;
}

double estimate_offset(const SampledSeries& a, const SampledSeries& b, double min_prominence, double match_window) {
    const auto pa = detect_jump_peaks(a, min_prominence);
    const auto pb = detect_jump_peaks(b, min_prominence);
    if (pa.empty()) throw SyncError("a", "no jump peak found in the reference stream");
    if (pb.empty()) throw SyncError("b", "no jump peak found in the stream to align");

    const double coarse = pa.front() - pb.front();
    double sum = 0.0;
    int matched = 0;
    size_t next_a = 0;
    for (double tb : pb) {
        const double shifted = tb + coarse;
        size_t best = pa.size();
        double best_err = match_window;
        for (size_t k = next_a; k < pa.size(); ++k) {
            const double err = std::abs(pa[k] - shifted);
            if (err <= best_err) {
                if (best == pa.size() || err < best_err) best = k;
                best_err = err;
            }
        }
        if (best == pa.size()) continue;
        sum += pa[best] - tb;
        ++matched;
        next_a = best + 1;
    }
    return matched > 0 ? sum / matched : coarse;
}

double interpolate(const SampledSeries& series, double t) {
    const auto& ts = series.timestamps;
    if (ts.empty()) throw ValidationError("interpolating an empty series");
    if (t <= ts.front()) return series.values.front();
    if (t >= ts.back()) return series.values.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const size_t hi = static_cast<size_t>(it - ts.begin());
    const size_t lo = hi - 1;
    const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
    return series.values[lo] + w * (series.values[hi] - series.values[lo]);
}

SampledSeries resample(const SampledSeries& series, double target_rate) {
    series.validate();
    if (!(target_rate > 0.0) || !std::isfinite(target_rate)) throw ValidationError("target rate must be positive");
    if (series.size() < 2) throw ValidationError("resampling needs at least 2 samples");
    const double t0 = series.timestamps.front();
    const double span = series.timestamps.back() - t0;
    const double period = 1.0 / target_rate;
    if (span < period * (1.0 - 1e-9)) throw ValidationError("series shorter than one target period");

    // Grid points within the span, tolerating rounding at the last sample.
    const auto count = static_cast<size_t>(std::floor(span * target_rate + 1e-9)) + 1;
    SampledSeries out;
    out.timestamps.reserve(count);
    out.values.reserve(count);
    const auto& ts = series.timestamps;
    size_t seg = 0;
    for (size_t k = 0; k < count; ++k) {
        const double t = t0 + static_cast<double>(k) / target_rate;
        while (seg + 2 < ts.size() && ts[seg + 1] <= t) ++seg;
        double v;
        if (t == ts[seg]) {
            v = series.values[seg];
        } else if (t >= ts.back()) {
            v = series.values.back();
        } else {
            const double w = (t - ts[seg]) / (ts[seg + 1] - ts[seg]);
            v = series.values[seg] + w * (series.values[seg + 1] - series.values[seg]);
        }
        out.timestamps.push_back(t);
        out.values.push_back(v);
    }
    return out;
}

PoseFrame interpolate_pose(std::span<const double> timestamps, std::span<const PoseFrame> poses, double t) {
    if (timestamps.empty() || timestamps.size() != poses.size()) throw ValidationError("pose stream is empty or ragged");
    if (t <= timestamps.front()) return poses.front();
    if (t >= timestamps.back()) return poses.back();
    const auto it = std::upper_bound(timestamps.begin(), timestamps.end(), t);
    const size_t hi = static_cast<size_t>(it - timestamps.begin());
    const size_t lo = hi - 1;
    const double w = (t - timestamps[lo]) / (timestamps[hi] - timestamps[lo]);
    PoseFrame out;
    out.translation = poses[lo].translation + w * (poses[hi].translation - poses[lo].translation);
    for (size_t j = 0; j < kJointCount; ++j) out.pose[j] = slerp_axis_angle(poses[lo].pose[j], poses[hi].pose[j], w);
    return out;
}

FramedEvents frame_events(std::span<const Event> stream, std::span<const double> boundaries) {
    if (boundaries.size() < 2) throw ValidationError("framing needs at least 2 boundaries");
    for (size_t i = 1; i < boundaries.size(); ++i) {
        if (!(boundaries[i] > boundaries[i - 1])) throw ValidationError("frame boundaries must be strictly increasing");
    }
    for (size_t i = 1; i < stream.size(); ++i) {
        if (stream[i].t < stream[i - 1].t) throw ValidationError(fmt::format("event stream not time-ordered at {}", i));
    }

    FramedEvents out;
    out.frames.resize(boundaries.size() - 1);
    for (size_t f = 0; f + 1 < boundaries.size(); ++f) {
        out.frames[f].t_begin = boundaries[f];
        out.frames[f].t_end = boundaries[f + 1];
    }
    size_t f = 0;
    for (const Event& e : stream) {
        if (e.t <= boundaries.front() || e.t > boundaries.back()) {
            ++out.dropped;
            continue;
        }
        while (e.t > boundaries[f + 1]) ++f;
        out.frames[f].events.push_back(e);
    }
    return out;
}

EventFrame denoise_events(const EventFrame& frame, int spatial_radius, double time_window) {
    if (spatial_radius < 0 || !(time_window >= 0.0)) throw ValidationError("denoise radius and window must be non-negative");
    const auto& ev = frame.events;
    std::vector<size_t> order(ev.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return ev[a].t < ev[b].t; });

    // In time order, the candidates for each event sit in a sliding window.
    std::vector<char> keep(ev.size(), 0);
    size_t lo = 0;
    size_t hi = 0;
    for (size_t r = 0; r < order.size(); ++r) {
        const Event& e = ev[order[r]];
        while (e.t - ev[order[lo]].t > time_window) ++lo;
        while (hi < order.size() && ev[order[hi]].t - e.t <= time_window) ++hi;
        for (size_t k = lo; k < hi; ++k) {
            if (k == r) continue;
            const Event& o = ev[order[k]];
            if (std::abs(o.x - e.x) <= spatial_radius && std::abs(o.y - e.y) <= spatial_radius) {
                keep[order[r]] = 1;
                break;
            }
        }
    }
    EventFrame out{frame.t_begin, frame.t_end, {}};
    for (size_t i = 0; i < ev.size(); ++i) {
        if (keep[i]) out.events.push_back(ev[i]);
    }
    return out;
}

std::vector<std::int32_t> accumulate_event_image(const EventFrame& frame, int width, int height) {
    if (width <= 0 || height <= 0) throw ValidationError("image size must be positive");
    std::vector<std::int32_t> img(static_cast<size_t>(width) * static_cast<size_t>(height), 0);
    for (const Event& e : frame.events) {
        if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
            throw ValidationError(fmt::format("event at ({}, {}) outside {}x{} image", e.x, e.y, width, height));
        }
        if (e.polarity != 1 && e.polarity != -1) throw ValidationError("event polarity must be +1 or -1");
        img[static_cast<size_t>(e.y) * static_cast<size_t>(width) + static_cast<size_t>(e.x)] += e.polarity;
    }
    return img;
}

}  // namespace motionkit
