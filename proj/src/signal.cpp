#include "scratchq/signal.hpp"

#include "scratchq/error.hpp"

#include <algorithm>
#include <cmath>

namespace scratchq {

bool is_missing(double v) noexcept { return std::isnan(v); }

std::string_view to_string(Channel c) {
    switch (c) {
    case Channel::ContactMic: return "contact_mic";
    case Channel::AccelZ: return "accel_z";
    case Channel::TabletForce: return "tablet_force";
    case Channel::TabletX: return "tablet_x";
    case Channel::TabletY: return "tablet_y";
    }
    return "unknown";
}

double nominal_rate_hz(Channel c) {
    switch (c) {
    case Channel::ContactMic: return kContactMicRateHz;
    case Channel::AccelZ: return kAccelRateHz;
    default: return kTabletRateHz;
    }
}

bool TimeSeries::has_missing() const {
    return std::any_of(values.begin(), values.end(), is_missing);
}

TimeSeries make_uniform_series(Channel channel, std::vector<double> values, double start_s) {
    TimeSeries s;
    s.channel = channel;
    s.sample_rate_hz = nominal_rate_hz(channel);
    s.timestamps.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        s.timestamps[i] = start_s + static_cast<double>(i) / s.sample_rate_hz;
    }
    s.values = std::move(values);
    return s;
}

TimeSeries deduplicate(const TimeSeries& series) {
    if (series.timestamps.size() != series.values.size()) {
        throw Error(ErrorKind::LengthMismatch, "timestamps and values differ in length");
    }
    TimeSeries out;
    out.channel = series.channel;
    out.sample_rate_hz = series.sample_rate_hz;
    out.timestamps.reserve(series.size());
    out.values.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double t = series.timestamps[i];
        if (!out.timestamps.empty()) {
            if (t == out.timestamps.back()) {
                continue;
            }
            if (t < out.timestamps.back()) {
                throw Error(ErrorKind::MalformedRow,
                            "timestamps decrease at sample " + std::to_string(i));
            }
        }
        out.timestamps.push_back(t);
        out.values.push_back(series.values[i]);
    }
    return out;
}

std::vector<double> fill_gaps(std::span<const double> timestamps, std::span<const double> values) {
    if (timestamps.size() != values.size()) {
        throw Error(ErrorKind::LengthMismatch, "timestamps and values differ in length");
    }
    std::vector<double> out(values.begin(), values.end());
    const std::size_t n = out.size();

    std::size_t first = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_missing(out[i])) {
            first = i;
            break;
        }
    }
    if (first == n) {
        throw Error(ErrorKind::AllMissing, "series has no observed value");
    }
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(first), out[first]);

    std::size_t prev = first;
    for (std::size_t i = first + 1; i < n; ++i) {
        if (is_missing(out[i])) {
            continue;
        }
        if (i > prev + 1) {
            const double t0 = timestamps[prev];
            const double dt = timestamps[i] - t0;
            const double v0 = out[prev];
            const double dv = out[i] - v0;
            for (std::size_t j = prev + 1; j < i; ++j) {
                const double frac = dt > 0.0 ? (timestamps[j] - t0) / dt
                                             : static_cast<double>(j - prev) / static_cast<double>(i - prev);
                out[j] = v0 + frac * dv;
            }
        }
        prev = i;
    }
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(prev) + 1, out.end(), out[prev]);
    return out;
}

TimeSeries linear_interpolate(const TimeSeries& series) {
    TimeSeries out = series;
    out.values = fill_gaps(series.timestamps, series.values);
    return out;
}

std::vector<double> resample_uniform(const TimeSeries& series, double start_s, double rate_hz,
                                     std::size_t count) {
    const auto& ts = series.timestamps;
    const auto& vs = series.values;
    if (ts.empty()) {
        throw Error(ErrorKind::AllMissing, "cannot resample an empty series");
    }
    std::vector<double> out(count);
    std::size_t j = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double tau = start_s + static_cast<double>(k) / rate_hz;
        if (tau <= ts.front()) {
            out[k] = vs.front();
            continue;
        }
        if (tau >= ts.back()) {
            out[k] = vs.back();
            continue;
        }
        while (j + 1 < ts.size() && ts[j + 1] <= tau) {
            ++j;
        }
        // ts[j] <= tau < ts[j + 1]
        const double t0 = ts[j];
        const double t1 = ts[j + 1];
        const double frac = (tau - t0) / (t1 - t0);
        // Snap grid points that coincide with samples up to rounding in the time base.
        if (frac < 1e-6) {
            out[k] = vs[j];
        } else if (frac > 1.0 - 1e-6) {
            out[k] = vs[j + 1];
        } else {
            out[k] = vs[j] + frac * (vs[j + 1] - vs[j]);
        }
    }
    return out;
}

SensorWindow::SensorWindow(std::vector<double> cm, std::vector<double> acc_z, double start_time_s,
                           std::string participant_id, std::string activity)
    : cm_(std::move(cm)),
      acc_z_(std::move(acc_z)),
      start_time_(start_time_s),
      participant_id_(std::move(participant_id)),
      activity_(std::move(activity)) {
    if (cm_.size() != kContactMicWindowPoints || acc_z_.size() != kAccelWindowPoints) {
        throw Error(ErrorKind::LengthMismatch,
                    "sensor window needs 8000 contact-mic and 400 accelerometer values, got " +
                        std::to_string(cm_.size()) + " and " + std::to_string(acc_z_.size()));
    }
    if (std::any_of(cm_.begin(), cm_.end(), is_missing) ||
        std::any_of(acc_z_.begin(), acc_z_.end(), is_missing)) {
        throw Error(ErrorKind::AllMissing, "sensor window contains missing values");
    }
}

std::size_t window_count(double span_s, double window_s, double stride_s) {
    if (span_s + 1e-9 < window_s) {
        return 0;
    }
    return static_cast<std::size_t>(std::floor((span_s - window_s) / stride_s + 1e-9)) + 1;
}

double covered_span(const TimeSeries& series) {
    if (series.timestamps.empty()) {
        return 0.0;
    }
    return series.timestamps.back() - series.timestamps.front() + 1.0 / series.sample_rate_hz;
}

std::vector<SensorWindow> window_stream(const TimeSeries& cm, const TimeSeries& acc_z,
                                        const WindowingOptions& options) {
    if (std::abs(options.window_s - 1.0) > 1e-12) {
        throw Error(ErrorKind::InvalidConfig, "sensor windows are fixed at 1 s");
    }
    if (!(options.stride_s > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "stride must be positive");
    }
    if (cm.timestamps.empty() || acc_z.timestamps.empty()) {
        throw Error(ErrorKind::DurationTooShort, "empty sensor stream");
    }
    const TimeSeries cm_filled = linear_interpolate(deduplicate(cm));
    const TimeSeries acc_filled = linear_interpolate(deduplicate(acc_z));

    double begin = std::max(cm_filled.timestamps.front(), acc_filled.timestamps.front());
    double end = std::min(cm_filled.timestamps.front() + covered_span(cm_filled),
                          acc_filled.timestamps.front() + covered_span(acc_filled));
    if (!is_missing(options.begin_s)) {
        begin = std::max(begin, options.begin_s);
    }
    if (!is_missing(options.end_s)) {
        end = std::min(end, options.end_s);
    }
    const double span = end - begin;
    const std::size_t count = window_count(span, options.window_s, options.stride_s);
    if (count == 0) {
        throw Error(ErrorKind::DurationTooShort,
                    "span of " + std::to_string(span) + " s is shorter than one window");
    }

    std::vector<SensorWindow> windows;
    windows.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const double start = begin + static_cast<double>(w) * options.stride_s;
        windows.emplace_back(resample_uniform(cm_filled, start, kContactMicRateHz, kContactMicWindowPoints),
                             resample_uniform(acc_filled, start, kAccelRateHz, kAccelWindowPoints), start,
                             options.participant_id, options.activity);
    }
    return windows;
}

} // namespace scratchq
