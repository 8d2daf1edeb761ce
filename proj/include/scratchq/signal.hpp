#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scratchq {

inline constexpr double kContactMicRateHz = 8000.0;
inline constexpr double kAccelRateHz = 400.0;
inline constexpr double kTabletRateHz = 150.0;

inline constexpr std::size_t kContactMicWindowPoints = 8000;
inline constexpr std::size_t kAccelWindowPoints = 400;

/// Marker for an absent sample (no tablet contact, dropped sensor packet).
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

bool is_missing(double v) noexcept;

enum class Channel { ContactMic, AccelZ, TabletForce, TabletX, TabletY };

std::string_view to_string(Channel c);
double nominal_rate_hz(Channel c);

struct TimeSeries {
    std::vector<double> timestamps;
    std::vector<double> values;
    Channel channel = Channel::ContactMic;
    double sample_rate_hz = kContactMicRateHz;

    std::size_t size() const noexcept { return values.size(); }
    bool has_missing() const;
};

/// Builds a series on the nominal uniform grid start + i / rate.
TimeSeries make_uniform_series(Channel channel, std::vector<double> values, double start_s = 0.0);

/// Drops samples whose timestamp repeats the previous one (first occurrence wins)
/// and rejects out-of-order timestamps.
TimeSeries deduplicate(const TimeSeries& series);

/// Fills missing values by linear interpolation in time between the nearest
/// observed neighbours. Leading and trailing gaps take the nearest observed value.
/// Observed values pass through untouched.
TimeSeries linear_interpolate(const TimeSeries& series);

/// Same as linear_interpolate on raw arrays; `timestamps` and `values` must match in size.
std::vector<double> fill_gaps(std::span<const double> timestamps, std::span<const double> values);

/// Samples a gap-free series at start + k / rate for k in [0, count) by linear
/// interpolation. Points outside the observed range take the nearest end value.
std::vector<double> resample_uniform(const TimeSeries& series, double start_s, double rate_hz,
                                     std::size_t count);

/// One second of ring data: 8000 contact-mic points and 400 accelerometer-z points.
class SensorWindow {
public:
    SensorWindow(std::vector<double> cm, std::vector<double> acc_z, double start_time_s,
                 std::string participant_id = {}, std::string activity = {});

    std::span<const double> cm() const noexcept { return cm_; }
    std::span<const double> acc_z() const noexcept { return acc_z_; }
    double start_time() const noexcept { return start_time_; }
    double duration() const noexcept { return 1.0; }
    const std::string& participant_id() const noexcept { return participant_id_; }
    const std::string& activity() const noexcept { return activity_; }

private:
    std::vector<double> cm_;
    std::vector<double> acc_z_;
    double start_time_;
    std::string participant_id_;
    std::string activity_;
};

struct WindowingOptions {
    double window_s = 1.0;
    double stride_s = 0.25;
    // Optional sub-range [begin_s, end_s) of the streams; NaN means the full span.
    double begin_s = kMissing;
    double end_s = kMissing;
    std::string participant_id;
    std::string activity;
};

/// Number of windows of length `window_s` at `stride_s` that fit in `span_s`.
std::size_t window_count(double span_s, double window_s, double stride_s);

/// Covered span of a series: last - first + one nominal sample period.
double covered_span(const TimeSeries& series);

/// Cuts a contact-mic / accelerometer pair into fixed 1-s windows. Missing values
/// are interpolated first; each window is resampled onto exactly 8000 / 400
/// uniform points. The last partial window is dropped.
std::vector<SensorWindow> window_stream(const TimeSeries& cm, const TimeSeries& acc_z,
                                        const WindowingOptions& options = {});

} // namespace scratchq
