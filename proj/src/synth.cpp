#include "scratchq/synth.hpp"

#include "scratchq/error.hpp"
#include "scratchq/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace scratchq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double stroke_shape(StrokeWaveform w, double theta) {
    if (w == StrokeWaveform::Sine) {
        return std::sin(theta);
    }
    return 2.0 / std::numbers::pi * std::asin(std::clamp(std::sin(theta), -1.0, 1.0));
}

double clean_force(const SyntheticScratchSpec& spec, double t) {
    return spec.force_mean_n + spec.force_amplitude_n * std::sin(kTwoPi * (t - spec.start_s) / spec.force_period_s);
}

// Distance in phase from theta to the nearest direction reversal (pi/2 + k pi).
double phase_to_reversal(double theta) {
    const double r = std::fmod(theta - std::numbers::pi / 2.0, std::numbers::pi);
    const double wrapped = r < 0.0 ? r + std::numbers::pi : r;
    return std::min(wrapped, std::numbers::pi - wrapped);
}

} // namespace

void SyntheticScratchSpec::validate() const {
    if (!(stroke_amplitude_mm > 0.0 && stroke_period_s > 0.0 && duration_s > 0.0)) {
        throw Error(ErrorKind::InvalidConfig, "amplitude, period and duration must be positive");
    }
    if (!(contact_gap_fraction >= 0.0 && contact_gap_fraction < 0.5)) {
        throw Error(ErrorKind::InvalidConfig, "contact gap fraction must lie in [0, 0.5)");
    }
    if (!(force_period_s > 0.0) || position_noise_sd_mm < 0.0 || force_noise_sd_n < 0.0) {
        throw Error(ErrorKind::InvalidConfig, "force period must be positive and noise non-negative");
    }
}

SyntheticTrace gen_contact_trace(const SyntheticScratchSpec& spec, const LabelingOptions& windows) {
    spec.validate();
    SyntheticTrace out;
    ContactTrace& tr = out.trace;
    tr.block_length_s = spec.duration_s;
    tr.start_s = spec.start_s;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> pos_noise(0.0, 1.0);
    std::normal_distribution<double> force_noise(0.0, 1.0);

    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * kTabletRateHz));
    const double half_gap = spec.style == ScratchStyle::LiftOff ? spec.contact_gap_fraction * std::numbers::pi / 2.0
                                                                : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = spec.start_s + static_cast<double>(i) / kTabletRateHz;
        const double theta = kTwoPi * (t - spec.start_s) / spec.stroke_period_s + spec.stroke_phase;
        // Draw noise unconditionally so both styles share the same kinematics.
        const double nx = pos_noise(rng) * spec.position_noise_sd_mm;
        const double ny = pos_noise(rng) * spec.position_noise_sd_mm;
        const double nf = force_noise(rng) * spec.force_noise_sd_n;
        tr.t.push_back(t);
        if (half_gap > 0.0 && phase_to_reversal(theta) < half_gap) {
            tr.x.push_back(kMissing);
            tr.y.push_back(kMissing);
            tr.force.push_back(kMissing);
            continue;
        }
        tr.x.push_back(spec.x_center_mm + nx);
        tr.y.push_back(spec.y_center_mm + 0.5 * spec.stroke_amplitude_mm * stroke_shape(spec.waveform, theta) + ny);
        tr.force.push_back(std::max(0.0, clean_force(spec, t) + nf));
    }

    const double velocity = spec.stroke_amplitude_mm / (0.5 * spec.stroke_period_s);
    const std::size_t count = window_count(spec.duration_s, windows.window_s, windows.stride_s);
    for (std::size_t w = 0; w < count; ++w) {
        const double begin = spec.start_s + static_cast<double>(w) * windows.stride_s;
        double sum = 0.0;
        std::size_t samples = 0;
        for (double t : tr.t) {
            if (t >= begin && t < begin + windows.window_s) {
                sum += clean_force(spec, t);
                ++samples;
            }
        }
        out.window_starts.push_back(begin);
        out.true_power.push_back(samples > 0 ? sum / static_cast<double>(samples) * velocity : 0.0);
    }
    return out;
}

std::vector<double> brute_force_power(const ContactTrace& trace, const LabelingOptions& windows) {
    trace.validate();
    const std::size_t count = window_count(trace.block_length_s, windows.window_s, windows.stride_s);
    std::vector<double> out(count, kMissing);
    if (trace.size() == 0) {
        return out;
    }
    std::vector<double> xi;
    std::vector<double> yi;
    try {
        xi = fill_gaps(trace.t, trace.x);
        yi = fill_gaps(trace.t, trace.y);
    } catch (const Error&) {
        return out;
    }
    for (std::size_t w = 0; w < count; ++w) {
        const double begin = trace.start_s + static_cast<double>(w) * windows.stride_s;
        const double end = begin + windows.window_s;
        double force_sum = 0.0;
        std::size_t force_n = 0;
        double path = 0.0;
        std::size_t first = trace.size();
        std::size_t last = 0;
        for (std::size_t i = 0; i < trace.size(); ++i) {
            if (trace.t[i] < begin || trace.t[i] >= end) {
                continue;
            }
            if (!is_missing(trace.force[i])) {
                force_sum += trace.force[i];
                ++force_n;
            }
            if (first == trace.size()) {
                first = i;
            } else {
                const double dx = xi[i] - xi[i - 1];
                const double dy = yi[i] - yi[i - 1];
                path += std::sqrt(dx * dx + dy * dy);
            }
            last = i;
        }
        if (force_n == 0 || first == trace.size() || last == first) {
            continue;
        }
        const double elapsed = trace.t[last] - trace.t[first];
        out[w] = force_sum / static_cast<double>(force_n) * path / elapsed;
    }
    return out;
}

namespace {

std::vector<double> synthesize(const std::vector<Tone>& tones, double rate_hz, std::size_t count, double noise_sd,
                               std::mt19937_64& rng, double start_s) {
    for (const auto& tone : tones) {
        if (!(tone.frequency_hz >= 0.0 && tone.frequency_hz < rate_hz / 2.0)) {
            throw Error(ErrorKind::AliasedTone, "tone at " + std::to_string(tone.frequency_hz) +
                                                    " Hz is not below Nyquist for " + std::to_string(rate_hz) + " Hz");
        }
    }
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> out(count);
    for (std::size_t n = 0; n < count; ++n) {
        const double t = start_s + static_cast<double>(n) / rate_hz;
        double v = 0.0;
        for (const auto& tone : tones) {
            v += tone.amplitude * std::sin(kTwoPi * tone.frequency_hz * t + tone.phase);
        }
        if (noise_sd > 0.0) {
            v += noise_sd * noise(rng);
        }
        out[n] = v;
    }
    return out;
}

} // namespace

SensorWindow gen_sensor_window(const std::vector<Tone>& cm_tones, const std::vector<Tone>& accel_tones,
                               double noise_sd, std::uint64_t seed, std::string participant_id, std::string activity,
                               double start_s) {
    std::mt19937_64 rng(seed);
    auto cm = synthesize(cm_tones, kContactMicRateHz, kContactMicWindowPoints, noise_sd, rng, 0.0);
    auto acc = synthesize(accel_tones, kAccelRateHz, kAccelWindowPoints, noise_sd, rng, 0.0);
    return SensorWindow(std::move(cm), std::move(acc), start_s, std::move(participant_id), std::move(activity));
}

TimeSeries gen_tone_stream(Channel channel, const std::vector<Tone>& tones, double duration_s, double noise_sd,
                           std::uint64_t seed, double start_s) {
    std::mt19937_64 rng(seed);
    const double rate = nominal_rate_hz(channel);
    const auto count = static_cast<std::size_t>(std::llround(duration_s * rate));
    // Tones are phase-referenced to t = 0 so consecutive segments join seamlessly.
    return make_uniform_series(channel, synthesize(tones, rate, count, noise_sd, rng, start_s), start_s);
}

FeatureTable toy_detection_table(std::size_t participants, std::size_t windows_per_class, std::uint64_t seed) {
    FeatureTable table;
    table.task = Task::Detection;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.5, 1.5);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (std::size_t p = 0; p < participants; ++p) {
        const std::string id = "S" + std::to_string(p + 1);
        for (std::size_t w = 0; w < windows_per_class; ++w) {
            for (int cls = 0; cls < 2; ++cls) {
                const double a = amp(rng);
                const std::vector<Tone> cm{{cls == 1 ? 120.0 : 60.0, a, phase(rng)}};
                const std::vector<Tone> acc{{cls == 1 ? 30.0 : 10.0, 0.2 * a, phase(rng)}};
                const std::uint64_t window_seed = splitmix(seed ^ splitmix(p * 1000003ULL + w * 2 + cls));
                const auto win = gen_sensor_window(cm, acc, 0.05, window_seed, id, cls == 1 ? "scratch" : "idle",
                                                   0.25 * static_cast<double>(w));
                table.append(id, win.activity(), win.start_time(), cls, extract_features(win, Task::Detection));
            }
        }
    }
    return table;
}

FeatureTable toy_intensity_table(std::size_t participants, std::size_t windows, std::uint64_t seed,
                                 double slope_mw_per_unit) {
    FeatureTable table;
    table.task = Task::Intensity;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.5, 5.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (std::size_t p = 0; p < participants; ++p) {
        const std::string id = "S" + std::to_string(p + 1);
        for (std::size_t w = 0; w < windows; ++w) {
            const double a = amp(rng);
            const std::vector<Tone> cm{{100.0, a, phase(rng)}};
            const std::vector<Tone> acc{{20.0, 0.1 * a, phase(rng)}};
            const std::uint64_t window_seed = splitmix(seed ^ splitmix(p * 1000003ULL + w));
            const auto win = gen_sensor_window(cm, acc, 0.05, window_seed, id, "toy", 0.25 * static_cast<double>(w));
            table.append(id, win.activity(), win.start_time(), slope_mw_per_unit * a,
                         extract_features(win, Task::Intensity));
        }
    }
    return table;
}

} // namespace scratchq
