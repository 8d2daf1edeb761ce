#pragma once

#include "scratchq/feature_table.hpp"
#include "scratchq/labeling.hpp"
#include "scratchq/signal.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scratchq {

enum class ScratchStyle { ContinuousContact, LiftOff };
enum class StrokeWaveform { Sine, Triangle };

/// Parameters of a synthetic tablet scratching block with analytically known power.
struct SyntheticScratchSpec {
    ScratchStyle style = ScratchStyle::ContinuousContact;
    StrokeWaveform waveform = StrokeWaveform::Sine;
    double stroke_amplitude_mm = 40.0; // peak-to-peak stroke length along y
    double stroke_period_s = 0.5;      // one up-and-down cycle
    double stroke_phase = 0.0;         // radians
    double force_mean_n = 1.0;
    double force_amplitude_n = 0.0; // sinusoidal modulation around the mean
    double force_period_s = 1.0;
    double duration_s = 10.0;
    double position_noise_sd_mm = 0.0;
    double force_noise_sd_n = 0.0;
    double contact_gap_fraction = 0.0; // LiftOff: share of each cycle without contact
    double x_center_mm = 120.0;
    double y_center_mm = 70.0;
    double start_s = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticTrace {
    ContactTrace trace;
    std::vector<double> window_starts;
    std::vector<double> true_power; // mW per label window
};

/// 150 Hz trace plus ground truth: mean noise-free force in each window times the
/// chord velocity of one half stroke (stroke length / half period). Lift-off
/// blanks every column around each direction reversal.
SyntheticTrace gen_contact_trace(const SyntheticScratchSpec& spec, const LabelingOptions& windows = {});

/// Independent per-window power: observed mean force times dense path speed
/// sum(sqrt(dx^2 + dy^2)) / sum(dt) over gap-filled positions. No smoothing and
/// no peak detection. Windows without force samples are NaN.
std::vector<double> brute_force_power(const ContactTrace& trace, const LabelingOptions& windows = {});

struct Tone {
    double frequency_hz = 0.0;
    double amplitude = 0.0;
    double phase = 0.0;
};

/// One window of tone sums plus seeded Gaussian noise on each channel.
/// Throws AliasedTone for a frequency outside [0, rate / 2).
SensorWindow gen_sensor_window(const std::vector<Tone>& cm_tones, const std::vector<Tone>& accel_tones,
                               double noise_sd, std::uint64_t seed, std::string participant_id = {},
                               std::string activity = {}, double start_s = 0.0);

/// Continuous streams of tone sums (for session fixtures longer than one window).
TimeSeries gen_tone_stream(Channel channel, const std::vector<Tone>& tones, double duration_s, double noise_sd,
                           std::uint64_t seed, double start_s = 0.0);

/// Two classes with disjoint spectral signatures: "scratch" windows carry a
/// 120 Hz contact-mic tone and a 30 Hz accelerometer tone, "idle" windows carry
/// 60 Hz / 10 Hz tones. Detection-layout features.
FeatureTable toy_detection_table(std::size_t participants, std::size_t windows_per_class, std::uint64_t seed);

/// Power label = slope_mw_per_unit * amplitude of a 100 Hz contact-mic tone;
/// a 20 Hz accelerometer tone tracks the same amplitude. Intensity-layout features.
FeatureTable toy_intensity_table(std::size_t participants, std::size_t windows, std::uint64_t seed,
                                 double slope_mw_per_unit = 60.0);

} // namespace scratchq
