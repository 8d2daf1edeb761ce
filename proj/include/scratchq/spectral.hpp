#pragma once

#include "scratchq/signal.hpp"

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace scratchq {

using Complex = std::complex<double>;

/// d_k = sum_n exp(-2 pi i k n / N) g_n, unnormalised. Any N >= 1: powers of two
/// use an iterative radix-2 transform, other lengths go through Bluestein's
/// chirp-z reformulation.
std::vector<Complex> dft(std::span<const double> signal);
std::vector<Complex> dft(std::span<const Complex> signal);

/// Inverse of dft, including the 1/N factor.
std::vector<Complex> inverse_dft(std::span<const Complex> spectrum);

/// (2 / N) |d_k| for k in [0, bins). The 2/N factor applies to every bin,
/// including DC. `expected_length` guards against mis-sized windows.
std::vector<double> single_sided_amplitude(std::span<const double> signal, std::size_t expected_length,
                                           std::size_t bins);

enum class Task { Intensity, Detection };

std::string_view to_string(Task task);
Task parse_task(std::string_view s);

struct FeatureLayout {
    std::size_t cm_bins;
    std::size_t accel_bins;
    std::size_t size() const noexcept { return cm_bins + accel_bins; }
};

/// Intensity: 400 contact-mic + 175 accelerometer bins. Detection: 275 + 200.
FeatureLayout feature_layout(Task task);

enum class Ablation { Both, ContactMicOnly, AccelOnly };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

/// Column indices of the feature vector kept by an ablation.
std::vector<std::size_t> ablation_columns(Task task, Ablation ablation);

/// Contact-mic amplitudes first, then accelerometer amplitudes.
std::vector<double> extract_features(const SensorWindow& window, Task task);

/// Per-dimension min-max scaler. Constant dimensions map to 0; values outside the
/// fitted range are not clamped.
class MinMaxScaler {
public:
    MinMaxScaler() = default;
    MinMaxScaler(std::vector<double> mins, std::vector<double> maxs);

    static MinMaxScaler fit(std::span<const std::vector<double>> rows);

    std::vector<double> transform(std::span<const double> row) const;
    void transform_in_place(std::span<double> row) const;

    std::size_t dims() const noexcept { return mins_.size(); }
    const std::vector<double>& mins() const noexcept { return mins_; }
    const std::vector<double>& maxs() const noexcept { return maxs_; }

private:
    std::vector<double> mins_;
    std::vector<double> maxs_;
};

} // namespace scratchq
