#include "scratchq/spectral.hpp"

#include "scratchq/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace scratchq {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform, forward sign.
void fft_radix2(std::vector<Complex>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    // Twiddles evaluated directly rather than by recurrence to keep rounding flat.
    std::vector<Complex> twiddle(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle[k] = {std::cos(angle), std::sin(angle)};
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = a[i + k];
                const Complex v = a[i + k + half] * twiddle[k * step];
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

void inverse_radix2(std::vector<Complex>& a) {
    for (auto& v : a) {
        v = std::conj(v);
    }
    fft_radix2(a);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& v : a) {
        v = std::conj(v) * inv;
    }
}

std::vector<Complex> bluestein(std::span<const Complex> g) {
    const std::size_t n = g.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) {
        m <<= 1;
    }
    // chirp[k] = exp(-i pi k^2 / n); k^2 reduced mod 2n so the angle stays small.
    std::vector<Complex> chirp(n);
    const std::uint64_t period = 2 * static_cast<std::uint64_t>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % period;
        const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(angle), std::sin(angle)};
    }
    std::vector<Complex> a(m, Complex{});
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = g[k] * chirp[k];
    }
    std::vector<Complex> b(m, Complex{});
    b[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        b[k] = b[m - k] = std::conj(chirp[k]);
    }
    fft_radix2(a);
    fft_radix2(b);
    for (std::size_t k = 0; k < m; ++k) {
        a[k] *= b[k];
    }
    inverse_radix2(a);
    std::vector<Complex> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = a[k] * chirp[k];
    }
    return out;
}

} // namespace

std::vector<Complex> dft(std::span<const Complex> signal) {
    if (signal.empty()) {
        throw Error(ErrorKind::EmptyInput, "DFT of an empty signal");
    }
    if (is_power_of_two(signal.size())) {
        std::vector<Complex> a(signal.begin(), signal.end());
        fft_radix2(a);
        return a;
    }
    return bluestein(signal);
}

std::vector<Complex> dft(std::span<const double> signal) {
    std::vector<Complex> c(signal.begin(), signal.end());
    return dft(std::span<const Complex>(c));
}

std::vector<Complex> inverse_dft(std::span<const Complex> spectrum) {
    std::vector<Complex> conj(spectrum.size());
    std::transform(spectrum.begin(), spectrum.end(), conj.begin(), [](Complex v) { return std::conj(v); });
    auto out = dft(std::span<const Complex>(conj));
    const double inv = 1.0 / static_cast<double>(spectrum.size());
    for (auto& v : out) {
        v = std::conj(v) * inv;
    }
    return out;
}

std::vector<double> single_sided_amplitude(std::span<const double> signal, std::size_t expected_length,
                                           std::size_t bins) {
    if (signal.size() != expected_length) {
        throw Error(ErrorKind::LengthMismatch, "expected " + std::to_string(expected_length) +
                                                   " samples, got " + std::to_string(signal.size()));
    }
    if (bins > signal.size()) {
        throw Error(ErrorKind::LengthMismatch, "more bins requested than samples");
    }
    const auto spectrum = dft(signal);
    const double scale = 2.0 / static_cast<double>(signal.size());
    std::vector<double> amp(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        amp[k] = scale * std::abs(spectrum[k]);
    }
    return amp;
}

std::string_view to_string(Task task) {
    return task == Task::Intensity ? "intensity" : "detection";
}

Task parse_task(std::string_view s) {
    if (s == "intensity") {
        return Task::Intensity;
    }
    if (s == "detection") {
        return Task::Detection;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown task '" + std::string(s) + "'");
}

FeatureLayout feature_layout(Task task) {
    return task == Task::Intensity ? FeatureLayout{400, 175} : FeatureLayout{275, 200};
}

std::string_view to_string(Ablation a) {
    switch (a) {
    case Ablation::Both: return "both";
    case Ablation::ContactMicOnly: return "cm-only";
    case Ablation::AccelOnly: return "accel-only";
    }
    return "both";
}

Ablation parse_ablation(std::string_view s) {
    if (s == "both") {
        return Ablation::Both;
    }
    if (s == "cm-only") {
        return Ablation::ContactMicOnly;
    }
    if (s == "accel-only") {
        return Ablation::AccelOnly;
    }
    throw Error(ErrorKind::InvalidConfig, "unknown ablation '" + std::string(s) + "'");
}

std::vector<std::size_t> ablation_columns(Task task, Ablation ablation) {
    const auto layout = feature_layout(task);
    std::size_t begin = 0;
    std::size_t end = layout.size();
    if (ablation == Ablation::ContactMicOnly) {
        end = layout.cm_bins;
    } else if (ablation == Ablation::AccelOnly) {
        begin = layout.cm_bins;
    }
    std::vector<std::size_t> cols;
    for (std::size_t i = begin; i < end; ++i) {
        cols.push_back(i);
    }
    return cols;
}

std::vector<double> extract_features(const SensorWindow& window, Task task) {
    const auto layout = feature_layout(task);
    auto features = single_sided_amplitude(window.cm(), kContactMicWindowPoints, layout.cm_bins);
    const auto accel = single_sided_amplitude(window.acc_z(), kAccelWindowPoints, layout.accel_bins);
    features.insert(features.end(), accel.begin(), accel.end());
    return features;
}

MinMaxScaler::MinMaxScaler(std::vector<double> mins, std::vector<double> maxs)
    : mins_(std::move(mins)), maxs_(std::move(maxs)) {
    if (mins_.size() != maxs_.size()) {
        throw Error(ErrorKind::ShapeMismatch, "scaler min/max lengths differ");
    }
    for (std::size_t i = 0; i < mins_.size(); ++i) {
        if (!(maxs_[i] >= mins_[i])) {
            throw Error(ErrorKind::SchemaMismatch, "scaler max below min at dimension " + std::to_string(i));
        }
    }
}

MinMaxScaler MinMaxScaler::fit(std::span<const std::vector<double>> rows) {
    if (rows.empty()) {
        throw Error(ErrorKind::EmptyTrainingSet, "cannot fit a scaler on zero rows");
    }
    std::vector<double> mins = rows.front();
    std::vector<double> maxs = rows.front();
    for (const auto& row : rows) {
        if (row.size() != mins.size()) {
            throw Error(ErrorKind::ShapeMismatch, "ragged feature rows");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            mins[i] = std::min(mins[i], row[i]);
            maxs[i] = std::max(maxs[i], row[i]);
        }
    }
    return MinMaxScaler(std::move(mins), std::move(maxs));
}

void MinMaxScaler::transform_in_place(std::span<double> row) const {
    if (row.size() != mins_.size()) {
        throw Error(ErrorKind::ShapeMismatch, "feature length " + std::to_string(row.size()) +
                                                  " does not match scaler dimension " + std::to_string(mins_.size()));
    }
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double range = maxs_[i] - mins_[i];
        row[i] = range > 0.0 ? (row[i] - mins_[i]) / range : 0.0;
    }
}

std::vector<double> MinMaxScaler::transform(std::span<const double> row) const {
    std::vector<double> out(row.begin(), row.end());
    transform_in_place(out);
    return out;
}

} // namespace scratchq
