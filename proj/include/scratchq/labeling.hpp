#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scratchq {

inline constexpr double kMaxPowerMw = 600.0;
inline constexpr double kTabletWidthMm = 240.0;
inline constexpr double kTabletHeightMm = 139.0;

/// Raw pressure-tablet samples for one scratching block. Missing entries (NaN)
/// mark timesteps without contact.
struct ContactTrace {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> force;
    double block_length_s = 10.0;
    double start_s = 0.0;

    std::size_t size() const noexcept { return t.size(); }
    void validate() const;
};

enum class CriticalKind { Peak, Valley };

struct CriticalPoint {
    std::size_t index;
    double y;
    double x;
    double t;
    CriticalKind kind;
};

using CriticalPoints = std::vector<CriticalPoint>;

enum class RejectReason {
    None,
    NoContact,
    TooFewCriticalPoints,
    ConsecutiveSameKind,
    PositionJump,
    PowerAboveMax,
};

std::string_view to_string(RejectReason r);
RejectReason parse_reject_reason(std::string_view s);

struct PowerLabel {
    double window_start = 0.0;
    double mean_force = 0.0;    // N
    double mean_velocity = 0.0; // mm/s
    double power = 0.0;         // mW
    bool valid = false;
    RejectReason reason = RejectReason::None;
};

struct PeakOptions {
    double min_prominence_mm = 2.0;
    double min_separation_s = 0.05;
};

struct LabelingOptions {
    int savgol_order = 5;
    std::size_t savgol_window = 31;
    PeakOptions peaks;
    double max_step_mm = 5.0;
    double max_power_mw = kMaxPowerMw;
    double window_s = 1.0;
    // Label windows share the wearable 0.25 s stride grid so each ring window
    // has a label computed over exactly its own second of tablet data.
    double stride_s = 0.25;
};

/// Mean of the observed (non-missing) forces. Throws NoContact if none.
double mean_force(std::span<const double> forces);

/// Savitzky-Golay smoothing weights for the centre point of a `window_points`
/// stencil, obtained from the least-squares normal equations.
std::vector<double> savgol_coefficients(int poly_order, std::size_t window_points);

/// Convolves interior points with the Savitzky-Golay weights. The first and last
/// (window - 1) / 2 points are returned unfiltered.
std::vector<double> savgol_smooth(std::span<const double> y, int poly_order = 5,
                                  std::size_t window_points = 31);

/// Peaks and valleys of `y` with at least the requested prominence, where peaks
/// (and separately valleys) closer than the minimum separation keep only the most
/// extreme one. `x` and `t` supply the coordinates reported at each index.
CriticalPoints find_critical_points(std::span<const double> y, std::span<const double> x,
                                    std::span<const double> t, const PeakOptions& options = {});

/// Mean of chord-length / elapsed-time over adjacent critical points.
/// Throws TooFewCriticalPoints when fewer than two points are given.
double mean_velocity(std::span<const CriticalPoint> points);

/// Mechanical power in mW from mean force (N) and mean velocity (mm/s).
double power_label(double mean_force_n, double mean_velocity_mm_s);

/// Per-window evidence needed by the outlier filter.
struct WindowDiagnostics {
    PowerLabel label;
    CriticalPoints points;
    double max_step_mm = 0.0; // largest |dx| or |dy| between consecutive samples
    bool has_contact = true;
};

/// Applies the rejection rules in order: no contact, fewer than two critical
/// points, repeated peak/valley kind, position jump, power above the maximum.
std::vector<PowerLabel> filter_outliers(std::span<const WindowDiagnostics> windows,
                                        const LabelingOptions& options = {});

/// Full tablet pipeline for one block: interpolate, smooth, find critical points,
/// then label each window and reject outliers. Never throws for per-window
/// failures; they surface as invalid labels.
std::vector<PowerLabel> label_block(const ContactTrace& trace, const LabelingOptions& options = {});

/// Same as label_block but keeps the per-window diagnostics.
std::vector<WindowDiagnostics> diagnose_block(const ContactTrace& trace,
                                              const LabelingOptions& options = {});

} // namespace scratchq
