#include "scratchq/labeling.hpp"

#include "scratchq/error.hpp"
#include "scratchq/signal.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scratchq {

void ContactTrace::validate() const {
    const std::size_t n = t.size();
    if (x.size() != n || y.size() != n || force.size() != n) {
        throw Error(ErrorKind::LengthMismatch, "contact trace columns differ in length");
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(t[i] > t[i - 1])) {
            throw Error(ErrorKind::MalformedRow, "tablet timestamps not increasing at sample " +
                                                     std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const bool off_x = !is_missing(x[i]) && (x[i] < 0.0 || x[i] > kTabletWidthMm);
        const bool off_y = !is_missing(y[i]) && (y[i] < 0.0 || y[i] > kTabletHeightMm);
        if (off_x || off_y || (!is_missing(force[i]) && force[i] < 0.0)) {
            throw Error(ErrorKind::MalformedRow, "tablet sample " + std::to_string(i) + " outside the active area");
        }
    }
}

std::string_view to_string(RejectReason r) {
    switch (r) {
    case RejectReason::None: return "";
    case RejectReason::NoContact: return "NoContact";
    case RejectReason::TooFewCriticalPoints: return "TooFewCriticalPoints";
    case RejectReason::ConsecutiveSameKind: return "ConsecutiveSameKind";
    case RejectReason::PositionJump: return "PositionJump";
    case RejectReason::PowerAboveMax: return "PowerAboveMax";
    }
    return "";
}

RejectReason parse_reject_reason(std::string_view s) {
    for (auto r : {RejectReason::None, RejectReason::NoContact, RejectReason::TooFewCriticalPoints,
                   RejectReason::ConsecutiveSameKind, RejectReason::PositionJump,
                   RejectReason::PowerAboveMax}) {
        if (to_string(r) == s) {
            return r;
        }
    }
    throw Error(ErrorKind::MalformedRow, "unknown rejection reason '" + std::string(s) + "'");
}

double mean_force(std::span<const double> forces) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double f : forces) {
        if (!is_missing(f)) {
            sum += f;
            ++n;
        }
    }
    if (n == 0) {
        throw Error(ErrorKind::NoContact, "no force sample in window");
    }
    return sum / static_cast<double>(n);
}

std::vector<double> savgol_coefficients(int poly_order, std::size_t window_points) {
    if (poly_order < 0 || window_points % 2 == 0 ||
        window_points <= static_cast<std::size_t>(poly_order)) {
        throw Error(ErrorKind::Degenerate, "Savitzky-Golay needs an odd window longer than the order");
    }
    const int half = static_cast<int>(window_points / 2);
    const int cols = poly_order + 1;
    // Stencil scaled to [-1, 1]; the centre value is scale invariant and the
    // normal matrix stays well conditioned.
    const double scale = half > 0 ? 1.0 / half : 1.0;
    Eigen::MatrixXd vander(static_cast<Eigen::Index>(window_points), cols);
    for (int i = -half; i <= half; ++i) {
        double p = 1.0;
        for (int c = 0; c < cols; ++c) {
            vander(i + half, c) = p;
            p *= i * scale;
        }
    }
    const Eigen::MatrixXd normal = vander.transpose() * vander;
    Eigen::VectorXd e0 = Eigen::VectorXd::Zero(cols);
    e0(0) = 1.0;
    const Eigen::VectorXd z = normal.ldlt().solve(e0);
    const Eigen::VectorXd weights = vander * z;
    return {weights.data(), weights.data() + weights.size()};
}

std::vector<double> savgol_smooth(std::span<const double> y, int poly_order, std::size_t window_points) {
    const auto weights = savgol_coefficients(poly_order, window_points);
    if (y.size() < window_points) {
        throw Error(ErrorKind::TooShort, "series of " + std::to_string(y.size()) +
                                             " points is shorter than the filter window");
    }
    const std::size_t half = window_points / 2;
    std::vector<double> out(y.begin(), y.end());
    for (std::size_t j = half; j + half < y.size(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < window_points; ++i) {
            acc += weights[i] * y[j - half + i];
        }
        out[j] = acc;
    }
    return out;
}

namespace {

// Local maxima; a flat top counts once, at the middle of the plateau.
std::vector<std::size_t> local_maxima(std::span<const double> y) {
    std::vector<std::size_t> peaks;
    const std::size_t n = y.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        if (y[i - 1] < y[i]) {
            std::size_t ahead = i + 1;
            while (ahead + 1 < n && y[ahead] == y[i]) {
                ++ahead;
            }
            if (y[ahead] < y[i]) {
                peaks.push_back((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        ++i;
    }
    return peaks;
}

double prominence(std::span<const double> y, std::size_t peak) {
    const double h = y[peak];
    double left_min = h;
    for (std::size_t k = peak; k-- > 0;) {
        if (y[k] > h) {
            break;
        }
        left_min = std::min(left_min, y[k]);
    }
    double right_min = h;
    for (std::size_t k = peak + 1; k < y.size(); ++k) {
        if (y[k] > h) {
            break;
        }
        right_min = std::min(right_min, y[k]);
    }
    return h - std::max(left_min, right_min);
}

std::vector<std::size_t> select_peaks(std::span<const double> y, std::span<const double> t,
                                      const PeakOptions& options) {
    std::vector<std::size_t> candidates;
    for (std::size_t p : local_maxima(y)) {
        if (prominence(y, p) >= options.min_prominence_mm) {
            candidates.push_back(p);
        }
    }
    if (options.min_separation_s <= 0.0 || candidates.size() < 2) {
        return candidates;
    }
    // Highest peaks claim their neighbourhood first; ties resolve to the earlier index.
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return y[candidates[a]] > y[candidates[b]]; });
    std::vector<bool> keep(candidates.size(), true);
    for (std::size_t idx : order) {
        if (!keep[idx]) {
            continue;
        }
        const double tc = t[candidates[idx]];
        for (std::size_t k = idx; k-- > 0 && tc - t[candidates[k]] < options.min_separation_s;) {
            keep[k] = false;
        }
        for (std::size_t k = idx + 1;
             k < candidates.size() && t[candidates[k]] - tc < options.min_separation_s; ++k) {
            keep[k] = false;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        if (keep[k]) {
            out.push_back(candidates[k]);
        }
    }
    return out;
}

} // namespace

CriticalPoints find_critical_points(std::span<const double> y, std::span<const double> x,
                                    std::span<const double> t, const PeakOptions& options) {
    if (x.size() != y.size() || t.size() != y.size()) {
        throw Error(ErrorKind::LengthMismatch, "critical point inputs differ in length");
    }
    CriticalPoints points;
    for (std::size_t i : select_peaks(y, t, options)) {
        points.push_back({i, y[i], x[i], t[i], CriticalKind::Peak});
    }
    std::vector<double> negated(y.size());
    std::transform(y.begin(), y.end(), negated.begin(), [](double v) { return -v; });
    for (std::size_t i : select_peaks(negated, t, options)) {
        points.push_back({i, y[i], x[i], t[i], CriticalKind::Valley});
    }
    std::sort(points.begin(), points.end(),
              [](const CriticalPoint& a, const CriticalPoint& b) { return a.index < b.index; });
    return points;
}

double mean_velocity(std::span<const CriticalPoint> points) {
    if (points.size() < 2) {
        throw Error(ErrorKind::TooFewCriticalPoints,
                    std::to_string(points.size()) + " critical point(s) in window");
    }
    double sum = 0.0;
    for (std::size_t a = 1; a < points.size(); ++a) {
        const double dy = points[a].y - points[a - 1].y;
        const double dx = points[a].x - points[a - 1].x;
        const double dt = points[a].t - points[a - 1].t;
        sum += std::sqrt(dy * dy + dx * dx) / dt;
    }
    return sum / static_cast<double>(points.size() - 1);
}

double power_label(double mean_force_n, double mean_velocity_mm_s) {
    // 1 N * 1 mm/s = 1 mW
    return mean_force_n * mean_velocity_mm_s;
}

std::vector<PowerLabel> filter_outliers(std::span<const WindowDiagnostics> windows,
                                        const LabelingOptions& options) {
    std::vector<PowerLabel> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        PowerLabel label = w.label;
        label.valid = false;
        if (!w.has_contact) {
            label.reason = RejectReason::NoContact;
        } else if (w.points.size() < 2) {
            label.reason = RejectReason::TooFewCriticalPoints;
        } else if (std::adjacent_find(w.points.begin(), w.points.end(),
                                      [](const CriticalPoint& a, const CriticalPoint& b) {
                                          return a.kind == b.kind;
                                      }) != w.points.end()) {
            label.reason = RejectReason::ConsecutiveSameKind;
        } else if (w.max_step_mm > options.max_step_mm) {
            label.reason = RejectReason::PositionJump;
        } else if (!(label.power <= options.max_power_mw)) {
            label.reason = RejectReason::PowerAboveMax;
        } else {
            label.valid = true;
            label.reason = RejectReason::None;
        }
        out.push_back(label);
    }
    return out;
}

std::vector<WindowDiagnostics> diagnose_block(const ContactTrace& trace, const LabelingOptions& options) {
    trace.validate();
    const std::size_t n_windows = window_count(trace.block_length_s, options.window_s, options.stride_s);
    std::vector<WindowDiagnostics> diags(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) {
        diags[w].label.window_start = trace.start_s + static_cast<double>(w) * options.stride_s;
    }

    const bool any_position = std::any_of(trace.y.begin(), trace.y.end(), [](double v) { return !is_missing(v); }) &&
                              std::any_of(trace.x.begin(), trace.x.end(), [](double v) { return !is_missing(v); });
    if (!any_position) {
        for (auto& d : diags) {
            d.has_contact = false;
        }
        return diags;
    }

    const std::vector<double> xi = fill_gaps(trace.t, trace.x);
    const std::vector<double> yi = fill_gaps(trace.t, trace.y);
    const std::vector<double> ys = yi.size() >= options.savgol_window
                                       ? savgol_smooth(yi, options.savgol_order, options.savgol_window)
                                       : yi;
    const CriticalPoints all_points = find_critical_points(ys, xi, trace.t, options.peaks);

    for (auto& d : diags) {
        const double begin = d.label.window_start;
        const double end = begin + options.window_s;
        const auto first = std::lower_bound(trace.t.begin(), trace.t.end(), begin);
        const auto last = std::lower_bound(trace.t.begin(), trace.t.end(), end);
        const auto i0 = static_cast<std::size_t>(first - trace.t.begin());
        const auto i1 = static_cast<std::size_t>(last - trace.t.begin());

        const std::span<const double> forces(trace.force.data() + i0, i1 - i0);
        d.has_contact = std::any_of(forces.begin(), forces.end(), [](double f) { return !is_missing(f); });
        if (!d.has_contact) {
            continue;
        }
        d.label.mean_force = mean_force(forces);

        for (std::size_t i = i0 + 1; i < i1; ++i) {
            d.max_step_mm = std::max({d.max_step_mm, std::abs(xi[i] - xi[i - 1]), std::abs(yi[i] - yi[i - 1])});
        }
        for (const auto& p : all_points) {
            if (p.t >= begin && p.t < end) {
                d.points.push_back(p);
            }
        }
        if (d.points.size() >= 2) {
            d.label.mean_velocity = mean_velocity(d.points);
            d.label.power = power_label(d.label.mean_force, d.label.mean_velocity);
        }
    }
    return diags;
}

std::vector<PowerLabel> label_block(const ContactTrace& trace, const LabelingOptions& options) {
    const auto diags = diagnose_block(trace, options);
    return filter_outliers(diags, options);
}

} // namespace scratchq
