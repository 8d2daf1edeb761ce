#pragma once

// Slow, independent reference implementations shared by unit and acceptance tests.

#include "scratchq/mlp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// O(N^2) DFT in long double, with kn reduced mod N to index a table of twiddles.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n);
    const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
    std::vector<long double> c(n), s(n);
    for (std::size_t r = 0; r < n; ++r) {
        const long double angle = -two_pi * static_cast<long double>(r) / static_cast<long double>(n);
        c[r] = std::cos(angle);
        s[r] = std::sin(angle);
    }
    for (std::size_t k = 0; k < n; ++k) {
        long double re = 0.0L;
        long double im = 0.0L;
        std::size_t r = 0;
        for (std::size_t j = 0; j < n; ++j) {
            re += x[j] * c[r];
            im += x[j] * s[r];
            r += k;
            if (r >= n) {
                r -= n;
            }
        }
        out[k] = {static_cast<double>(re), static_cast<double>(im)};
    }
    return out;
}

// Least-squares polynomial fit of each full window solved by QR, evaluated at the
// centre. Edges where the window does not fit are passed through.
inline std::vector<double> savgol_by_qr(const std::vector<double>& y, int order, std::size_t window) {
    const std::size_t half = window / 2;
    std::vector<double> out = y;
    if (y.size() < window) {
        return out;
    }
    Eigen::MatrixXd v(static_cast<Eigen::Index>(window), order + 1);
    for (std::size_t r = 0; r < window; ++r) {
        const double u = (static_cast<double>(r) - static_cast<double>(half)) / static_cast<double>(half);
        for (int c = 0; c <= order; ++c) {
            v(static_cast<Eigen::Index>(r), c) = std::pow(u, c);
        }
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(v);
    for (std::size_t i = half; i + half < y.size(); ++i) {
        Eigen::VectorXd b(static_cast<Eigen::Index>(window));
        for (std::size_t r = 0; r < window; ++r) {
            b(static_cast<Eigen::Index>(r)) = y[i - half + r];
        }
        const Eigen::VectorXd coef = qr.solve(b);
        out[i] = coef(0);
    }
    return out;
}

// Exact two-sided signed-rank p-value by enumerating all 2^n sign patterns.
// Ranks are tie-averaged; zeros are dropped beforehand.
inline double wilcoxon_enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] - b[i] != 0.0) {
            d.push_back(a[i] - b[i]);
        }
    }
    const std::size_t n = d.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return std::abs(d[i]) < std::abs(d[j]); });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) {
            ++j;
        }
        for (std::size_t k = i; k <= j; ++k) {
            rank[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
        }
        i = j + 1;
    }
    double w_plus = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank[i];
        if (d[i] > 0) {
            w_plus += rank[i];
        }
    }
    const double w = std::min(w_plus, total - w_plus);
    std::uint64_t at_or_below = 0;
    const std::uint64_t patterns = std::uint64_t{1} << n;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask >> i & 1U) {
                s += rank[i];
            }
        }
        if (s <= w + 1e-9) {
            ++at_or_below;
        }
    }
    return std::min(1.0, 2.0 * static_cast<double>(at_or_below) / static_cast<double>(patterns));
}

// Spearman rho for tie-free data: 1 - 6 sum d^2 / (n (n^2 - 1)).
inline double spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t below = 0;
            for (std::size_t j = 0; j < n; ++j) {
                below += v[j] < v[i] ? 1 : 0;
            }
            r[i] = static_cast<double>(below + 1);
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    }
    const double nn = static_cast<double>(n);
    return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

// Adam on f(w) = a (w - c)^2, written out step by step.
inline std::vector<double> adam_scalar_trace(double w0, double a, double c, double lr, double b1, double b2, double eps,
                                             int steps) {
    std::vector<double> trace;
    double w = w0;
    double m = 0.0;
    double v = 0.0;
    for (int t = 1; t <= steps; ++t) {
        const double g = 2.0 * a * (w - c);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double m_hat = m / (1.0 - std::pow(b1, t));
        const double v_hat = v / (1.0 - std::pow(b2, t));
        w -= lr * m_hat / (std::sqrt(v_hat) + eps);
        trace.push_back(w);
    }
    return trace;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0; // coordinates whose +h / -h passes cross a ReLU, |.| or clipping kink
};

namespace detail {

// Everything that makes the loss non-smooth, as one sign vector.
inline std::vector<bool> kink_pattern(const scratchq::ForwardCache& c, const Eigen::RowVectorXd& y,
                                      scratchq::LossKind kind) {
    std::vector<bool> p;
    for (std::size_t l = 0; l + 1 < c.preacts.size(); ++l) {
        for (Eigen::Index i = 0; i < c.preacts[l].size(); ++i) {
            p.push_back(c.preacts[l].data()[i] > 0.0);
        }
    }
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (kind == scratchq::LossKind::MAE) {
            p.push_back(c.output(i) > y(i));
        } else {
            p.push_back(c.output(i) < scratchq::kBceEpsilon);
            p.push_back(c.output(i) > 1.0 - scratchq::kBceEpsilon);
        }
    }
    return p;
}

} // namespace detail

// Central differences with step h on up to `per_layer` sampled weights per layer
// plus up to `per_layer` biases, against Network::backward under fixed dropout masks.
// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheck gradient_check(const scratchq::Network& net, const Eigen::MatrixXd& x, const Eigen::RowVectorXd& y,
                                const std::vector<Eigen::MatrixXd>& masks, std::size_t per_layer, double h,
                                double floor, std::uint64_t seed) {
    const auto kind = net.config().loss;
    const auto cache = net.forward_masked(x, masks);
    const scratchq::ParamList grads = net.backward(cache, y);
    std::mt19937_64 rng(seed);
    GradCheck out;
    scratchq::Network probe = net;
    for (std::size_t p = 0; p < probe.params().size(); ++p) {
        auto& m = probe.params()[p];
        std::vector<Eigen::Index> coords(static_cast<std::size_t>(m.size()));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            coords[static_cast<std::size_t>(i)] = i;
        }
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(std::min(per_layer, coords.size()));
        for (Eigen::Index i : coords) {
            const double saved = m.data()[i];
            m.data()[i] = saved + h;
            const auto plus = probe.forward_masked(x, masks);
            m.data()[i] = saved - h;
            const auto minus = probe.forward_masked(x, masks);
            m.data()[i] = saved;
            if (detail::kink_pattern(plus, y, kind) != detail::kink_pattern(minus, y, kind)) {
                ++out.skipped;
                continue;
            }
            const double numeric =
                (scratchq::loss(plus.output, y, kind) - scratchq::loss(minus.output, y, kind)) / (2.0 * h);
            const double analytic = grads[p].data()[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
            ++out.checked;
        }
    }
    return out;
}

} // namespace oracle
