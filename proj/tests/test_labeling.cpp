#include "oracles.hpp"

#include "scratchq/error.hpp"
#include "scratchq/labeling.hpp"
#include "scratchq/signal.hpp"
#include "scratchq/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

using namespace scratchq;

namespace {

ContactTrace make_trace(double seconds, const std::function<double(double)>& y, double force = 1.0,
                        double x = 120.0) {
    ContactTrace tr;
    tr.block_length_s = seconds;
    const auto n = static_cast<std::size_t>(std::llround(seconds * kTabletRateHz));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kTabletRateHz;
        tr.t.push_back(t);
        tr.x.push_back(x);
        tr.y.push_back(y(t));
        tr.force.push_back(force);
    }
    return tr;
}

double triangle(double t, double period, double amplitude) {
    const double phase = std::fmod(t / period, 1.0);
    return phase < 0.5 ? amplitude * 2.0 * phase : amplitude * 2.0 * (1.0 - phase);
}

} // namespace

TEST_SUITE("labeling") {

TEST_CASE("mean force") {
    CHECK(mean_force(std::vector<double>(150, 0.5)) == doctest::Approx(0.5));
    CHECK(mean_force(std::vector<double>{1, 2, 3, kMissing}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(mean_force(std::vector<double>{kMissing, kMissing}), Error);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 3);
    std::vector<double> f(150);
    double sum = 0.0;
    for (auto& v : f) {
        v = u(rng);
        sum += v;
    }
    CHECK(std::abs(mean_force(f) - sum / 150.0) < 1e-12);
}

TEST_CASE("savgol coefficients") {
    const auto ma = savgol_coefficients(0, 3);
    REQUIRE(ma.size() == 3);
    for (double w : ma) {
        CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }
    for (auto [order, window] : {std::pair{5, 31}, {2, 5}, {3, 11}, {0, 7}, {4, 9}}) {
        const auto w = savgol_coefficients(order, static_cast<std::size_t>(window));
        double s = 0.0;
        for (double v : w) {
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t i = 0; i < w.size(); ++i) {
            CHECK(w[i] == doctest::Approx(w[w.size() - 1 - i]).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(savgol_coefficients(5, 5), Error);
    CHECK_THROWS_AS(savgol_coefficients(2, 4), Error);
}

TEST_CASE("savgol reproduces polynomials and matches the QR oracle") {
    std::vector<double> quartic(200);
    for (std::size_t i = 0; i < quartic.size(); ++i) {
        const double t = static_cast<double>(i) / 150.0;
        quartic[i] = 3.0 - 2.0 * t + 0.5 * t * t + 0.1 * t * t * t - 0.02 * t * t * t * t;
    }
    const auto s = savgol_smooth(quartic);
    for (std::size_t i = 15; i + 15 < s.size(); ++i) {
        CHECK(std::abs(s[i] - quartic[i]) < 1e-9);
    }
    CHECK(s.front() == quartic.front());
    CHECK(s.back() == quartic.back());

    const auto flat = savgol_smooth(std::vector<double>(100, 7.25));
    for (double v : flat) {
        CHECK(v == doctest::Approx(7.25).epsilon(1e-13));
    }

    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0, 0.5);
    std::vector<double> y(600);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 20.0 * std::sin(2 * std::numbers::pi * 2.0 * static_cast<double>(i) / 150.0) + noise(rng);
    }
    const auto got = savgol_smooth(y);
    const auto want = oracle::savgol_by_qr(y, 5, 31);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - want[i]));
    }
    CHECK(worst < 1e-9);

    CHECK_THROWS_AS(savgol_smooth(std::vector<double>(30, 0.0)), Error);
}

TEST_CASE("critical points of a triangle wave sit on its vertices") {
    // Vertices at 0.4, 0.6, 0.8 and 1.0 s inside (0.3, 1.05).
    const auto tr = make_trace(1.4, [](double t) { return 50.0 + triangle(t, 0.4, 40.0); });
    const auto pts = find_critical_points(tr.y, tr.x, tr.t);
    std::vector<CriticalPoint> inside;
    for (const auto& p : pts) {
        if (p.t > 0.3 && p.t < 1.05) {
            inside.push_back(p);
        }
    }
    REQUIRE(inside.size() == 4);
    const double expected[] = {0.4, 0.6, 0.8, 1.0};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(inside[i].t == doctest::Approx(expected[i]).epsilon(1e-9));
        if (i > 0) {
            CHECK(inside[i].kind != inside[i - 1].kind);
        }
    }
    CHECK(inside[0].kind == CriticalKind::Valley);

    const auto flat = make_trace(2.0, [](double) { return 50.0; });
    CHECK(find_critical_points(flat.y, flat.x, flat.t).empty());
}

TEST_CASE("a plateau peak is reported at its midpoint") {
    std::vector<double> y{0, 1, 5, 5, 5, 1, 0};
    std::vector<double> t{0, 1, 2, 3, 4, 5, 6};
    const auto pts = find_critical_points(y, t, t, PeakOptions{2.0, 0.0});
    REQUIRE(pts.size() == 1);
    CHECK(pts[0].index == 3);
}

TEST_CASE("prominence and separation thresholds") {
    // A 1 mm bump is not a reversal.
    const auto small = make_trace(2.0, [](double t) { return 70.0 + 0.5 * std::sin(2 * std::numbers::pi * 2 * t); });
    CHECK(find_critical_points(small.y, small.x, small.t).empty());
    // Two maxima 0.02 s apart: only the higher survives.
    std::vector<double> t, y;
    for (int i = 0; i < 40; ++i) {
        t.push_back(i / 150.0);
    }
    y.assign(40, 0.0);
    y[20] = 10.0;
    y[21] = 4.0;
    y[23] = 9.0;
    const auto pts = find_critical_points(y, t, t);
    std::size_t peaks = 0;
    for (const auto& p : pts) {
        if (p.kind == CriticalKind::Peak) {
            ++peaks;
            CHECK(p.index == 20);
        }
    }
    CHECK(peaks == 1);
}

TEST_CASE("sawtooth block yields one critical point per half stroke") {
    const auto tr = make_trace(10.0, [](double t) { return 50.0 + triangle(t, 0.5, 40.0); });
    const auto pts = find_critical_points(savgol_smooth(tr.y), tr.x, tr.t);
    CHECK(pts.size() >= 38);
    CHECK(pts.size() <= 40);
}

TEST_CASE("mean velocity") {
    std::vector<CriticalPoint> pts{{0, 0.0, 0.0, 0.0, CriticalKind::Valley}, {1, 40.0, 30.0, 0.5, CriticalKind::Peak}};
    CHECK(mean_velocity(pts) == doctest::Approx(100.0));
    std::vector<CriticalPoint> saw;
    for (int i = 0; i < 5; ++i) {
        saw.push_back({static_cast<std::size_t>(i), i % 2 == 0 ? 10.0 : 50.0, 120.0, 0.25 * i,
                       i % 2 == 0 ? CriticalKind::Valley : CriticalKind::Peak});
    }
    CHECK(mean_velocity(saw) == doctest::Approx(160.0));
    CHECK_THROWS_AS(mean_velocity(std::span<const CriticalPoint>(pts.data(), 1)), Error);
}

TEST_CASE("power label arithmetic") {
    CHECK(power_label(0.0, 150.0) == 0.0);
    CHECK(power_label(1.0, 100.0) == doctest::Approx(100.0));
    CHECK(power_label(1.56, 177.93) == doctest::Approx(277.5708));
}

TEST_CASE("triangle strokes at 40 mm and 1 s give 80 mW per window") {
    const auto tr = make_trace(10.0, [](double t) { return 50.0 + triangle(t + 0.4, 1.0, 40.0); });
    const auto labels = label_block(tr);
    REQUIRE(labels.size() == 37);
    for (const auto& l : labels) {
        CHECK(l.valid);
        CHECK(l.power == doctest::Approx(80.0).epsilon(0.10));
    }
}

TEST_CASE("sine strokes at 150 mm/s are recovered within 10 percent") {
    // 37.5 mm peak to peak every 0.5 s is 150 mm/s along each chord.
    const auto tr = make_trace(10.0, [](double t) { return 70.0 + 18.75 * std::sin(2 * std::numbers::pi * 2 * t); });
    for (const auto& l : label_block(tr)) {
        CHECK(l.valid);
        CHECK(l.power == doctest::Approx(150.0).epsilon(0.10));
    }
}

TEST_CASE("empty and contactless traces are all NoContact") {
    ContactTrace empty;
    const auto a = label_block(empty);
    REQUIRE(a.size() == 37);
    for (const auto& l : a) {
        CHECK_FALSE(l.valid);
        CHECK(l.reason == RejectReason::NoContact);
    }
    auto tr = make_trace(10.0, [](double t) { return 50.0 + triangle(t, 0.5, 40.0); });
    for (std::size_t i = 0; i < 300; ++i) {
        tr.x[i] = tr.y[i] = tr.force[i] = kMissing;
    }
    const auto b = label_block(tr);
    CHECK(b[0].reason == RejectReason::NoContact);
    CHECK(b[4].reason == RejectReason::NoContact);
    CHECK(b[8].valid);
}

TEST_CASE("outlier fixtures trigger each rejection rule") {
    SUBCASE("too few critical points") {
        // A 4 s stroke period leaves at most one reversal per second.
        const auto tr = make_trace(10.0, [](double t) { return 70.0 + 20.0 * std::sin(2 * std::numbers::pi * t / 4.0); });
        const auto labels = label_block(tr);
        std::size_t hits = 0;
        for (const auto& l : labels) {
            hits += l.reason == RejectReason::TooFewCriticalPoints ? 1 : 0;
        }
        CHECK(hits == labels.size());
    }
    SUBCASE("consecutive valleys") {
        // Separation pruning drops the shoulder peak at 4.87 s in favour of the crest at 5.1 s,
        // leaving the valleys at 4.59 s and 4.97 s adjacent. Smoothing erases anything finer
        // than the default 0.05 s spacing, so the fixture widens it.
        const auto tr = make_trace(10.0, [](double t) {
            return 50.0 + 20.0 * std::exp(-std::pow((t - 5.0) / 0.3, 4)) -
                   10.0 * std::exp(-std::pow((t - 4.6) / 0.08, 2)) - 4.0 * std::exp(-std::pow((t - 4.97) / 0.08, 2));
        });
        LabelingOptions wide;
        wide.peaks.min_separation_s = 0.3;
        const auto labels = label_block(tr, wide);
        CHECK(labels[18].reason == RejectReason::ConsecutiveSameKind);
        CHECK(label_block(tr)[18].valid);
    }
    SUBCASE("position jump") {
        auto tr = make_trace(10.0, [](double t) { return 50.0 + triangle(t, 0.5, 40.0); });
        for (std::size_t i = 750; i < tr.size(); ++i) {
            tr.x[i] += 6.0;
        }
        const auto labels = label_block(tr);
        // Windows starting at 4.25, 4.5 and 4.75 s straddle the jump at t = 5.
        CHECK(labels[16].valid);
        CHECK(labels[17].reason == RejectReason::PositionJump);
        CHECK(labels[19].reason == RejectReason::PositionJump);
        CHECK(labels[20].valid);
    }
    SUBCASE("power above maximum") {
        const auto tr = make_trace(10.0, [](double t) { return 70.0 + 18.75 * std::sin(2 * std::numbers::pi * 2 * t); }, 5.0);
        for (const auto& l : label_block(tr)) {
            CHECK(l.reason == RejectReason::PowerAboveMax);
            CHECK(l.power == doctest::Approx(750.0).epsilon(0.1));
        }
    }
}

TEST_CASE("rejection rules are applied in order") {
    WindowDiagnostics d;
    d.has_contact = true;
    d.points = {{0, 0, 0, 0.1, CriticalKind::Peak}, {1, 0, 0, 0.2, CriticalKind::Peak}};
    d.max_step_mm = 10.0;
    d.label.power = 900.0;
    CHECK(filter_outliers(std::span(&d, 1))[0].reason == RejectReason::ConsecutiveSameKind);
    d.points[1].kind = CriticalKind::Valley;
    CHECK(filter_outliers(std::span(&d, 1))[0].reason == RejectReason::PositionJump);
    d.max_step_mm = 1.0;
    CHECK(filter_outliers(std::span(&d, 1))[0].reason == RejectReason::PowerAboveMax);
    d.label.power = 600.0;
    CHECK(filter_outliers(std::span(&d, 1))[0].valid);
    d.has_contact = false;
    CHECK(filter_outliers(std::span(&d, 1))[0].reason == RejectReason::NoContact);
}

TEST_CASE("reject reasons round-trip through text") {
    for (auto r : {RejectReason::None, RejectReason::NoContact, RejectReason::TooFewCriticalPoints,
                   RejectReason::ConsecutiveSameKind, RejectReason::PositionJump, RejectReason::PowerAboveMax}) {
        CHECK(parse_reject_reason(to_string(r)) == r);
    }
    CHECK_THROWS_AS(parse_reject_reason("Bogus"), Error);
}

TEST_CASE("tablet geometry is validated") {
    auto tr = make_trace(2.0, [](double) { return 50.0; });
    tr.x[3] = 250.0;
    CHECK_THROWS_AS(tr.validate(), Error);
    tr.x[3] = 120.0;
    tr.force.pop_back();
    CHECK_THROWS_AS(tr.validate(), Error);
}

}
