#include "scratchq/error.hpp"
#include "scratchq/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace scratchq;

namespace {

const double M = kMissing;

// Independent scalar gap fill: for each missing point, scan outwards for the
// nearest observed neighbours.
std::vector<double> scalar_fill(const std::vector<double>& t, const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isnan(v[i])) {
            out[i] = v[i];
            continue;
        }
        long lo = static_cast<long>(i) - 1;
        while (lo >= 0 && std::isnan(v[static_cast<std::size_t>(lo)])) {
            --lo;
        }
        std::size_t hi = i + 1;
        while (hi < v.size() && std::isnan(v[hi])) {
            ++hi;
        }
        if (lo < 0) {
            out[i] = v[hi];
        } else if (hi == v.size()) {
            out[i] = v[static_cast<std::size_t>(lo)];
        } else {
            const auto l = static_cast<std::size_t>(lo);
            out[i] = v[l] + (v[hi] - v[l]) * (t[i] - t[l]) / (t[hi] - t[l]);
        }
    }
    return out;
}

} // namespace

TEST_SUITE("signal") {

TEST_CASE("gap filling examples") {
    const std::vector<double> t{0, 1, 2, 3, 4, 5};
    CHECK(fill_gaps(std::vector<double>{0, 1, 2}, std::vector<double>{1, 2, 3}) == std::vector<double>{1, 2, 3});
    CHECK(fill_gaps(std::vector<double>{0, 1, 2}, std::vector<double>{1, M, 3}) == std::vector<double>{1, 2, 3});
    CHECK(fill_gaps(t, std::vector<double>{M, 4, M, M, 10, M}) == std::vector<double>{4, 4, 6, 8, 10, 10});
}

TEST_CASE("gap filling matches a scalar scan on random gappy series") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-5, 5);
    std::bernoulli_distribution gap(0.4);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> t, v;
        double now = 0.0;
        for (int i = 0; i < 60; ++i) {
            now += 0.001 + std::abs(u(rng)) * 0.01;
            t.push_back(now);
            v.push_back(gap(rng) ? M : u(rng));
        }
        v[30] = 1.0;
        const auto got = fill_gaps(t, v);
        const auto want = scalar_fill(t, v);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("all-missing series is rejected") {
    CHECK_THROWS_AS(fill_gaps(std::vector<double>{0, 1}, std::vector<double>{M, M}), Error);
    try {
        fill_gaps(std::vector<double>{0, 1}, std::vector<double>{M, M});
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AllMissing);
    }
}

TEST_CASE("deduplicate keeps the first sample and rejects time going backwards") {
    TimeSeries s;
    s.timestamps = {0.0, 0.1, 0.1, 0.2};
    s.values = {1, 2, 3, 4};
    const auto d = deduplicate(s);
    CHECK(d.timestamps == std::vector<double>{0.0, 0.1, 0.2});
    CHECK(d.values == std::vector<double>{1, 2, 4});
    s.timestamps = {0.0, 0.2, 0.1, 0.3};
    CHECK_THROWS_AS(deduplicate(s), Error);
}

TEST_CASE("window counts") {
    CHECK(window_count(10.0, 1.0, 0.25) == 37);
    CHECK(window_count(1.0, 1.0, 0.25) == 1);
    CHECK(window_count(0.99, 1.0, 0.25) == 0);
    CHECK(window_count(30.0, 1.0, 0.25) == 117);
}

TEST_CASE("window_stream over 10 s and 1 s of data") {
    const auto cm = make_uniform_series(Channel::ContactMic, std::vector<double>(80000, 0.5));
    const auto acc = make_uniform_series(Channel::AccelZ, std::vector<double>(4000, -0.5));
    const auto ws = window_stream(cm, acc);
    REQUIRE(ws.size() == 37);
    CHECK(ws[1].start_time() == doctest::Approx(0.25));
    CHECK(ws.back().start_time() == doctest::Approx(9.0));
    for (const auto& w : ws) {
        CHECK(w.cm().size() == 8000);
        CHECK(w.acc_z().size() == 400);
    }

    const auto one_cm = make_uniform_series(Channel::ContactMic, std::vector<double>(8000, 0.0));
    const auto one_acc = make_uniform_series(Channel::AccelZ, std::vector<double>(400, 0.0));
    CHECK(window_stream(one_cm, one_acc).size() == 1);
}

TEST_CASE("windows copy samples on the nominal grid exactly") {
    std::vector<double> v(16000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::sin(0.001 * static_cast<double>(i * i % 977));
    }
    std::vector<double> a(800);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<double>(i);
    }
    const auto ws = window_stream(make_uniform_series(Channel::ContactMic, v, 3.0),
                                  make_uniform_series(Channel::AccelZ, a, 3.0));
    REQUIRE(ws.size() == 5);
    for (std::size_t w = 0; w < ws.size(); ++w) {
        const std::size_t off_cm = w * 2000;
        const std::size_t off_acc = w * 100;
        CHECK(ws[w].cm()[0] == v[off_cm]);
        CHECK(ws[w].cm()[7999] == v[off_cm + 7999]);
        CHECK(ws[w].acc_z()[123] == a[off_acc + 123]);
    }
}

TEST_CASE("missing sensor samples are interpolated before windowing") {
    std::vector<double> acc(400, 1.0);
    acc[10] = M;
    acc[11] = M;
    std::vector<double> cm(8000, 0.0);
    cm[0] = M;
    const auto ws = window_stream(make_uniform_series(Channel::ContactMic, cm),
                                  make_uniform_series(Channel::AccelZ, acc));
    REQUIRE(ws.size() == 1);
    CHECK(ws[0].acc_z()[10] == 1.0);
    CHECK(ws[0].cm()[0] == 0.0);
}

TEST_CASE("streams shorter than a window are rejected") {
    const auto cm = make_uniform_series(Channel::ContactMic, std::vector<double>(4000, 0.0));
    const auto acc = make_uniform_series(Channel::AccelZ, std::vector<double>(200, 0.0));
    try {
        window_stream(cm, acc);
        FAIL("expected DurationTooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::DurationTooShort);
    }
}

TEST_CASE("sensor windows validate their size") {
    CHECK_THROWS_AS(SensorWindow(std::vector<double>(7999), std::vector<double>(400), 0.0), Error);
    CHECK_THROWS_AS(SensorWindow(std::vector<double>(8000), std::vector<double>(401), 0.0), Error);
    std::vector<double> cm(8000, 0.0);
    cm[5] = M;
    CHECK_THROWS_AS(SensorWindow(cm, std::vector<double>(400), 0.0), Error);
}

TEST_CASE("sub-range windowing honours begin and end") {
    const auto cm = make_uniform_series(Channel::ContactMic, std::vector<double>(80000, 0.0));
    const auto acc = make_uniform_series(Channel::AccelZ, std::vector<double>(4000, 0.0));
    WindowingOptions o;
    o.begin_s = 2.0;
    o.end_s = 5.0;
    o.participant_id = "P7";
    o.activity = "arm";
    const auto ws = window_stream(cm, acc, o);
    REQUIRE(ws.size() == 9);
    CHECK(ws.front().start_time() == doctest::Approx(2.0));
    CHECK(ws.back().start_time() == doctest::Approx(4.0));
    CHECK(ws.front().participant_id() == "P7");
    CHECK(ws.front().activity() == "arm");
}

}
