#include "scratchq/error.hpp"
#include "scratchq/io.hpp"
#include "scratchq/synth.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

using namespace scratchq;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("scratchq_io_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidConfig;
}

std::string message_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

ModelArtifact random_artifact(Task task, std::uint64_t seed) {
    MlpConfig c;
    c.layer_sizes = {feature_layout(task).size(), 7, 5, 1};
    c.output_activation = task == Task::Detection ? OutputActivation::Sigmoid : OutputActivation::Identity;
    c.loss = task == Task::Detection ? LossKind::BCE : LossKind::MAE;
    c.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 10);
    std::vector<double> mins(c.layer_sizes[0]), maxs(c.layer_sizes[0]);
    for (std::size_t i = 0; i < mins.size(); ++i) {
        mins[i] = u(rng);
        maxs[i] = mins[i] + u(rng);
    }
    auto net = Network::initialize(c);
    for (auto& p : net.params()) {
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            p.data()[i] += 0.01 * u(rng);
        }
    }
    return {task, MinMaxScaler(mins, maxs), net};
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("shortest round-trip number formatting") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0, 2.5e-300}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(kMissing).empty());
    CHECK(format_double(160.0) == "160");
}

TEST_CASE("sensor and tablet CSV round-trips") {
    const auto dir = scratch_dir("streams");
    const auto s = gen_tone_stream(Channel::AccelZ, {{20, 1, 0.3}}, 2.0, 0.1, 4);
    write_sensor_csv(dir / "a.csv", s);
    const auto back = read_sensor_csv(dir / "a.csv", Channel::AccelZ);
    CHECK(back.timestamps == s.timestamps);
    CHECK(back.values == s.values);

    SyntheticScratchSpec spec;
    spec.style = ScratchStyle::LiftOff;
    spec.contact_gap_fraction = 0.2;
    spec.position_noise_sd_mm = 0.3;
    const auto tr = gen_contact_trace(spec).trace;
    write_tablet_csv(dir / "t.csv", tr);
    const auto tb = read_tablet_csv(dir / "t.csv");
    REQUIRE(tb.size() == tr.size());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        CHECK(tb.t[i] == tr.t[i]);
        CHECK((is_missing(tb.y[i]) ? is_missing(tr.y[i]) : tb.y[i] == tr.y[i]));
    }
    CHECK(tb.block_length_s == doctest::Approx(10.0));
}

TEST_CASE("label CSV round-trip") {
    const auto dir = scratch_dir("labels");
    SyntheticScratchSpec spec;
    spec.position_noise_sd_mm = 0.4;
    spec.force_noise_sd_n = 0.05;
    const auto labels = label_block(gen_contact_trace(spec).trace);
    std::vector<LabelRecord> recs;
    for (const auto& l : labels) {
        recs.push_back({"P3", l, "arm"});
    }
    recs[2].label.valid = false;
    recs[2].label.reason = RejectReason::PositionJump;
    write_labels_csv(dir / "l.csv", recs);
    const auto back = read_labels_csv(dir / "l.csv");
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(back[i].participant == "P3");
        CHECK(back[i].activity == "arm");
        CHECK(std::abs(back[i].label.power - recs[i].label.power) < 1e-9);
        CHECK(std::abs(back[i].label.mean_velocity - recs[i].label.mean_velocity) < 1e-9);
        CHECK(back[i].label.valid == recs[i].label.valid);
        CHECK(back[i].label.reason == recs[i].label.reason);
    }
}

TEST_CASE("features CSV round-trip") {
    const auto dir = scratch_dir("features");
    auto t = toy_detection_table(2, 2, 3);
    t.labels[1] = kMissing;
    write_features_csv(dir / "f.csv", t);
    const auto back = read_features_csv(dir / "f.csv");
    CHECK(back.task == Task::Detection);
    CHECK(back.values == t.values);
    CHECK(back.participants == t.participants);
    CHECK(is_missing(back.labels[1]));
    CHECK(back.labels[0] == t.labels[0]);
}

TEST_CASE("malformed input is rejected with file and line") {
    const auto dir = scratch_dir("bad");
    write_text(dir / "s.csv", "# scratchq sensor schema_version=1\nt_s,value\n0,1\n0.1,abc\n");
    const auto msg = message_of([&] { read_sensor_csv(dir / "s.csv", Channel::AccelZ); });
    CHECK(msg.find("s.csv:4") != std::string::npos);
    CHECK(kind_of([&] { read_sensor_csv(dir / "s.csv", Channel::AccelZ); }) == ErrorKind::MalformedRow);

    write_text(dir / "n.csv", "t_s,value\n0,1\n");
    CHECK(kind_of([&] { read_sensor_csv(dir / "n.csv", Channel::AccelZ); }) == ErrorKind::SchemaMismatch);
    write_text(dir / "v.csv", "# scratchq sensor schema_version=9\nt_s,value\n");
    CHECK(kind_of([&] { read_sensor_csv(dir / "v.csv", Channel::AccelZ); }) == ErrorKind::SchemaMismatch);
    write_text(dir / "k.csv", "# scratchq tablet schema_version=1\nt_s,x_mm,y_mm,force_n\n");
    CHECK(kind_of([&] { read_sensor_csv(dir / "k.csv", Channel::AccelZ); }) == ErrorKind::SchemaMismatch);
    write_text(dir / "c.csv", "# scratchq sensor schema_version=1\nt_s,value\n0,1,2\n");
    CHECK(kind_of([&] { read_sensor_csv(dir / "c.csv", Channel::AccelZ); }) == ErrorKind::MalformedRow);
    write_text(dir / "e.csv", "");
    CHECK(kind_of([&] { read_sensor_csv(dir / "e.csv", Channel::AccelZ); }) == ErrorKind::SchemaMismatch);
    write_text(dir / "b.csv", "# scratchq sensor schema_version=1\nt_s,value\n1,1\n0.5,1\n");
    CHECK(kind_of([&] { read_sensor_csv(dir / "b.csv", Channel::AccelZ); }) == ErrorKind::MalformedRow);
    write_text(dir / "t.csv", "# scratchq tablet schema_version=1\nt_s,x_mm,y_mm,force_n\n0,300,10,1\n");
    CHECK(kind_of([&] { read_tablet_csv(dir / "t.csv"); }) == ErrorKind::MalformedRow);
    write_text(dir / "l.csv",
               "# scratchq labels schema_version=1\n"
               "participant,window_start_s,mean_force_n,mean_velocity_mm_s,power_mw,valid,reason\n"
               "P1,0,1,100,100,1,PositionJump\n");
    CHECK(kind_of([&] { read_labels_csv(dir / "l.csv"); }) == ErrorKind::MalformedRow);
    CHECK(kind_of([&] { read_sensor_csv(dir / "absent.csv", Channel::AccelZ); }) == ErrorKind::MissingFile);
}

TEST_CASE("minimal manifest gives one unlabelled window") {
    const auto dir = scratch_dir("manifest");
    write_sensor_csv(dir / "cm.csv", make_uniform_series(Channel::ContactMic, std::vector<double>(8000, 0.0)));
    write_sensor_csv(dir / "acc.csv", make_uniform_series(Channel::AccelZ, std::vector<double>(400, 0.0)));
    write_text(dir / "m.json", R"({"schema_version": 1, "participant_id": "P1", "session_kind": "detection",
        "streams": {"contact_mic": "cm.csv", "accel_z": "acc.csv"}})");
    const auto session = load_session(load_manifest(dir / "m.json"));
    const auto sw = session_windows(session, Task::Detection);
    REQUIRE(sw.windows.size() == 1);
    CHECK_FALSE(sw.windows[0].label.has_value());
    CHECK(sw.windows[0].window.participant_id() == "P1");

    write_text(dir / "missing.json", R"({"schema_version": 1, "participant_id": "P1", "session_kind": "detection",
        "streams": {"contact_mic": "nope.csv", "accel_z": "acc.csv"}})");
    const auto msg = message_of([&] { load_session(load_manifest(dir / "missing.json")); });
    CHECK(msg.find("nope.csv") != std::string::npos);
    CHECK(kind_of([&] { load_session(load_manifest(dir / "missing.json")); }) == ErrorKind::MissingFile);

    write_text(dir / "v2.json", R"({"schema_version": 2, "participant_id": "P1", "session_kind": "detection",
        "streams": {"contact_mic": "cm.csv", "accel_z": "acc.csv"}})");
    CHECK(kind_of([&] { load_manifest(dir / "v2.json"); }) == ErrorKind::SchemaMismatch);
    write_text(dir / "overlap.json", R"({"schema_version": 1, "participant_id": "P1", "session_kind": "detection",
        "streams": {"contact_mic": "cm.csv", "accel_z": "acc.csv"},
        "annotations": [{"activity": "a", "start_s": 0, "end_s": 2}, {"activity": "b", "start_s": 1, "end_s": 3}]})");
    CHECK(kind_of([&] { load_manifest(dir / "overlap.json"); }) == ErrorKind::SchemaMismatch);
}

TEST_CASE("manifest JSON round-trip") {
    SessionManifest m;
    m.participant_id = "P9";
    m.kind = SessionKind::ValidationStudy2;
    m.contact_mic = "/data/cm.csv";
    m.accel_z = "/data/acc.csv";
    m.tablet = "/data/tab.csv";
    m.annotations.push_back({"lvl3", 1.0, 11.0, std::nullopt, true, 2, 3});
    const auto back = parse_manifest(manifest_to_json(m));
    CHECK(back.participant_id == "P9");
    CHECK(back.kind == SessionKind::ValidationStudy2);
    REQUIRE(back.annotations.size() == 1);
    CHECK(back.annotations[0].level == 3);
    CHECK(back.annotations[0].set == 2);
    CHECK(back.annotations[0].tablet);
    CHECK(*back.tablet == "/data/tab.csv");
}

TEST_CASE("session labels join on the window midpoint") {
    const auto dir = scratch_dir("session");
    SessionManifest m;
    m.participant_id = "P2";
    m.kind = SessionKind::IntensityStudy1;
    write_sensor_csv(dir / "cm.csv", gen_tone_stream(Channel::ContactMic, {{100, 1, 0}}, 12.0, 0.01, 1));
    write_sensor_csv(dir / "acc.csv", gen_tone_stream(Channel::AccelZ, {{20, 1, 0}}, 12.0, 0.01, 2));
    SyntheticScratchSpec spec;
    spec.duration_s = 12.0;
    auto trace = gen_contact_trace(spec).trace;
    // Break contact for [6, 7.5) so some label windows are rejected.
    for (std::size_t i = 900; i < 1125; ++i) {
        trace.x[i] = trace.y[i] = trace.force[i] = kMissing;
    }
    write_tablet_csv(dir / "tab.csv", trace);
    m.contact_mic = dir / "cm.csv";
    m.accel_z = dir / "acc.csv";
    m.tablet = dir / "tab.csv";
    m.annotations.push_back({"block", 1.0, 11.0, std::nullopt, true, std::nullopt, std::nullopt});
    const auto session = load_session(m);
    const auto sw = session_windows(session, Task::Intensity);
    CHECK(sw.tablet_labels.size() == 37);
    CHECK(sw.rejected > 0);
    CHECK(sw.windows.size() + sw.rejected == 37);
    for (const auto& w : sw.windows) {
        REQUIRE(w.label.has_value());
        CHECK(*w.label == doctest::Approx(160.0).epsilon(0.1));
        CHECK(w.window.activity() == "block");
        CHECK(w.window.start_time() >= 1.0);
    }
    const auto kept = session_windows(session, Task::Intensity, {}, true);
    CHECK(kept.windows.size() == 37);
}

TEST_CASE("model round-trip is bit-exact") {
    const auto dir = scratch_dir("model");
    const auto a = random_artifact(Task::Intensity, 5);
    save_model(dir / "m.bin", a);
    const auto b = load_model(dir / "m.bin", Task::Intensity);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 20);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(575);
        for (auto& v : x) {
            v = u(rng);
        }
        CHECK(a.predict(x) == b.predict(x));
    }
    CHECK(encode_model(a) == encode_model(b));
    CHECK(b.network.config().layer_sizes == a.network.config().layer_sizes);
}

TEST_CASE("damaged or mismatched models are refused") {
    const auto dir = scratch_dir("model_bad");
    const auto a = random_artifact(Task::Detection, 2);
    auto bytes = encode_model(a);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    CHECK(kind_of([&] { decode_model(truncated); }) == ErrorKind::ChecksumFailure);
    CHECK(kind_of([&] { decode_model(std::vector<std::uint8_t>(5, 0)); }) == ErrorKind::ChecksumFailure);

    auto flipped = bytes;
    flipped[100] ^= 0x01;
    CHECK(kind_of([&] { decode_model(flipped); }) == ErrorKind::ChecksumFailure);

    auto future = bytes;
    const std::uint32_t v2 = 2;
    std::memcpy(future.data() + 8, &v2, 4);
    future.resize(future.size() - 4);
    const std::uint32_t crc = checksum(future);
    future.resize(future.size() + 4);
    std::memcpy(future.data() + future.size() - 4, &crc, 4);
    CHECK(kind_of([&] { decode_model(future); }) == ErrorKind::VersionUnsupported);

    save_model(dir / "d.bin", a);
    CHECK(kind_of([&] { load_model(dir / "d.bin", Task::Intensity); }) == ErrorKind::TaskMismatch);
    CHECK(load_model(dir / "d.bin").task == Task::Detection);
}

TEST_CASE("config JSON") {
    const auto c = config_from_json(config_to_json(detection_preset()), MlpConfig{});
    CHECK(c.layer_sizes == detection_preset().layer_sizes);
    CHECK(c.learning_rate == detection_preset().learning_rate);
    CHECK(c.loss == LossKind::BCE);
    CHECK(kind_of([] { config_from_json(nlohmann::json{{"learning_rat", 0.1}}, intensity_preset()); }) ==
          ErrorKind::InvalidConfig);
    CHECK(kind_of([] { config_from_json(nlohmann::json{{"epochs", "many"}}, intensity_preset()); }) ==
          ErrorKind::InvalidConfig);
    CHECK(config_from_json(nlohmann::json{{"epochs", 3}}, intensity_preset()).epochs == 3);
}

}
