#include "scratchq/io.hpp"

#include "scratchq/error.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace scratchq {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

void check_text_field(const std::string& s, const std::string& what) {
    if (s.find_first_of(",\n\r") != std::string::npos) {
        throw Error(ErrorKind::InvalidConfig, what + " '" + s + "' contains a comma or newline");
    }
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
    }
    return out;
}

} // namespace

std::string csv_preamble(const std::string& kind) {
    return "# scratchq " + kind + " schema_version=" + std::to_string(kSchemaVersion) + "\n";
}

std::size_t CsvTable::column(const std::string& name) const {
    if (auto c = find_column(name)) {
        return *c;
    }
    throw Error(ErrorKind::SchemaMismatch, path + ": missing column '" + name + "'");
}

std::optional<std::size_t> CsvTable::find_column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
}

void CsvTable::fail_row(std::size_t row, const std::string& message) const {
    throw Error(ErrorKind::MalformedRow, path + ":" + std::to_string(line_numbers.at(row)) + ": " + message);
}

CsvTable read_csv(const fs::path& path, const std::string& expected_kind) {
    if (!fs::exists(path)) {
        throw Error(ErrorKind::MissingFile, path.string() + " does not exist");
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
    }
    CsvTable table;
    table.path = path.string();
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::SchemaMismatch, table.path + ": empty file");
    }
    strip_cr(line);
    const std::string prefix = "# scratchq ";
    const std::string version_key = " schema_version=";
    const auto vpos = line.find(version_key);
    if (line.rfind(prefix, 0) != 0 || vpos == std::string::npos) {
        throw Error(ErrorKind::SchemaMismatch, table.path + ":1: missing '# scratchq <kind> schema_version=N' line");
    }
    table.kind = line.substr(prefix.size(), vpos - prefix.size());
    const std::string version = line.substr(vpos + version_key.size());
    if (version != std::to_string(kSchemaVersion)) {
        throw Error(ErrorKind::SchemaMismatch, table.path + ":1: unsupported schema_version " + version);
    }
    if (table.kind != expected_kind) {
        throw Error(ErrorKind::SchemaMismatch,
                    table.path + ":1: expected a '" + expected_kind + "' file, found '" + table.kind + "'");
    }
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::SchemaMismatch, table.path + ":2: missing header row");
    }
    strip_cr(line);
    table.header = split_fields(line);
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        auto fields = split_fields(line);
        if (fields.size() != table.header.size()) {
            throw Error(ErrorKind::MalformedRow, table.path + ":" + std::to_string(line_no) + ": expected " +
                                                     std::to_string(table.header.size()) + " fields, found " +
                                                     std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    return table;
}

double parse_double_field(const CsvTable& table, std::size_t row, std::size_t col, bool allow_empty) {
    const std::string& s = table.rows[row][col];
    if (s.empty()) {
        if (allow_empty) {
            return kMissing;
        }
        table.fail_row(row, "empty '" + table.header[col] + "'");
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        table.fail_row(row, "'" + s + "' is not a number in column '" + table.header[col] + "'");
    }
    return v;
}

std::string format_double(double v) {
    if (is_missing(v)) {
        return "";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Streams and labels
// ---------------------------------------------------------------------------

TimeSeries read_sensor_csv(const fs::path& path, Channel channel) {
    const CsvTable csv = read_csv(path, "sensor");
    const std::size_t ct = csv.column("t_s");
    const std::size_t cv = csv.column("value");
    TimeSeries s;
    s.channel = channel;
    s.sample_rate_hz = nominal_rate_hz(channel);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const double t = parse_double_field(csv, r, ct);
        if (!s.timestamps.empty() && t < s.timestamps.back()) {
            csv.fail_row(r, "timestamp goes backwards");
        }
        s.timestamps.push_back(t);
        s.values.push_back(parse_double_field(csv, r, cv, true));
    }
    return s;
}

void write_sensor_csv(const fs::path& path, const TimeSeries& series) {
    auto out = open_out(path);
    out << csv_preamble("sensor") << "t_s,value\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        out << format_double(series.timestamps[i]) << ',' << format_double(series.values[i]) << '\n';
    }
}

ContactTrace read_tablet_csv(const fs::path& path) {
    const CsvTable csv = read_csv(path, "tablet");
    const std::size_t ct = csv.column("t_s");
    const std::size_t cx = csv.column("x_mm");
    const std::size_t cy = csv.column("y_mm");
    const std::size_t cf = csv.column("force_n");
    ContactTrace trace;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const double t = parse_double_field(csv, r, ct);
        if (!trace.t.empty() && !(t > trace.t.back())) {
            csv.fail_row(r, "timestamps must increase");
        }
        const double x = parse_double_field(csv, r, cx, true);
        const double y = parse_double_field(csv, r, cy, true);
        const double f = parse_double_field(csv, r, cf, true);
        if (!is_missing(x) && (x < 0.0 || x > kTabletWidthMm)) {
            csv.fail_row(r, "x outside the 0-240 mm sensing area");
        }
        if (!is_missing(y) && (y < 0.0 || y > kTabletHeightMm)) {
            csv.fail_row(r, "y outside the 0-139 mm sensing area");
        }
        if (!is_missing(f) && f < 0.0) {
            csv.fail_row(r, "negative force");
        }
        trace.t.push_back(t);
        trace.x.push_back(x);
        trace.y.push_back(y);
        trace.force.push_back(f);
    }
    if (!trace.t.empty()) {
        trace.start_s = trace.t.front();
        trace.block_length_s = trace.t.back() - trace.t.front() + 1.0 / kTabletRateHz;
    } else {
        trace.block_length_s = 0.0;
    }
    return trace;
}

void write_tablet_csv(const fs::path& path, const ContactTrace& trace) {
    trace.validate();
    auto out = open_out(path);
    out << csv_preamble("tablet") << "t_s,x_mm,y_mm,force_n\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << format_double(trace.t[i]) << ',' << format_double(trace.x[i]) << ',' << format_double(trace.y[i])
            << ',' << format_double(trace.force[i]) << '\n';
    }
}

void write_labels_csv(const fs::path& path, const std::vector<LabelRecord>& labels) {
    auto out = open_out(path);
    out << csv_preamble("labels")
        << "participant,window_start_s,mean_force_n,mean_velocity_mm_s,power_mw,valid,reason,activity\n";
    for (const auto& rec : labels) {
        check_text_field(rec.participant, "participant");
        check_text_field(rec.activity, "activity");
        const auto& l = rec.label;
        out << rec.participant << ',' << format_double(l.window_start) << ',' << format_double(l.mean_force) << ','
            << format_double(l.mean_velocity) << ',' << format_double(l.power) << ',' << (l.valid ? 1 : 0) << ','
            << to_string(l.reason) << ',' << rec.activity << '\n';
    }
}

std::vector<LabelRecord> read_labels_csv(const fs::path& path) {
    const CsvTable csv = read_csv(path, "labels");
    const std::size_t cp = csv.column("participant");
    const std::size_t cw = csv.column("window_start_s");
    const std::size_t cf = csv.column("mean_force_n");
    const std::size_t cv = csv.column("mean_velocity_mm_s");
    const std::size_t cpow = csv.column("power_mw");
    const std::size_t cvalid = csv.column("valid");
    const std::size_t creason = csv.column("reason");
    const auto cact = csv.find_column("activity");
    std::vector<LabelRecord> out;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        LabelRecord rec;
        rec.participant = csv.rows[r][cp];
        rec.label.window_start = parse_double_field(csv, r, cw);
        rec.label.mean_force = parse_double_field(csv, r, cf);
        rec.label.mean_velocity = parse_double_field(csv, r, cv);
        rec.label.power = parse_double_field(csv, r, cpow);
        const std::string& valid = csv.rows[r][cvalid];
        if (valid != "0" && valid != "1") {
            csv.fail_row(r, "valid must be 0 or 1");
        }
        rec.label.valid = valid == "1";
        try {
            rec.label.reason = parse_reject_reason(csv.rows[r][creason]);
        } catch (const Error&) {
            csv.fail_row(r, "unknown reason '" + csv.rows[r][creason] + "'");
        }
        if (rec.label.valid != (rec.label.reason == RejectReason::None)) {
            csv.fail_row(r, "valid flag and reason disagree");
        }
        if (cact) {
            rec.activity = csv.rows[r][*cact];
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void write_features_csv(const fs::path& path, const FeatureTable& table) {
    table.validate();
    auto out = open_out(path);
    out << csv_preamble("features-" + std::string(to_string(table.task)));
    out << "participant,activity,window_start_s,label";
    for (std::size_t c = 0; c < table.dims; ++c) {
        out << ",f" << c;
    }
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        check_text_field(table.participants[r], "participant");
        check_text_field(table.activities[r], "activity");
        out << table.participants[r] << ',' << table.activities[r] << ',' << format_double(table.window_starts[r])
            << ',' << format_double(table.labels[r]);
        for (double v : table.row(r)) {
            out << ',' << format_double(v);
        }
        out << '\n';
    }
}

FeatureTable read_features_csv(const fs::path& path) {
    std::string kind;
    {
        std::ifstream in(path);
        if (!in) {
            throw Error(ErrorKind::MissingFile, path.string() + " does not exist");
        }
        std::string first;
        std::getline(in, first);
        const std::string prefix = "# scratchq features-";
        if (first.rfind(prefix, 0) == 0) {
            kind = first.substr(2 + std::string("scratchq ").size(), first.find(' ', prefix.size()) - 11);
        }
    }
    if (kind != "features-intensity" && kind != "features-detection") {
        throw Error(ErrorKind::SchemaMismatch, path.string() + ":1: not a scratchq features file");
    }
    const CsvTable csv = read_csv(path, kind);
    FeatureTable table;
    table.task = kind == "features-intensity" ? Task::Intensity : Task::Detection;
    const std::size_t cp = csv.column("participant");
    const std::size_t ca = csv.column("activity");
    const std::size_t cw = csv.column("window_start_s");
    const std::size_t cl = csv.column("label");
    const std::size_t first_feature = csv.column("f0");
    table.dims = csv.header.size() - first_feature;
    if (table.dims != feature_layout(table.task).size()) {
        throw Error(ErrorKind::SchemaMismatch, path.string() + ": " + std::to_string(table.dims) +
                                                   " feature columns do not match the " +
                                                   std::string(to_string(table.task)) + " layout");
    }
    std::vector<double> row(table.dims);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        for (std::size_t c = 0; c < table.dims; ++c) {
            row[c] = parse_double_field(csv, r, first_feature + c);
        }
        const double label = parse_double_field(csv, r, cl, true);
        if (table.task == Task::Detection && !is_missing(label) && label != 0.0 && label != 1.0) {
            csv.fail_row(r, "detection labels must be 0 or 1");
        }
        table.append(csv.rows[r][cp], csv.rows[r][ca], parse_double_field(csv, r, cw), label, row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

std::string_view to_string(SessionKind k) {
    switch (k) {
    case SessionKind::IntensityStudy1: return "intensity-study1";
    case SessionKind::ValidationStudy2: return "validation-study2";
    case SessionKind::Detection: return "detection";
    }
    return "";
}

SessionKind parse_session_kind(std::string_view s) {
    for (auto k : {SessionKind::IntensityStudy1, SessionKind::ValidationStudy2, SessionKind::Detection}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorKind::SchemaMismatch, "unknown session kind '" + std::string(s) + "'");
}

SessionManifest parse_manifest(const json& j, const fs::path& base_dir) {
    try {
        SessionManifest m;
        if (!j.contains("schema_version")) {
            throw Error(ErrorKind::SchemaMismatch, "manifest lacks schema_version");
        }
        m.schema_version = j.at("schema_version").get<int>();
        if (m.schema_version != kSchemaVersion) {
            throw Error(ErrorKind::SchemaMismatch,
                        "unsupported manifest schema_version " + std::to_string(m.schema_version));
        }
        m.participant_id = j.at("participant_id").get<std::string>();
        check_text_field(m.participant_id, "participant");
        m.kind = parse_session_kind(j.at("session_kind").get<std::string>());
        const auto& streams = j.at("streams");
        auto resolve = [&](const std::string& p) {
            const fs::path path(p);
            return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        };
        m.contact_mic = resolve(streams.at("contact_mic").get<std::string>());
        m.accel_z = resolve(streams.at("accel_z").get<std::string>());
        if (streams.contains("tablet")) {
            m.tablet = resolve(streams.at("tablet").get<std::string>());
        }
        for (const auto& a : j.value("annotations", json::array())) {
            Annotation ann;
            ann.activity = a.at("activity").get<std::string>();
            check_text_field(ann.activity, "activity");
            ann.start_s = a.at("start_s").get<double>();
            ann.end_s = a.at("end_s").get<double>();
            if (!(ann.end_s > ann.start_s)) {
                throw Error(ErrorKind::SchemaMismatch, "annotation '" + ann.activity + "' has end_s <= start_s");
            }
            if (a.contains("scratch")) {
                ann.scratch = a.at("scratch").get<bool>();
            }
            ann.tablet = a.value("tablet", m.kind == SessionKind::IntensityStudy1);
            if (a.contains("set")) {
                ann.set = a.at("set").get<int>();
            }
            if (a.contains("level")) {
                ann.level = a.at("level").get<int>();
            }
            m.annotations.push_back(std::move(ann));
        }
        auto sorted = m.annotations;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i].start_s < sorted[i - 1].end_s) {
                throw Error(ErrorKind::SchemaMismatch,
                            "annotations '" + sorted[i - 1].activity + "' and '" + sorted[i].activity + "' overlap");
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("manifest: ") + e.what());
    }
}

SessionManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingFile, path.string() + " does not exist");
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, path.string() + ": " + e.what());
    }
    auto m = parse_manifest(j, path.parent_path());
    m.source = path;
    return m;
}

json manifest_to_json(const SessionManifest& m) {
    json j;
    j["schema_version"] = m.schema_version;
    j["participant_id"] = m.participant_id;
    j["session_kind"] = std::string(to_string(m.kind));
    j["streams"]["contact_mic"] = m.contact_mic.string();
    j["streams"]["accel_z"] = m.accel_z.string();
    if (m.tablet) {
        j["streams"]["tablet"] = m.tablet->string();
    }
    j["annotations"] = json::array();
    for (const auto& a : m.annotations) {
        json ja{{"activity", a.activity}, {"start_s", a.start_s}, {"end_s", a.end_s}, {"tablet", a.tablet}};
        if (a.scratch) {
            ja["scratch"] = *a.scratch;
        }
        if (a.set) {
            ja["set"] = *a.set;
        }
        if (a.level) {
            ja["level"] = *a.level;
        }
        j["annotations"].push_back(std::move(ja));
    }
    return j;
}

Session load_session(const SessionManifest& manifest) {
    if (manifest.schema_version != kSchemaVersion) {
        throw Error(ErrorKind::SchemaMismatch, "unsupported manifest schema_version");
    }
    for (const auto* p : {&manifest.contact_mic, &manifest.accel_z}) {
        if (!fs::exists(*p)) {
            throw Error(ErrorKind::MissingFile, p->string() + " does not exist");
        }
    }
    if (manifest.tablet && !fs::exists(*manifest.tablet)) {
        throw Error(ErrorKind::MissingFile, manifest.tablet->string() + " does not exist");
    }
    Session s;
    s.manifest = manifest;
    s.contact_mic = read_sensor_csv(manifest.contact_mic, Channel::ContactMic);
    s.accel_z = read_sensor_csv(manifest.accel_z, Channel::AccelZ);
    if (manifest.tablet) {
        s.tablet = read_tablet_csv(*manifest.tablet);
    }
    return s;
}

ContactTrace slice_trace(const ContactTrace& trace, double begin_s, double end_s) {
    ContactTrace out;
    out.start_s = begin_s;
    out.block_length_s = end_s - begin_s;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace.t[i] >= begin_s && trace.t[i] < end_s) {
            out.t.push_back(trace.t[i]);
            out.x.push_back(trace.x[i]);
            out.y.push_back(trace.y[i]);
            out.force.push_back(trace.force[i]);
        }
    }
    return out;
}

namespace {

// Label window containing the ring window's midpoint; among overlapping label
// windows the one whose own midpoint is closest wins.
const PowerLabel* join_label(const std::vector<PowerLabel>& labels, double window_start, double window_s) {
    const double mid = window_start + 0.5 * window_s;
    const PowerLabel* best = nullptr;
    double best_dist = 0.0;
    for (const auto& l : labels) {
        if (mid < l.window_start - 1e-9 || mid >= l.window_start + window_s - 1e-9) {
            continue;
        }
        const double dist = std::abs(l.window_start + 0.5 * window_s - mid);
        if (best == nullptr || dist < best_dist) {
            best = &l;
            best_dist = dist;
        }
    }
    return best;
}

} // namespace

SessionWindows session_windows(const Session& session, Task task, const LabelingOptions& options,
                               bool keep_rejected) {
    SessionWindows out;
    const auto& m = session.manifest;
    std::vector<Annotation> blocks = m.annotations;
    const bool whole = blocks.empty();
    if (whole) {
        Annotation all;
        all.start_s = kMissing;
        all.end_s = kMissing;
        all.tablet = session.tablet.has_value() && task == Task::Intensity;
        blocks.push_back(all);
    }
    std::sort(blocks.begin(), blocks.end(), [](const Annotation& a, const Annotation& b) { return a.start_s < b.start_s; });

    for (const auto& block : blocks) {
        WindowingOptions wopt;
        wopt.stride_s = options.stride_s;
        wopt.begin_s = block.start_s;
        wopt.end_s = block.end_s;
        wopt.participant_id = m.participant_id;
        wopt.activity = block.activity;
        auto windows = window_stream(session.contact_mic, session.accel_z, wopt);

        std::vector<PowerLabel> labels;
        const bool labelled_by_tablet = task == Task::Intensity && block.tablet && session.tablet.has_value();
        if (labelled_by_tablet) {
            const ContactTrace slice = whole ? *session.tablet
                                             : slice_trace(*session.tablet, block.start_s, block.end_s);
            labels = label_block(slice, options);
            for (const auto& l : labels) {
                out.tablet_labels.push_back({m.participant_id, l, block.activity});
            }
        }
        for (auto& w : windows) {
            std::optional<double> label;
            if (labelled_by_tablet) {
                const PowerLabel* l = join_label(labels, w.start_time(), options.window_s);
                if (l == nullptr || !l->valid) {
                    ++out.rejected;
                    if (!keep_rejected) {
                        continue;
                    }
                } else {
                    label = l->power;
                }
            } else if (task == Task::Detection && block.scratch) {
                label = *block.scratch ? 1.0 : 0.0;
            }
            out.windows.push_back({std::move(w), label, block.set, block.level});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

json config_to_json(const MlpConfig& c) {
    return json{{"layer_sizes", c.layer_sizes},
                {"output_activation", std::string(to_string(c.output_activation))},
                {"dropout", c.dropout},
                {"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"loss", std::string(to_string(c.loss))},
                {"seed", c.seed},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_epsilon", c.adam_epsilon}};
}

MlpConfig config_from_json(const json& j, MlpConfig c) {
    if (!j.is_object()) {
        throw Error(ErrorKind::InvalidConfig, "model config must be a JSON object");
    }
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "layer_sizes") {
                c.layer_sizes = value.get<std::vector<std::size_t>>();
            } else if (key == "output_activation") {
                c.output_activation = parse_output_activation(value.get<std::string>());
            } else if (key == "dropout") {
                c.dropout = value.get<double>();
            } else if (key == "learning_rate") {
                c.learning_rate = value.get<double>();
            } else if (key == "batch_size") {
                c.batch_size = value.get<std::size_t>();
            } else if (key == "epochs") {
                c.epochs = value.get<std::size_t>();
            } else if (key == "loss") {
                c.loss = parse_loss_kind(value.get<std::string>());
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "adam_beta1") {
                c.adam_beta1 = value.get<double>();
            } else if (key == "adam_beta2") {
                c.adam_beta2 = value.get<double>();
            } else if (key == "adam_epsilon") {
                c.adam_epsilon = value.get<double>();
            } else {
                throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

double ModelArtifact::predict(std::span<const double> raw_features) const {
    const auto scaled = scaler.transform(raw_features);
    return network.predict(scaled);
}

std::uint32_t checksum(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

namespace {

constexpr char kMagic[8] = {'S', 'C', 'R', 'Q', 'M', 'O', 'D', 'L'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorKind::SchemaMismatch, "model payload ends early");
        }
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_model(const ModelArtifact& artifact) {
    Writer w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kModelFormatVersion);
    w.put<std::uint8_t>(artifact.task == Task::Intensity ? 0 : 1);
    const std::string config = config_to_json(artifact.network.config()).dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
    w.put_bytes(config.data(), config.size());
    w.put<std::uint64_t>(artifact.scaler.dims());
    for (double v : artifact.scaler.mins()) {
        w.put<double>(v);
    }
    for (double v : artifact.scaler.maxs()) {
        w.put<double>(v);
    }
    const auto& net = artifact.network;
    w.put<std::uint32_t>(static_cast<std::uint32_t>(net.layers()));
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const auto& weight = net.weight(l);
        w.put<std::uint64_t>(static_cast<std::uint64_t>(weight.rows()));
        w.put<std::uint64_t>(static_cast<std::uint64_t>(weight.cols()));
        for (Eigen::Index r = 0; r < weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < weight.cols(); ++c) {
                w.put<double>(weight(r, c));
            }
        }
        for (Eigen::Index r = 0; r < weight.rows(); ++r) {
            w.put<double>(net.bias(l)(r, 0));
        }
    }
    w.put<std::uint32_t>(checksum(w.bytes));
    return std::move(w.bytes);
}

ModelArtifact decode_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) + 2 * sizeof(std::uint32_t)) {
        throw Error(ErrorKind::ChecksumFailure, "model file is truncated");
    }
    const auto body = bytes.first(bytes.size() - sizeof(std::uint32_t));
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + body.size(), sizeof(stored));
    if (checksum(body) != stored) {
        throw Error(ErrorKind::ChecksumFailure, "model checksum does not match its contents");
    }
    Reader r(body);
    const auto magic = r.take(sizeof(kMagic));
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
        throw Error(ErrorKind::SchemaMismatch, "not a scratchq model file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kModelFormatVersion) {
        throw Error(ErrorKind::VersionUnsupported, "model format version " + std::to_string(version));
    }
    ModelArtifact a;
    const auto task = r.get<std::uint8_t>();
    if (task > 1) {
        throw Error(ErrorKind::SchemaMismatch, "unknown task tag");
    }
    a.task = task == 0 ? Task::Intensity : Task::Detection;
    const auto config_len = r.get<std::uint32_t>();
    const auto config_bytes = r.take(config_len);
    MlpConfig config;
    try {
        config = config_from_json(json::parse(config_bytes.begin(), config_bytes.end()), MlpConfig{});
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("model config: ") + e.what());
    }
    const auto dims = r.get<std::uint64_t>();
    std::vector<double> mins(dims);
    std::vector<double> maxs(dims);
    for (auto& v : mins) {
        v = r.get<double>();
    }
    for (auto& v : maxs) {
        v = r.get<double>();
    }
    a.scaler = MinMaxScaler(std::move(mins), std::move(maxs));
    const auto layers = r.get<std::uint32_t>();
    ParamList params;
    for (std::uint32_t l = 0; l < layers; ++l) {
        const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
        const auto cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                w(i, j) = r.get<double>();
            }
        }
        Eigen::MatrixXd b(rows, 1);
        for (Eigen::Index i = 0; i < rows; ++i) {
            b(i, 0) = r.get<double>();
        }
        params.push_back(std::move(w));
        params.push_back(std::move(b));
    }
    if (!r.done()) {
        throw Error(ErrorKind::SchemaMismatch, "trailing bytes in model payload");
    }
    a.network = Network(config, std::move(params));
    if (a.scaler.dims() != a.network.input_size()) {
        throw Error(ErrorKind::ShapeMismatch, "scaler and network input sizes differ");
    }
    return a;
}

void save_model(const fs::path& path, const ModelArtifact& artifact) {
    const auto bytes = encode_model(artifact);
    auto out = open_out(path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorKind::MissingFile, "failed writing " + path.string());
    }
}

ModelArtifact load_model(const fs::path& path, std::optional<Task> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::MissingFile, path.string() + " does not exist");
    }
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ModelArtifact a = decode_model(bytes);
    if (expected && a.task != *expected) {
        throw Error(ErrorKind::TaskMismatch, path.string() + " holds a " + std::string(to_string(a.task)) +
                                                 " model, expected " + std::string(to_string(*expected)));
    }
    return a;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
    auto out = open_out(path);
    out << csv_preamble("history") << "epoch,train_loss,eval_loss\n";
    for (const auto& h : history) {
        out << h.epoch << ',' << format_double(h.train_loss) << ',' << format_double(h.eval_loss) << '\n';
    }
}

} // namespace scratchq
